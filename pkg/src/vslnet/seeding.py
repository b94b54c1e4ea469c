"""Named sub-seeds derived from one master seed."""
import zlib

import numpy as np


def sub_seed(master: int, name: str, *extra: int) -> int:
    seq = np.random.SeedSequence([int(master), zlib.crc32(name.encode()), *map(int, extra)])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def sub_rng(master: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(sub_seed(master, name, *extra))
