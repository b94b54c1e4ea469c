"""Command-line front end: ``vslnet {synth,train,eval,ablate,gradcheck}``.

Every command takes an optional JSON config (``--config``), applies flag
overrides on top, writes the effective config to ``<out>/config.json`` and a
``<out>/run.json`` manifest (command, config, sha256 of every output), so a run
can be repeated with ``vslnet <command> --config <out>/config.json``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


from .data import (
    SPLITS,
    SyntheticConfig,
    collate,
    generate_synthetic_dataset,
    load_dataset_dir,
    write_synthetic_dataset,
)
from .errors import AnnotationError, ConfigError, NumericalError, ParseError, UsageError
from .evaluation import Prediction, evaluate, predict, write_report
from .model import (
    ATTENTIONS,
    ENCODERS,
    VARIANTS,
    ModelConfig,
    VSLModel,
    format_alpha,
    model_from_checkpoint,
    parse_alpha,
    save_checkpoint,
    total_loss,
)
from .numerics import gradient_errors
from .seeding import sub_rng, sub_seed
from .training import TrainConfig, train

log = logging.getLogger("vslnet")

DEFAULT_ALPHAS = (0.0, 0.05, 0.1, 0.2, 0.5, 1.0, math.inf)
GRADCHECK_TOL = 1e-4
# video_dim / query_dim come from the data; dropout comes from the train section
_DERIVED_MODEL_KEYS = ("video_dim", "query_dim", "dropout")
#: override value that resets a key to null (a plain None means "not given")
CLEAR = object()


@dataclass(frozen=True)
class AblateConfig:
    grid: bool = True
    grid_variant: str = "base"
    alphas: tuple | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.grid_variant not in VARIANTS:
            raise ConfigError(f"grid_variant must be one of {VARIANTS}")
        if self.alphas is not None:
            object.__setattr__(self, "alphas", tuple(parse_alpha(a) for a in self.alphas))
        if not self.grid and not self.alphas:
            raise ConfigError("ablate needs the grid, an alpha list, or both")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def to_dict(self):
        d = asdict(self)
        if self.alphas is not None:
            d["alphas"] = [format_alpha(a) for a in self.alphas]
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    data_dir: str | None = None
    n_max: int = 128
    split: str = "test"
    checkpoint: str | None = None
    predictions: str | None = None
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def __post_init__(self):
        bad = set(self.model) & set(_DERIVED_MODEL_KEYS)
        if bad:
            raise ConfigError(f"model keys {sorted(bad)} are derived (data dims, train.dropout)")
        ModelConfig.from_dict(self.model)  # validates names and values early
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}")
        if self.n_max < 1:
            raise ConfigError("n_max must be positive")
        for name in ("data_dir", "checkpoint", "predictions"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{name} {path!r} does not exist")

    def model_config(self, video_dim, query_dim, **overrides) -> ModelConfig:
        d = {**self.model, **overrides}
        return ModelConfig.from_dict(
            {**d, "video_dim": video_dim, "query_dim": query_dim, "dropout": self.train.dropout}
        )

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        model = dict(self.model)
        if "alpha" in model:
            model["alpha"] = format_alpha(parse_alpha(model["alpha"]))
        return {
            "seed": self.seed,
            "out": self.out,
            "data_dir": self.data_dir,
            "n_max": self.n_max,
            "split": self.split,
            "checkpoint": self.checkpoint,
            "predictions": self.predictions,
            "model": model,
            "train": self.train.to_dict(),
            "synthetic": asdict(self.synthetic),
            "ablate": self.ablate.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if "train" in d:
                d["train"] = TrainConfig.from_dict(d["train"])
            if "synthetic" in d:
                d["synthetic"] = _synthetic_from_dict(d["synthetic"])
            if "ablate" in d:
                d["ablate"] = _ablate_from_dict(d["ablate"])
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e


def _synthetic_from_dict(d):
    known = {f.name for f in fields(SyntheticConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
    try:
        cfg = SyntheticConfig(**d)
        cfg.split_sizes()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg


def _ablate_from_dict(d):
    known = {f.name for f in fields(AblateConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown ablate config keys: {sorted(unknown)}")
    return AblateConfig(**d)


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Config file values, then overrides; nested keys use dotted names (``train.epochs``).

    ``None`` overrides are ignored and :data:`CLEAR` sets the key to null. An
    epochs override also caps the file's patience unless patience is overridden too.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file {path!r} not found") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        target = raw.setdefault(section, {}) if section else raw
        target[name] = None if value is CLEAR else value
    epochs = overrides.get("train.epochs")
    if epochs is not None and overrides.get("train.patience") is None:
        train = raw["train"]
        train["patience"] = min(train.get("patience", TrainConfig.patience), epochs)
    return ExperimentConfig.from_dict(raw)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {str(out)!r}: {e}") from e
    return out


def _finish(command, cfg: ExperimentConfig, out: Path, outputs):
    _write_json(out / "config.json", cfg.to_dict())
    files = {str(p.relative_to(out)): _sha256(p) for p in sorted(outputs)}
    _write_json(out / "run.json", {"command": command, "config": cfg.to_dict(), "outputs": files})


def load_data(cfg: ExperimentConfig) -> dict:
    """Datasets per split: from ``data_dir`` if set, else generated in memory from ``cfg.synthetic``."""
    if cfg.data_dir is not None:
        return load_dataset_dir(cfg.data_dir, cfg.n_max, seed=sub_seed(cfg.seed, "data"))
    return generate_synthetic_dataset(cfg.synthetic).datasets(cfg.n_max)


def _build_model(cfg: ExperimentConfig, data, **overrides) -> VSLModel:
    train_set = data["train"]
    table = train_set.table
    mcfg = cfg.model_config(train_set.feature_dim, table.vectors.shape[1], **overrides)
    return VSLModel(mcfg, table.vectors, sub_rng(cfg.seed, "init"))


# -- synth -------------------------------------------------------------------


def cmd_synth(cfg: ExperimentConfig) -> dict:
    out = _prepare_out(cfg.out)
    data = generate_synthetic_dataset(cfg.synthetic)
    manifest = write_synthetic_dataset(data, out)
    outputs = [out / name for name in manifest["files"]] + [out / "manifest.json"]
    _finish("synth", cfg, out, outputs)
    print(f"wrote {cfg.synthetic.num_videos} videos to {out} "
          f"(splits {manifest['split_sizes']}, seed {manifest['seed']})")
    return manifest


# -- train -------------------------------------------------------------------


def run_training(cfg: ExperimentConfig, out: Path, data=None, **model_overrides):
    """Train one model into ``out``; returns (model, TrainResult, data)."""
    data = load_data(cfg) if data is None else data
    model = _build_model(cfg, data, **model_overrides)
    log_path = out / "train_log.jsonl"
    lines = []
    result = train(model, data["train"], data["val"], cfg.train_config(),
                   on_epoch=lambda e: lines.append(json.dumps(e, sort_keys=True)))
    log_path.write_text("".join(line + "\n" for line in lines))
    extra = {"best_epoch": result.best_epoch, "best_val_miou": result.best_val_miou, "seed": cfg.seed}
    save_checkpoint(out / "checkpoint.vslc", model, extra)
    return model, result, data


def cmd_train(cfg: ExperimentConfig):
    out = _prepare_out(cfg.out)
    model, result, _ = run_training(cfg, out)
    best = result.log[result.best_epoch - 1]
    _write_json(out / "final_metrics.json", best)
    _finish("train", cfg, out, [out / "train_log.jsonl", out / "checkpoint.vslc", out / "final_metrics.json"])
    print(f"{model.cfg.variant}: {model.parameter_count()} parameters, "
          f"{len(result.log)} epochs, best epoch {result.best_epoch}")
    print("validation " + " ".join(f"{k}={best[k]:.2f}" for k in
                                   ("val_miou", "val_r1_03", "val_r1_05", "val_r1_07")))
    return result


# -- eval --------------------------------------------------------------------


def read_predictions(path) -> list:
    preds = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                preds.append(Prediction.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{path}:{lineno}: bad prediction ({e})") from e
    return preds


def write_predictions(path, predictions):
    with open(path, "w") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")


def align_predictions(predictions, samples) -> list:
    """Order predictions like ``samples``: positionally when the ids line up, else by unique video id."""
    ids = [s.video_id for s in samples]
    if [p.video_id for p in predictions] == ids:
        return list(predictions)
    by_id = {}
    for p in predictions:
        if p.video_id in by_id:
            raise UsageError(f"duplicate prediction for {p.video_id} and order does not match the split")
        by_id[p.video_id] = p
    missing = [v for v in ids if v not in by_id]
    if missing or len(by_id) != len(ids):
        raise UsageError(f"predictions do not cover the split ({len(missing)} missing)")
    return [by_id[v] for v in ids]


def cmd_eval(cfg: ExperimentConfig):
    if (cfg.checkpoint is None) == (cfg.predictions is None):
        raise UsageError("eval needs exactly one of --checkpoint or --predictions")
    out = _prepare_out(cfg.out)
    data = load_data(cfg)
    samples = data[cfg.split]
    if cfg.predictions is not None:
        preds = align_predictions(read_predictions(cfg.predictions), samples)
    else:
        model = model_from_checkpoint(cfg.checkpoint, samples.table.vectors)
        if model.cfg.video_dim != samples.feature_dim:
            raise ConfigError(
                f"checkpoint expects {model.cfg.video_dim}-d features, data has {samples.feature_dim}"
            )
        preds = predict(model, samples)
    report = evaluate(preds, samples)
    write_report(report, out, preds)
    write_predictions(out / "predictions.jsonl", preds)
    names = ["metrics.json", "iou_histogram.csv", "length_error_histogram.csv", "per_sample.csv",
             "predictions.jsonl"]
    _finish("eval", cfg, out, [out / n for n in names])
    d = report.to_dict()
    print(f"{cfg.split}: n={d['count']} mIoU={d['miou']:.2f} R@1 IoU>0.3={d['r1_03']:.2f} "
          f"IoU>0.5={d['r1_05']:.2f} IoU>0.7={d['r1_07']:.2f}")
    return report


# -- ablate ------------------------------------------------------------------

ABLATE_COLUMNS = (
    "study", "variant", "encoder", "attention", "alpha", "seed", "epochs_run", "best_epoch",
    "val_miou", "r1_03", "r1_05", "r1_07", "miou",
)


def ablation_cells(cfg: ExperimentConfig) -> list:
    cells = []
    if cfg.ablate.grid:
        for enc in ("recurrent", "cmf"):
            for att in ("cat", "cqa"):
                cells.append(("grid", {"variant": cfg.ablate.grid_variant, "encoder": enc, "attention": att}))
    for a in cfg.ablate.alphas or ():
        cells.append(("alpha", {"variant": "net", "alpha": a}))
    return cells


def _cell_name(study, overrides):
    parts = [study] + [f"{k}-{format_alpha(v) if k == 'alpha' else v}" for k, v in sorted(overrides.items())]
    return "_".join(parts)


def _run_cell(cfg: ExperimentConfig, study, overrides):
    out = _prepare_out(Path(cfg.out) / "cells" / _cell_name(study, overrides))
    model, result, data = run_training(cfg, out, **overrides)
    report = evaluate(predict(model, data[cfg.split]), data[cfg.split])
    m = model.cfg
    return {
        "study": study,
        "variant": m.variant,
        "encoder": m.encoder,
        "attention": m.attention,
        "alpha": format_alpha(m.alpha) if m.variant == "net" else "",
        "seed": cfg.seed,
        "epochs_run": len(result.log),
        "best_epoch": result.best_epoch,
        "val_miou": result.best_val_miou,
        "r1_03": report.r1[0.3],
        "r1_05": report.r1[0.5],
        "r1_07": report.r1[0.7],
        "miou": report.miou,
    }


def cmd_ablate(cfg: ExperimentConfig) -> list:
    out = _prepare_out(cfg.out)
    cells = ablation_cells(cfg)
    if cfg.ablate.jobs > 1:
        # cells share nothing mutable; each writes only its own subdirectory
        with ProcessPoolExecutor(cfg.ablate.jobs) as pool:
            rows = list(pool.map(_run_cell, [cfg] * len(cells), *zip(*cells)))
    else:
        rows = [_run_cell(cfg, study, ov) for study, ov in cells]
    path = out / "ablation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ABLATE_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in row.items()})
    _finish("ablate", cfg, out, [path])
    for row in rows:
        print(f"{row['study']:5s} {row['variant']:4s} {row['encoder']:9s} {row['attention']:3s} "
              f"alpha={row['alpha'] or '-':5s} mIoU={row['miou']:.2f} R@0.5={row['r1_05']:.2f}")
    return rows


# -- gradcheck ---------------------------------------------------------------


def tiny_problem(seed=0):
    """One sample with n=4 feature rows and m=3 query tokens."""
    syn = generate_synthetic_dataset(SyntheticConfig(
        num_videos=1, n_range=(4, 4), feature_dim=6, embedding_dim=5, vocab_size=10,
        query_len=(3, 3), split_counts=(1, 0, 0), seed=seed,
    ))
    return syn.datasets()["train"]


def gradcheck_variant(variant, encoder="cmf", attention="cqa", alpha=0.1, seed=0) -> dict:
    data = tiny_problem(seed)
    batch = collate(list(data.samples), alpha=alpha)
    # two conv layers still exercise stacking; four would double the finite-difference cost
    cfg = ModelConfig(video_dim=data.feature_dim, query_dim=data.table.vectors.shape[1], hidden=8,
                      heads=2, conv_layers=2, dropout=0.0, alpha=alpha, variant=variant, encoder=encoder,
                      attention=attention)
    model = VSLModel(cfg, data.table.vectors, sub_rng(seed, "init"))

    def loss():
        return total_loss(model.forward_batch(batch), batch.starts, batch.ends, batch.highlight, variant)

    return gradient_errors(loss, model.params)


def cmd_gradcheck(cfg: ExperimentConfig) -> dict:
    out = _prepare_out(cfg.out)
    model = ModelConfig.from_dict(cfg.model)
    report, worst = {}, 0.0
    for variant in VARIANTS:
        errs = gradcheck_variant(variant, model.encoder, model.attention, model.alpha, cfg.seed)
        report[variant] = errs
        for name, err in errs.items():
            status = "ok" if err < GRADCHECK_TOL else "FAIL"
            print(f"{variant:4s} {name:24s} {err:.3e} {status}")
        vmax = max(errs.values())
        worst = max(worst, vmax)
        print(f"{variant:4s} max relative error {vmax:.3e} over {len(errs)} parameter groups")
    passed = worst < GRADCHECK_TOL
    _write_json(out / "gradcheck.json", {"tolerance": GRADCHECK_TOL, "passed": passed, "errors": report})
    _finish("gradcheck", cfg, out, [out / "gradcheck.json"])
    print("PASS" if passed else "FAIL")
    return {"passed": passed, "max_error": worst, "errors": report}


def _gradcheck_command(cfg: ExperimentConfig):
    result = cmd_gradcheck(cfg)
    if not result["passed"]:
        raise NumericalError(f"gradient check failed: max relative error {result['max_error']:.3e}")
    return result


# -- entry point -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _alphas(text):
    return [parse_alpha(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vslnet", description="span-based video localization on numpy")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (synth: generation seed)")
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--alpha", type=parse_alpha, help="extension ratio, a number or inf")
    common.add_argument("--encoder", choices=ENCODERS)
    common.add_argument("--attention", choices=ATTENTIONS)
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help="dataset directory (default: in-memory synthetic)")
    common.add_argument("--epochs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--num-videos", type=int)
    sub.add_parser("train", parents=[common], help="train one model")
    e = sub.add_parser("eval", parents=[common], help="score a checkpoint or a predictions file")
    e.add_argument("--checkpoint")
    e.add_argument("--predictions")
    e.add_argument("--split", choices=SPLITS)
    a = sub.add_parser("ablate", parents=[common], help="module grid and/or alpha sweep")
    a.add_argument("--alphas", nargs="?", const=DEFAULT_ALPHAS, type=_alphas,
                   help="comma list, e.g. 0,0.1,inf; bare flag sweeps 0,0.05,0.1,0.2,0.5,1,inf")
    a.add_argument("--no-grid", action="store_true", help="skip the encoder x attention grid")
    a.add_argument("--jobs", type=int)
    sub.add_parser("gradcheck", parents=[common], help="finite-difference check on a tiny model")
    return p


def config_from_args(args) -> ExperimentConfig:
    ov = {
        "out": args.out,
        "data_dir": args.data,
        "model.encoder": args.encoder,
        "model.attention": args.attention,
        "model.alpha": None if args.alpha is None else format_alpha(args.alpha),
        "train.epochs": args.epochs,
    }
    if args.command == "synth":
        ov["synthetic.seed"] = args.seed
        ov["synthetic.num_videos"] = args.num_videos
        if args.num_videos is not None:
            ov["synthetic.split_counts"] = CLEAR  # counts would no longer add up
    else:
        ov["seed"] = args.seed
    if args.command == "ablate":
        ov["ablate.grid_variant"] = args.variant
        ov["ablate.alphas"] = None if args.alphas is None else [format_alpha(a) for a in args.alphas]
        ov["ablate.grid"] = False if args.no_grid else None
        ov["ablate.jobs"] = args.jobs
    else:
        ov["model.variant"] = args.variant
    if args.command == "eval":
        ov.update(checkpoint=args.checkpoint, predictions=args.predictions, split=args.split)
    return load_config(args.config, **ov)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": _gradcheck_command,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        COMMANDS[args.command](cfg)
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    except (ConfigError, UsageError, ParseError, AnnotationError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
