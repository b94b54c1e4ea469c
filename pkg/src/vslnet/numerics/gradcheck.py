"""Central finite differences as an independent check on ``Tensor.backward``.

The difference quotient (f(x + eps) - f(x - eps)) / 2 eps loses about
|f| * machine_eps / eps to rounding. Gradient components near 1e-9 are common
in a full model, so by default the perturbed evaluations run with parameters
cast to ``np.longdouble`` (80-bit on x86-64), which pushes that rounding floor
three orders of magnitude below the comparison tolerance. The analytic side
is always computed at float64.
"""
from __future__ import annotations

import contextlib

import numpy as np

from .tensor import no_grad


def relative_error(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.abs(a - b) / denom


@contextlib.contextmanager
def _widened(params):
    saved = [p.data for p in params]
    try:
        for p in params:
            p.data = p.data.astype(np.longdouble)
        yield
    finally:
        for p, d in zip(params, saved):
            p.data = d


def numerical_gradient(f, param, eps=1e-5):
    """Central-difference gradient of ``f()`` with respect to ``param.data`` (perturbed in place)."""
    grad = np.zeros(param.data.shape)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().data
            flat[i] = orig - eps
            down = f().data
            flat[i] = orig
            gflat[i] = float((up - down) / (2 * eps))
    return grad


def gradient_errors(f, params, eps=1e-5, extended=True):
    """Max relative error between analytic and numerical gradients, per parameter.

    ``params`` is a mapping name -> Tensor (or a sequence of Tensors). ``f``
    must be deterministic and read the parameters' current values.
    """
    if not isinstance(params, dict):
        params = {(p.name or f"param{i}"): p for i, p in enumerate(params)}
    for p in params.values():
        p.zero_grad()
    f().backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}
    report = {}
    ctx = _widened(list(params.values())) if extended else contextlib.nullcontext()
    with ctx:
        for name, p in params.items():
            numeric = numerical_gradient(f, p, eps)
            report[name] = float(relative_error(analytic[name], numeric).max(initial=0.0))
    return report


def finite_difference_check(f, params, eps=1e-5, extended=True):
    return max(gradient_errors(f, params, eps, extended).values(), default=0.0)
