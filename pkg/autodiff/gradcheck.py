"""
Central-difference gradient checker.

The objective is a zero-argument callable returning a scalar Tensor built from
the parameters being checked; parameters are perturbed in place one scalar at
a time and restored afterwards.
"""

from typing import Callable, Dict, Iterable, Optional, Union

import numpy as np

from autodiff.tensor import Parameter, Tensor, no_grad
from errors import NumericError

EPSILON = 1e-8


def _named(params) -> Dict[str, Tensor]:
    if isinstance(params, dict):
        return dict(params)
    named = {}
    for i, p in enumerate(params):
        named[getattr(p, 'name', '') or f'param{i}'] = p
    return named


def _evaluate(f: Callable[[], Tensor]) -> float:
    with no_grad():
        out = f()
    if out.size != 1:
        raise NumericError(f"objective must be scalar, got shape {out.shape}")
    return float(out.item())


def grad_check_report(f: Callable[[], Tensor],
                      params: Union[Dict[str, Tensor], Iterable[Tensor]],
                      h: float = 1e-5,
                      max_entries: Optional[int] = None,
                      atol: float = 0.0,
                      seed: int = 0) -> dict:
    """
    Compare autodiff gradients with central differences.

    Args:
        f: Objective, rebuilt from the current parameter values on every call
        params: Parameters to check (list or name -> tensor mapping)
        h: Finite-difference step
        max_entries: Check at most this many coordinates per tensor (seeded sample)
        atol: Discrepancies at or below this are treated as round-off
        seed: Seed for coordinate sampling

    Returns:
        Dict with max_rel_error, worst parameter name and index, entries checked
    """
    named = _named(params)
    for name, p in named.items():
        if p.dtype != np.float64:
            raise NumericError(f"gradient check needs float64 parameters, '{name}' is {p.dtype}")

    first = _evaluate(f)
    if _evaluate(f) != first:
        raise NumericError("objective is not deterministic: repeated evaluation differs")

    for p in named.values():
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in named.items()}

    sampler = np.random.default_rng(seed)
    worst = {'max_rel_error': 0.0, 'param': None, 'index': None, 'checked': 0}

    for name, p in named.items():
        if max_entries is not None and p.size > max_entries:
            flat_indices = sampler.choice(p.size, size=max_entries, replace=False)
        else:
            flat_indices = range(p.size)

        for flat in flat_indices:
            idx = np.unravel_index(int(flat), p.shape)
            original = p.data[idx]
            p.data[idx] = original + h
            plus = _evaluate(f)
            p.data[idx] = original - h
            minus = _evaluate(f)
            p.data[idx] = original

            fd = (plus - minus) / (2.0 * h)
            ad = float(analytic[name][idx])
            diff = abs(fd - ad)
            rel = 0.0 if diff <= atol else diff / max(abs(fd), abs(ad), EPSILON)
            worst['checked'] += 1
            if rel > worst['max_rel_error']:
                worst.update(max_rel_error=rel, param=name, index=tuple(int(i) for i in idx))

    if _evaluate(f) != first:
        raise NumericError("objective changed after the check: a parameter was not restored")
    return worst


def grad_check(f: Callable[[], Tensor], params, h: float = 1e-5,
               max_entries: Optional[int] = None, atol: float = 0.0, seed: int = 0) -> float:
    """Maximum relative error between autodiff and central-difference gradients"""
    return grad_check_report(f, params, h=h, max_entries=max_entries,
                             atol=atol, seed=seed)['max_rel_error']


def check_param(name: str, value, dtype=np.float64) -> Parameter:
    return Parameter(np.array(value, dtype=dtype), name=name)
