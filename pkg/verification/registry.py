"""
Registry of invariant checks run by `app.py verify`.

A check is a function taking a seeded numpy Generator and returning an
Outcome. Checks register themselves with @check when their module is
imported; load_checks() imports every checks module.
"""

import importlib
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional

import numpy as np

from autodiff.tensor import default_dtype
from config import Config

MODULES = ('autodiff-core', 'structured-layers', 'rope-math', 'model', 'training')

CHECK_MODULES = (
    'verification.checks_autodiff',
    'verification.checks_layers',
    'verification.checks_rope',
    'verification.checks_model',
    'verification.checks_training',
)

KNOWN_FAULTS = ('tying',)


@dataclass
class Outcome:
    passed: bool
    measured: Optional[float] = None
    allowed: Optional[float] = None
    detail: str = ''


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    measured: Optional[float]
    allowed: Optional[float]
    seed: int
    detail: str
    seconds: float


@dataclass
class _Check:
    module: str
    name: str
    fn: Callable[[np.random.Generator], Outcome]
    seed: int


_REGISTRY: List[_Check] = []
_FAULTS = set()


def within(measured: float, allowed: float, detail: str = '') -> Outcome:
    """Pass when measured <= allowed"""
    measured = float(measured)
    return Outcome(passed=bool(measured <= allowed), measured=measured, allowed=allowed, detail=detail)


def at_least(measured: float, minimum: float, detail: str = '') -> Outcome:
    measured = float(measured)
    return Outcome(passed=bool(measured >= minimum), measured=measured, allowed=minimum, detail=detail)


def holds(condition: bool, detail: str = '') -> Outcome:
    return Outcome(passed=bool(condition), detail=detail)


def check(module: str, name: str, seed: int = 0):
    """Register the decorated function as check `name` of `module`"""
    if module not in MODULES:
        raise ValueError(f"unknown check module {module!r}")

    def register(fn):
        if any(c.module == module and c.name == name for c in _REGISTRY):
            raise ValueError(f"duplicate check {module}/{name}")
        _REGISTRY.append(_Check(module=module, name=name, fn=fn, seed=seed))
        return fn

    return register


def inject_fault(name: str):
    if name not in KNOWN_FAULTS:
        raise ValueError(f"unknown fault {name!r}; known faults: {', '.join(KNOWN_FAULTS)}")
    _FAULTS.add(name)


def clear_faults():
    _FAULTS.clear()


def fault_active(name: str) -> bool:
    return name in _FAULTS


def load_checks():
    for module_name in CHECK_MODULES:
        importlib.import_module(module_name)


def registered(modules: Optional[Iterable[str]] = None) -> List[_Check]:
    load_checks()
    wanted = set(modules) if modules else set(MODULES)
    unknown = wanted - set(MODULES)
    if unknown:
        raise ValueError(f"unknown module filter: {', '.join(sorted(unknown))}")
    return [c for c in _REGISTRY if c.module in wanted]


def run_check(item: _Check) -> CheckResult:
    started = time.perf_counter()
    try:
        with default_dtype(Config.VERIFY_DTYPE):
            outcome = item.fn(np.random.default_rng(item.seed))
    except Exception as e:
        outcome = Outcome(passed=False, detail=f"{type(e).__name__}: {e}")
    return CheckResult(
        module=item.module,
        name=item.name,
        passed=outcome.passed,
        measured=outcome.measured,
        allowed=outcome.allowed,
        seed=item.seed,
        detail=outcome.detail,
        seconds=time.perf_counter() - started,
    )


def run_checks(modules: Optional[Iterable[str]] = None, verbose: bool = True) -> List[CheckResult]:
    """
    Run registered checks in registration order

    Args:
        modules: Restrict to these module names (all when empty)
        verbose: Print one line per check as it finishes

    Returns:
        List of CheckResult
    """
    results = []
    current_module = None
    for item in registered(modules):
        if verbose and item.module != current_module:
            current_module = item.module
            print("\n" + "=" * 60)
            print(f"{current_module}")
            print("=" * 60)
        result = run_check(item)
        results.append(result)
        if verbose:
            print(format_result(result))
    return results


def _number(value: Optional[float]) -> str:
    if value is None:
        return ''
    if isinstance(value, float) and (value == 0 or math.isfinite(value) and 1e-3 <= abs(value) < 1e6):
        return f'{value:.6g}'
    return f'{value:.3e}' if isinstance(value, float) else str(value)


def format_result(result: CheckResult) -> str:
    mark = '✓' if result.passed else '✗'
    line = f"{mark} {result.name}"
    if result.measured is not None:
        line += f"  measured {_number(result.measured)}"
    if result.allowed is not None:
        line += f"  allowed {_number(result.allowed)}"
    line += f"  seed {result.seed}"
    if result.detail:
        line += f"\n    {result.detail}"
    return line
