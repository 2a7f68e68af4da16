"""
Closed-form projections that solve the token-dependent shift task.

A marker token asks the query at position m to attend to m + s (s = 1 for a
"next" marker, 2 for "next-next"). With the complex query projection below,
each marker pattern turns into a query whose phases exp(i s theta_t) cancel
the rotary phases exactly at the desired key position, and every key is the
all-ones vector.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from autodiff.tensor import softmax_rows, tensor
from errors import ConstructionError
from layers.block_linear import to_real
from rope.rotary import RopeConfig
from rope.scores import score_complex

SHIFTS = (1, 2)
DIRECTIONS = ('forward', 'backward')


@dataclass
class ShiftConstruction:
    shift: int
    direction: str
    w_q: np.ndarray           # complex [D/2, D/2]
    x_next: np.ndarray        # complex [D/2], weights on even slots
    x_nextnext: np.ndarray    # complex [D/2], weights on odd slots
    query: np.ndarray         # complex [D/2], unit-scale query for `shift`
    key: np.ndarray           # complex [D/2], all ones
    scale: float              # common weight sum

    @property
    def query_real(self) -> np.ndarray:
        return to_real(self.query)

    @property
    def inputs(self) -> np.ndarray:
        return np.stack([self.x_next, self.x_nextnext])

    @property
    def targets(self) -> np.ndarray:
        return self.inputs @ self.w_q.T


@dataclass
class MembershipResult:
    weight: np.ndarray
    residual: float
    rank: int
    rank_deficient: bool


def build_shift_construction(cfg: RopeConfig, s: int, a: Optional[Sequence[float]] = None,
                             a_alt: Optional[Sequence[float]] = None,
                             direction: str = 'forward') -> ShiftConstruction:
    """
    Query projection and marker patterns for shift s.

    Args:
        cfg: Rotary config; head_dim must be a multiple of 4
        s: Shift, 1 or 2
        a: Token weights of the "next" pattern, length head_dim / 4 (default ones)
        a_alt: Token weights of the "next-next" pattern (default a)
        direction: 'forward' peaks at n = m + s, 'backward' at n = m - s

    Returns:
        ShiftConstruction
    """
    if s not in SHIFTS:
        raise ConstructionError(f"shift must be one of {SHIFTS}, got {s}")
    if direction not in DIRECTIONS:
        raise ConstructionError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if cfg.head_dim % 4:
        raise ConstructionError(f"shift construction needs head_dim divisible by 4, got {cfg.head_dim}")

    slots = cfg.head_dim // 4
    a = np.ones(slots) if a is None else np.asarray(a, dtype=np.float64)
    a_alt = a if a_alt is None else np.asarray(a_alt, dtype=np.float64)
    for label, weights in (('a', a), ('a_alt', a_alt)):
        if weights.shape != (slots,):
            raise ConstructionError(f"{label} must have {slots} weights, got shape {weights.shape}")

    total, total_alt = float(a.sum()), float(a_alt.sum())
    if total == 0.0:
        raise ConstructionError("token weights must not sum to zero")
    if not np.isclose(total, total_alt, rtol=1e-12, atol=0.0):
        raise ConstructionError(f"token weight sums differ: {total} vs {total_alt}")

    sign = 1.0 if direction == 'forward' else -1.0
    phase = np.exp(sign * 1j * cfg.freqs)
    w_q = np.empty((cfg.n_pairs, cfg.n_pairs), dtype=np.complex128)
    w_q[:, 0::2] = phase[:, None]
    w_q[:, 1::2] = (phase ** 2)[:, None]

    x_next = np.zeros(cfg.n_pairs, dtype=np.complex128)
    x_next[0::2] = a
    x_nextnext = np.zeros(cfg.n_pairs, dtype=np.complex128)
    x_nextnext[1::2] = a_alt

    pattern = x_next if s == 1 else x_nextnext
    query = (w_q @ pattern) / total

    return ShiftConstruction(
        shift=s,
        direction=direction,
        w_q=w_q,
        x_next=x_next,
        x_nextnext=x_nextnext,
        query=query,
        key=np.ones(cfg.n_pairs, dtype=np.complex128),
        scale=total,
    )


def shift_scores(cfg: RopeConfig, s: int, window: int = 32, direction: str = 'forward') -> np.ndarray:
    """Score matrix [window, window] over 1-based query (rows) and key (columns) positions"""
    construction = build_shift_construction(cfg, s, direction=direction)
    positions = range(1, window + 1)
    return np.array([[score_complex(construction.query, construction.key, m, n, cfg)
                      for n in positions] for m in positions])


def shift_attention_profile(cfg: RopeConfig, s: int, window: int = 32,
                            direction: str = 'forward') -> np.ndarray:
    """Row-softmax of shift_scores"""
    return softmax_rows(tensor(shift_scores(cfg, s, window, direction), dtype=np.float64)).data


def crope_membership_check(q_targets, x_inputs) -> MembershipResult:
    """
    Best single complex matrix W with W x_p ~ q_p for every pattern p.

    Args:
        q_targets: Complex targets, one pattern per row [P, out]
        x_inputs: Complex inputs, one pattern per row [P, in]

    Returns:
        MembershipResult with the least-squares W [out, in] and its residual
    """
    targets = np.atleast_2d(np.asarray(q_targets, dtype=np.complex128))
    inputs = np.atleast_2d(np.asarray(x_inputs, dtype=np.complex128))
    if targets.shape[0] != inputs.shape[0]:
        raise ValueError(f"{targets.shape[0]} targets for {inputs.shape[0]} input patterns")

    solution, _, rank, _ = np.linalg.lstsq(inputs, targets, rcond=None)
    residual = float(np.linalg.norm(inputs @ solution - targets))
    return MembershipResult(
        weight=solution.T,
        residual=residual,
        rank=int(rank),
        rank_deficient=int(rank) < min(inputs.shape),
    )


def reflection_targets():
    """Inputs and unit-norm targets of the map z -> conj(z), which no complex weight realizes"""
    inputs = np.array([[1.0 + 0.0j], [0.0 + 1.0j]])
    return np.conj(inputs), inputs
