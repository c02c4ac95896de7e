"""
LeakBound - Bounds Module
Fano-based success-rate ceilings, minimum-trace predictions, the linear
single-letter bound and the Shannon-capacity bound on I(X;Y|T).
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import bisect
from scipy.special import entr

from leakage_core import LeakageConfig
from mi_estimation import MiCurve, QGrid
from oracle import single_letter_mi_exact


LN2 = math.log(2.0)

BISECT_XTOL = 1e-9
BISECT_MAXITER = 200


@dataclass(frozen=True)
class FanoContext:
    """Key of ell uniform bits, so H(K) = ell and P_s ranges over [2^-ell, 1]."""

    ell: int

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError(f"ell must be >= 1, got {self.ell}")

    @property
    def key_entropy(self) -> float:
        return float(self.ell)

    @property
    def p_min(self) -> float:
        return 2.0 ** -self.ell

    @classmethod
    def for_config(cls, config: LeakageConfig) -> "FanoContext":
        return cls(config.ell)


@dataclass(frozen=True, eq=False)
class BoundReport:
    """
    Everything the bound command reports for one noise level.

    q_min_* fields are None when the target success rate is never reached.
    """

    config: LeakageConfig
    grid: QGrid
    target_ps: float
    ps_upper_uyt: np.ndarray
    ps_upper_xyt: np.ndarray
    capacity_line: np.ndarray
    snr: float
    q_min_uyt: Optional[int]
    q_min_xyt: Optional[int]
    q_min_linear: Optional[int]


def binary_entropy(p: float) -> float:
    """H_2(p) in bits, with H_2(0) = H_2(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    return float((entr(p) + entr(1.0 - p)) / LN2)


def fano_fp(p: float, ctx: FanoContext) -> float:
    """
    f_P(p) = H(K) - H_2(p) - (1 - p) log2(2^ell - 1).

    Fano's inequality gives f_P(P_s) <= I(K; Y|T) <= I(U; Y|T).
    """
    # tolerate the rounding of 2^-ell computed elsewhere
    if p < ctx.p_min * (1.0 - 1e-12) or p > 1.0:
        raise ValueError(f"p must lie in [2^-{ctx.ell}, 1], got {p!r}")
    p = min(max(p, ctx.p_min), 1.0)
    return ctx.key_entropy - binary_entropy(p) - (1.0 - p) * math.log2(2.0 ** ctx.ell - 1.0)


def fano_inverse(mi: float, ctx: FanoContext) -> float:
    """
    Largest success rate compatible with `mi` bits of information.

    Args:
        mi: mutual information in bits; clamped to [0, ell]
        ctx: key size

    Returns:
        p* in [2^-ell, 1] with f_P(p*) = clamp(mi)
    """
    if mi <= 0.0:
        return ctx.p_min
    if mi >= ctx.key_entropy:
        return 1.0
    return float(bisect(
        lambda p: fano_fp(p, ctx) - mi,
        ctx.p_min, 1.0,
        xtol=BISECT_XTOL, maxiter=BISECT_MAXITER,
    ))


def ps_ceiling_curve(mi_curve: MiCurve, ctx: FanoContext, slack_sigmas: float = 0.0) -> np.ndarray:
    """
    Success-rate ceiling at every grid point.

    Args:
        mi_curve: I(U;Y|T) for the tight bound, I(X;Y|T) for the loose one
        ctx: key size
        slack_sigmas: standard errors added to each estimate before inversion

    Returns:
        Array of ceilings in [2^-ell, 1]
    """
    values = mi_curve.values + slack_sigmas * mi_curve.std_errors
    values = np.clip(values, 0.0, ctx.key_entropy)
    return np.array([fano_inverse(float(v), ctx) for v in values])


def _check_target(target_ps: float, ctx: FanoContext):
    if not ctx.p_min * (1.0 - 1e-12) <= target_ps <= 1.0:
        raise ValueError(f"target_ps must lie in [2^-{ctx.ell}, 1], got {target_ps!r}")


def first_crossing(qs: np.ndarray, values: np.ndarray, threshold: float,
                   anchor: Optional[float] = None) -> Optional[int]:
    """
    Smallest q where `values` reaches `threshold`, interpolating linearly between
    grid points and rounding up. None if the threshold is never reached.

    `anchor` is the known value at q = 0. When the grid starts above zero and the
    first point already reaches the threshold, the crossing is interpolated from
    (0, anchor) instead of being pinned to the first grid point.
    """
    qs = np.asarray(qs, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    reached = np.nonzero(values >= threshold)[0]
    if reached.size == 0:
        return None
    i = int(reached[0])
    if i == 0:
        if anchor is None or qs[0] <= 0 or threshold <= anchor:
            return int(qs[0])
        q0, v0 = 0.0, float(anchor)
    else:
        q0, v0 = float(qs[i - 1]), float(values[i - 1])
    q1, v1 = float(qs[i]), float(values[i])
    q = q0 + (threshold - v0) / (v1 - v0) * (q1 - q0)
    return max(1, int(math.ceil(q - 1e-9)))


def q_min_predict(mi_curve: MiCurve, target_ps: float, ctx: FanoContext) -> Optional[int]:
    """Fewest traces for which the Fano bound allows a success rate of target_ps."""
    _check_target(target_ps, ctx)
    threshold = fano_fp(max(target_ps, ctx.p_min), ctx)
    # only negative estimates are clipped
    clamped = np.maximum(mi_curve.values, 0.0)
    # no traces, no information
    return first_crossing(mi_curve.grid.as_array(), clamped, threshold, anchor=0.0)


def variance_of_leakage(config: LeakageConfig) -> float:
    """Var(X) for uniform inputs, enumerated over the leakage alphabet."""
    ell = config.ell
    order = config.field.order
    # P(w_H(U) = h) for U uniform
    class_prob = np.bincount(config.field.hw_table, minlength=ell + 1) / order
    if config.masked:
        probs = class_prob @ config.mask_counts / order
        levels = np.arange(2 * ell + 1, dtype=np.float64)
    else:
        probs = class_prob
        levels = np.arange(ell + 1, dtype=np.float64)
    mean = float(probs @ levels)
    return float(probs @ (levels - mean) ** 2)


def snr_of(config: LeakageConfig) -> float:
    """Var(X) / sigma^2: ell/4 over sigma^2 unmasked, ell/2 over sigma^2 masked."""
    return variance_of_leakage(config) / config.sigma2


def capacity_bound(q: float, snr: float) -> float:
    """(q/2) log2(1 + SNR), the AWGN capacity of q channel uses."""
    if snr < 0:
        raise ValueError(f"snr must be non-negative, got {snr!r}")
    if q < 0:
        raise ValueError(f"q must be non-negative, got {q!r}")
    return 0.5 * q * math.log2(1.0 + snr)


def linear_mi_bound(single_letter_mi: float, q: int) -> float:
    """I(X;Y|T) for q traces is at most q times its single-trace value."""
    return q * single_letter_mi


def q_min_linear(single_letter_mi: Optional[float], target_ps: float,
                 ctx: FanoContext) -> Optional[int]:
    """ceil(f_P(target) / I_1); None when the single-letter information is not positive."""
    _check_target(target_ps, ctx)
    if single_letter_mi is None or single_letter_mi <= 0:
        return None
    threshold = fano_fp(max(target_ps, ctx.p_min), ctx)
    return int(math.ceil(threshold / single_letter_mi - 1e-9))


def build_bound_report(mi_xyt: MiCurve, mi_uyt: MiCurve, target_ps: float) -> BoundReport:
    """
    Assemble ceilings, capacity line and q_min predictions for one configuration.

    The linear prediction uses the q = 1 value of I(X;Y|T) when the grid has it and
    the exact single-trace information otherwise.
    """
    if mi_xyt.grid != mi_uyt.grid:
        raise ValueError("I_XYT and I_UYT curves must share a q grid")

    config = mi_xyt.config
    ctx = FanoContext.for_config(config)
    snr = snr_of(config)
    qs = mi_xyt.grid.as_array()
    single_letter = mi_xyt.single_letter()
    if single_letter is None:
        single_letter = single_letter_mi_exact(config)

    return BoundReport(
        config=config,
        grid=mi_xyt.grid,
        target_ps=target_ps,
        ps_upper_uyt=ps_ceiling_curve(mi_uyt, ctx),
        ps_upper_xyt=ps_ceiling_curve(mi_xyt, ctx),
        capacity_line=np.array([capacity_bound(int(q), snr) for q in qs]),
        snr=snr,
        q_min_uyt=q_min_predict(mi_uyt, target_ps, ctx),
        q_min_xyt=q_min_predict(mi_xyt, target_ps, ctx),
        q_min_linear=q_min_linear(single_letter, target_ps, ctx),
    )
