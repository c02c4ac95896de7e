"""
LeakBound - Mutual Information Estimation Module
Monte-Carlo estimation of H(Y|T), H(Y|U) and the closed-form H(Y|X), hence of
I(X;Y|T) and I(U;Y|T), over a whole grid of trace counts in one pass.

All returned entropies and informations are in bits.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp
from tqdm import tqdm

from leakage_core import (
    LeakageConfig,
    MI_STREAM,
    SWEEP_STREAM_BASE,
    SeededRng,
    sample_draw,
)


LN2 = math.log(2.0)

I_XYT = "I_XYT"
I_UYT = "I_UYT"

# Draws per reduction chunk. Fixed so that the reduction order never depends on
# the number of workers.
CHUNK_DRAWS = 256

# Upper bound on draws x traces x keys held in memory by one kernel evaluation.
_BATCH_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class QGrid:
    """Strictly increasing trace counts at which curves are evaluated."""

    points: Tuple[int, ...]

    def __post_init__(self):
        points = tuple(int(p) for p in self.points)
        if not points:
            raise ValueError("q grid must not be empty")
        if points[0] < 0:
            raise ValueError("q grid points must be non-negative")
        if any(b <= a for a, b in zip(points, points[1:])):
            raise ValueError("q grid points must be strictly increasing")
        if points[-1] < 1:
            raise ValueError("q grid must contain at least one positive trace count")
        object.__setattr__(self, "points", points)

    @classmethod
    def linspace(cls, start: int, stop: int, count: int) -> "QGrid":
        """Evenly spaced integer grid; duplicates after rounding are dropped."""
        if count < 1:
            raise ValueError("linspace count must be >= 1")
        values = np.rint(np.linspace(start, stop, count)).astype(int)
        return cls(tuple(sorted(set(int(v) for v in values))))

    @property
    def q_max(self) -> int:
        return self.points[-1]

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.int64)


@dataclass(frozen=True)
class EntropyEstimate:
    """Monte-Carlo estimate with its standard error."""

    value: float
    std_error: float
    n_draws: int


@dataclass(frozen=True, eq=False)
class MiCurve:
    """
    Estimated mutual information as a function of q.

    `values` are raw estimates; use clamped() for reporting.
    """

    kind: str
    grid: QGrid
    values: np.ndarray
    std_errors: np.ndarray
    config: LeakageConfig
    n_draws: int

    def clamped(self) -> np.ndarray:
        upper = self.config.ell if self.kind == I_UYT else np.inf
        return np.clip(self.values, 0.0, upper)

    @property
    def negative_count(self) -> int:
        return int(np.sum(self.values < 0))

    def value_at(self, q: int) -> Optional[float]:
        if q not in self.grid.points:
            return None
        return float(self.values[self.grid.points.index(q)])

    def single_letter(self) -> Optional[float]:
        """Estimate at q = 1, if the grid has it."""
        return self.value_at(1)


@dataclass(frozen=True)
class ConvergencePoint:
    """MI estimates at a fixed q for one Monte-Carlo size."""

    n_draws: int
    q: int
    i_xyt: EntropyEstimate
    i_uyt: EntropyEstimate


def noise_entropy(sigma2: float, q: int) -> float:
    """H(Y|X) = q * 1/2 log2(2 pi e sigma^2), the entropy of q Gaussian noise samples."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2!r}")
    if q < 0:
        raise ValueError(f"q must be non-negative, got {q}")
    return q * 0.5 * math.log2(2.0 * math.pi * math.e * sigma2)


# ---------------------------------------------------------------------------
# Likelihood kernels
#
# Every kernel accepts arrays with arbitrary leading batch dimensions and q
# traces on the last axis. Natural logs are used internally and converted to
# bits on the way out.
# ---------------------------------------------------------------------------

def _gaussian_exponents(y: np.ndarray, levels: np.ndarray, sigma2: float) -> np.ndarray:
    """-(y - s)^2 / (2 sigma^2) for every leakage level s, on a new last axis."""
    diff = y[..., None] - levels
    return -(diff * diff) / (2.0 * sigma2)


def class_log_kernels(y: np.ndarray, config: LeakageConfig) -> np.ndarray:
    """
    Per-trace log-likelihood of each Hamming-weight class h = w_H(u), up to constants.

    Unmasked: -(y - h)^2 / 2 sigma^2.
    Masked:   log sum_s N[h][s] exp(-(y - s)^2 / 2 sigma^2), the mask sum grouped by
              the 2 ell + 1 attainable leakage values.

    Returns:
        Array of shape y.shape + (ell + 1,)
    """
    ell = config.ell
    y = np.asarray(y, dtype=np.float64)
    if not config.masked:
        return _gaussian_exponents(y, np.arange(ell + 1, dtype=np.float64), config.sigma2)

    levels = np.arange(2 * ell + 1, dtype=np.float64)
    exponents = _gaussian_exponents(y, levels, config.sigma2)
    with np.errstate(divide="ignore"):
        log_counts = np.log(config.mask_counts.astype(np.float64))
    return logsumexp(exponents[..., None, :] + log_counts, axis=-1)


def _trace_log_constant(config: LeakageConfig) -> float:
    """Per-trace normalization: Gaussian density and, when masked, the uniform mask prior."""
    constant = -0.5 * math.log(2.0 * math.pi * config.sigma2)
    if config.masked:
        constant -= config.ell * LN2
    return constant


def key_log_likelihoods(t: np.ndarray, y: np.ndarray, config: LeakageConfig) -> np.ndarray:
    """
    log p(y_i | t_i, k) for every trace and key hypothesis, up to the per-trace constant.

    Returns:
        Array of shape t.shape + (2^ell,)
    """
    t = np.asarray(t, dtype=np.int64)
    kernels = class_log_kernels(y, config)
    keys = np.arange(config.field.order, dtype=np.int64)
    classes = config.sbox_hw[t[..., None] ^ keys]
    return np.take_along_axis(kernels, classes, axis=-1)


def _prefix_points(prefixes: Optional[Sequence[int]], q: int) -> np.ndarray:
    points = np.asarray([q] if prefixes is None else list(prefixes), dtype=np.int64)
    if points.size == 0 or points.min() < 0 or points.max() > q:
        raise ValueError(f"prefix lengths must lie in [0, {q}]")
    return points


def _prefix_sums(per_trace: np.ndarray, points: np.ndarray, axis: int) -> np.ndarray:
    """Cumulative sums along `axis` read at the given prefix lengths (0 allowed)."""
    cumulative = np.cumsum(per_trace, axis=axis)
    zero_shape = list(cumulative.shape)
    zero_shape[axis] = 1
    cumulative = np.concatenate([np.zeros(zero_shape), cumulative], axis=axis)
    return np.take(cumulative, points, axis=axis)


def _log_p_y_given_t(t: np.ndarray, y: np.ndarray, config: LeakageConfig,
                     points: np.ndarray) -> np.ndarray:
    """log2 p(y|t) at each prefix length, batched over leading dimensions."""
    per_key = key_log_likelihoods(t, y, config)
    prefix = _prefix_sums(per_key, points, axis=-2)
    log_sum = logsumexp(prefix, axis=-1)
    log_p = log_sum - config.ell * LN2 + points * _trace_log_constant(config)
    log_p = log_p / LN2
    # the empty prefix has likelihood exactly one
    log_p[..., points == 0] = 0.0
    return log_p


def _log_p_y_given_u(u: np.ndarray, y: np.ndarray, config: LeakageConfig,
                     points: np.ndarray) -> np.ndarray:
    """log2 p(y|u) at each prefix length; the traces are independent given u."""
    u = np.asarray(u, dtype=np.int64)
    kernels = class_log_kernels(y, config)
    classes = config.field.hw_table[u]
    per_trace = np.take_along_axis(kernels, classes[..., None], axis=-1)[..., 0]
    per_trace = per_trace + _trace_log_constant(config)
    return _prefix_sums(per_trace, points, axis=-1) / LN2


def _single_or_prefixes(values: np.ndarray, prefixes: Optional[Sequence[int]]):
    return float(values[..., 0]) if prefixes is None else values


def log_p_y_given_t_unmasked(t, y, config: LeakageConfig,
                             prefixes: Optional[Sequence[int]] = None):
    """
    log2 p(y|t) for an unprotected implementation.

    log p(y|t) = -ell - (q/2) log(2 pi sigma^2) + log sum_k prod_i exp(-(y_i - w_H(S(t_i xor k)))^2 / 2 sigma^2),
    evaluated with log-sum-exp over keys of prefix-summed per-trace exponents.

    Args:
        t: q plaintext words
        y: q leakage samples
        config: unmasked channel
        prefixes: optional prefix lengths; if given, the value at each is returned

    Returns:
        float, or an array with one value per prefix length
    """
    if config.masked:
        raise ValueError("log_p_y_given_t_unmasked requires an unmasked config")
    points = _prefix_points(prefixes, len(y))
    return _single_or_prefixes(_log_p_y_given_t(t, y, config, points), prefixes)


def log_p_y_given_t_masked(t, y, config: LeakageConfig,
                           prefixes: Optional[Sequence[int]] = None):
    """
    log2 p(y|t) under first-order Boolean masking with zero-offset leakage.

    The inner mask sum is evaluated per trace once for each of the ell + 1 Hamming-weight
    classes; each key then only looks up the class of S(t_i xor k).
    """
    if not config.masked:
        raise ValueError("log_p_y_given_t_masked requires a masked config")
    points = _prefix_points(prefixes, len(y))
    return _single_or_prefixes(_log_p_y_given_t(t, y, config, points), prefixes)


def log_p_y_given_u_masked(u, y, config: LeakageConfig,
                           prefixes: Optional[Sequence[int]] = None):
    """log2 p(y|u) = sum_i log2[2^-ell sum_s N[w_H(u_i)][s] phi_sigma(y_i - s)]."""
    if not config.masked:
        raise ValueError("log_p_y_given_u_masked requires a masked config")
    points = _prefix_points(prefixes, len(y))
    return _single_or_prefixes(_log_p_y_given_u(u, y, config, points), prefixes)


def log_p_y_given_u_unmasked(u, y, config: LeakageConfig,
                             prefixes: Optional[Sequence[int]] = None):
    """log2 p(y|u) = sum_i log2 phi_sigma(y_i - w_H(u_i))."""
    if config.masked:
        raise ValueError("log_p_y_given_u_unmasked requires an unmasked config")
    points = _prefix_points(prefixes, len(y))
    return _single_or_prefixes(_log_p_y_given_u(u, y, config, points), prefixes)


def log_p_y_given_x(x, y, sigma2: float, prefixes: Optional[Sequence[int]] = None):
    """log2 p(y|x) for Gaussian noise around the noiseless leakage x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    points = _prefix_points(prefixes, y.shape[-1])
    per_trace = -((y - x) ** 2) / (2.0 * sigma2) - 0.5 * math.log(2.0 * math.pi * sigma2)
    return _single_or_prefixes(_prefix_sums(per_trace, points, axis=-1) / LN2, prefixes)


# ---------------------------------------------------------------------------
# Monte-Carlo reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _ChunkMoments:
    count: int
    total: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "_ChunkMoments":
        total = samples.sum(axis=0)
        centered = samples - total / samples.shape[0]
        return cls(samples.shape[0], total, np.sum(centered * centered, axis=0))


def _merge_moments(chunks: List[_ChunkMoments]) -> Tuple[np.ndarray, np.ndarray, int]:
    """Combine chunk moments in chunk order with compensated summation."""
    count = sum(c.count for c in chunks)
    width = chunks[0].total.shape[0]
    mean = np.array([math.fsum(c.total[g] for c in chunks) / count for g in range(width)])
    m2 = np.array([
        math.fsum(
            [c.m2[g] for c in chunks]
            + [c.count * (c.total[g] / c.count - mean[g]) ** 2 for c in chunks]
        )
        for g in range(width)
    ])
    variance = m2 / (count - 1)
    return mean, np.sqrt(variance / count), count


def _draw_batches(start: int, stop: int, q_max: int, order: int):
    step = max(1, _BATCH_ELEMENTS // max(1, q_max * order))
    for lo in range(start, stop, step):
        yield lo, min(stop, lo + step)


def _entropy_chunk(config: LeakageConfig, points: np.ndarray, rng: SeededRng,
                   start: int, stop: int, stream: int) -> Tuple[_ChunkMoments, _ChunkMoments]:
    """
    Per-draw terms for draws [start, stop):
    -log2 p(y|t) (the H(Y|T) estimator) and log2 p(y|u) - log2 p(y|t) (the I(U;Y|T) estimator).
    """
    q_max = int(points.max())
    h_yt = np.empty((stop - start, points.size))
    i_uyt = np.empty((stop - start, points.size))

    for lo, hi in _draw_batches(start, stop, q_max, config.field.order):
        draws = [sample_draw(config, q_max, rng, j, stream) for j in range(lo, hi)]
        t = np.stack([d.t for d in draws])
        u = np.stack([d.u for d in draws])
        y = np.stack([d.y for d in draws])
        log_pt = _log_p_y_given_t(t, y, config, points)
        log_pu = _log_p_y_given_u(u, y, config, points)
        h_yt[lo - start:hi - start] = -log_pt
        i_uyt[lo - start:hi - start] = log_pu - log_pt

    return _ChunkMoments.from_samples(h_yt), _ChunkMoments.from_samples(i_uyt)


def _run_chunks(config: LeakageConfig, points: np.ndarray, n_draws: int, rng: SeededRng,
                stream: int, threads: int, progress: bool):
    bounds = [(lo, min(n_draws, lo + CHUNK_DRAWS)) for lo in range(0, n_draws, CHUNK_DRAWS)]
    jobs = (
        delayed(_entropy_chunk)(config, points, rng, lo, hi, stream)
        for lo, hi in tqdm(bounds, desc="MC draws", unit="chunk", disable=not progress)
    )
    return Parallel(n_jobs=threads)(jobs)


def estimate_mi_curves(config: LeakageConfig, grid: QGrid, n_draws: int, rng: SeededRng,
                       threads: int = 1, progress: bool = False,
                       stream: int = MI_STREAM) -> Tuple[MiCurve, MiCurve]:
    """
    Estimate I(X;Y|T) and I(U;Y|T) at every grid point from one set of draws.

    I(X;Y|T) = H(Y|T) - H(Y|X) with H(Y|X) in closed form;
    I(U;Y|T) = H(Y|T) - H(Y|U) with both entropies on the same draws, its standard
    error taken from the per-draw differences.

    Args:
        config: channel under study
        grid: trace counts to report
        n_draws: number of Monte-Carlo draws N_C (>= 2)
        rng: seeded random source
        threads: joblib worker count
        progress: show a tqdm bar over draw chunks
        stream: RNG stream tag

    Returns:
        (I_XYT curve, I_UYT curve)
    """
    if n_draws < 2:
        raise ValueError(f"n_draws must be >= 2 to estimate a variance, got {n_draws}")

    points = grid.as_array()
    chunks = _run_chunks(config, points, n_draws, rng, stream, threads, progress)

    h_yt, h_yt_err, count = _merge_moments([c[0] for c in chunks])
    i_uyt, i_uyt_err, _ = _merge_moments([c[1] for c in chunks])
    h_yx = np.array([noise_entropy(config.sigma2, int(q)) for q in points])

    xyt = MiCurve(I_XYT, grid, h_yt - h_yx, h_yt_err, config, count)
    uyt = MiCurve(I_UYT, grid, i_uyt, i_uyt_err, config, count)
    return xyt, uyt


def convergence_sweep(config: LeakageConfig, q_fixed: int, n_draws_list: Sequence[int],
                      rng: SeededRng, threads: int = 1,
                      progress: bool = False) -> List[ConvergencePoint]:
    """
    MI estimates at a single q for increasing Monte-Carlo sizes.

    Each size uses its own RNG stream, so the points are independent estimates.
    """
    if not n_draws_list:
        raise ValueError("n_draws_list must not be empty")

    grid = QGrid((q_fixed,))
    sweep = []
    for index, n_draws in enumerate(n_draws_list):
        xyt, uyt = estimate_mi_curves(config, grid, n_draws, rng, threads, progress,
                                      stream=SWEEP_STREAM_BASE + index)
        sweep.append(ConvergencePoint(
            n_draws=xyt.n_draws,
            q=q_fixed,
            i_xyt=EntropyEstimate(float(xyt.values[0]), float(xyt.std_errors[0]), xyt.n_draws),
            i_uyt=EntropyEstimate(float(uyt.values[0]), float(uyt.std_errors[0]), uyt.n_draws),
        ))
    return sweep
