"""
LeakBound - Attack Module
Optimal maximum-likelihood key recovery and empirical success-rate curves.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp
from scipy.stats import norm
from tqdm import tqdm

from bounds import first_crossing
from leakage_core import ATTACK_STREAM, LeakageConfig, SeededRng, sample_draw
from mi_estimation import QGrid, key_log_likelihoods


# Repetitions per parallel work unit; fixed so results do not depend on worker count.
CHUNK_ATTACKS = 16


@dataclass(frozen=True)
class AttackConfig:
    """
    Args:
        leakage: channel under attack
        grid: trace counts at which the success rate is measured
        n_attacks: repetitions per grid point
        seed: master seed of the attack streams
        confusion_q: grid point at which to record the key confusion matrix
    """

    leakage: LeakageConfig
    grid: QGrid
    n_attacks: int = 200
    seed: int = 0
    confusion_q: Optional[int] = None

    def __post_init__(self):
        if self.n_attacks < 1:
            raise ValueError(f"n_attacks must be >= 1, got {self.n_attacks}")
        if self.grid.points[0] < 1:
            raise ValueError("attack grid points must be >= 1")
        if self.confusion_q is not None and self.confusion_q not in self.grid.points:
            raise ValueError(f"confusion_q={self.confusion_q} is not a grid point")


@dataclass(frozen=True, eq=False)
class Guess:
    """Distinguisher output: the chosen key and the normalized log-posterior of every key."""

    key: int
    scores: np.ndarray
    tied: bool


@dataclass(frozen=True, eq=False)
class AttackResult:
    grid: QGrid
    n_attacks: int
    successes: np.ndarray
    success_rate: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    ties: np.ndarray
    confusion: Dict[int, np.ndarray] = field(default_factory=dict)
    # success rate of a blind guess, the value of the curve at q = 0
    guess_rate: Optional[float] = None

    @property
    def total_ties(self) -> int:
        return int(self.ties.sum())


def select_key(scores: np.ndarray) -> Tuple[int, bool]:
    """Argmax over keys; ties go to the smallest key and are flagged."""
    scores = np.asarray(scores)
    best = int(np.argmax(scores))
    tied = int(np.count_nonzero(scores == scores[best])) > 1
    return best, tied


def ml_distinguish(t, y, config: LeakageConfig) -> Guess:
    """
    Maximum-likelihood key guess from q traces.

    Unmasked traces are scored by the Gaussian log-kernel of w_H(S(t_i xor k));
    masked traces by the mask-marginalized mixture over the 2 ell + 1 leakage levels.
    With a uniform key prior this is also the MAP guess.
    """
    t = np.asarray(t, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    if t.ndim != 1 or t.size < 1 or t.shape != y.shape:
        raise ValueError("t and y must be matching 1-D arrays of at least one trace")

    scores = key_log_likelihoods(t, y, config).sum(axis=0)
    key, tied = select_key(scores)
    return Guess(key=key, scores=scores - logsumexp(scores), tied=tied)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, {n}], got {successes}")
    z = norm.ppf(0.5 + confidence / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == n else min(1.0, center + half)
    return low, high


def _attack_chunk(config: AttackConfig, start: int, stop: int):
    """Keys and guesses for repetitions [start, stop) at every grid point."""
    leakage = config.leakage
    rng = SeededRng(config.seed)
    points = config.grid.as_array()
    q_max = config.grid.q_max

    keys = np.empty(stop - start, dtype=np.int64)
    guesses = np.empty((stop - start, points.size), dtype=np.int64)
    ties = np.zeros(points.size, dtype=np.int64)
    for r in range(start, stop):
        draw = sample_draw(leakage, q_max, rng, r, ATTACK_STREAM)
        per_key = key_log_likelihoods(draw.t, draw.y, leakage)
        # grid points are nested prefixes of the same trace stream
        prefix = np.cumsum(per_key, axis=0)[points - 1]
        keys[r - start] = draw.k
        for g in range(points.size):
            guesses[r - start, g], tied = select_key(prefix[g])
            ties[g] += tied
    return keys, guesses, ties


def success_rate_curve(config: AttackConfig, threads: int = 1,
                       progress: bool = False) -> AttackResult:
    """
    Empirical ML success rate at every grid point.

    Each repetition draws a fresh key, plaintexts, masks and noise for q_max traces
    and attacks every grid prefix of them.
    """
    n = config.n_attacks
    bounds = [(lo, min(n, lo + CHUNK_ATTACKS)) for lo in range(0, n, CHUNK_ATTACKS)]
    jobs = (
        delayed(_attack_chunk)(config, lo, hi)
        for lo, hi in tqdm(bounds, desc="ML attacks", unit="chunk", disable=not progress)
    )
    chunks = Parallel(n_jobs=threads)(jobs)

    keys = np.concatenate([c[0] for c in chunks])
    guesses = np.concatenate([c[1] for c in chunks])
    ties = np.sum([c[2] for c in chunks], axis=0)

    successes = np.sum(guesses == keys[:, None], axis=0)
    intervals = [wilson_interval(int(s), n) for s in successes]

    confusion = {}
    if config.confusion_q is not None:
        g = config.grid.points.index(config.confusion_q)
        order = config.leakage.field.order
        matrix = np.zeros((order, order), dtype=np.int64)
        np.add.at(matrix, (keys, guesses[:, g]), 1)
        confusion[config.confusion_q] = matrix

    return AttackResult(
        grid=config.grid,
        n_attacks=n,
        successes=successes,
        success_rate=successes / n,
        ci_low=np.array([lo for lo, _ in intervals]),
        ci_high=np.array([hi for _, hi in intervals]),
        ties=ties,
        confusion=confusion,
        guess_rate=1.0 / config.leakage.field.order,
    )


def empirical_ki_khat(confusion: np.ndarray) -> float:
    """Plug-in I(K; K_hat) in bits from true-key x guessed-key counts."""
    counts = np.asarray(confusion, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("confusion matrix has no entries")
    joint = counts / total
    pk = joint.sum(axis=1, keepdims=True)
    pg = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (pk @ pg)[nz])))


def q_min_empirical(result: AttackResult, target_ps: float) -> Optional[int]:
    """
    First q at which the measured success rate reaches target_ps, interpolated.

    With no traces the attacker can only guess, so the curve starts at 2^-ell.
    """
    if not 0.0 < target_ps <= 1.0:
        raise ValueError(f"target_ps must lie in (0, 1], got {target_ps!r}")
    return first_crossing(result.grid.as_array(), result.success_rate, target_ps,
                          anchor=result.guess_rate)
