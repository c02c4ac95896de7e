"""
LeakBound - Leakage Core Module
Channel model for first-order masked Hamming-weight leakage with additive Gaussian noise,
plus reproducible Monte-Carlo draws.

Variables follow the channel  K -> U -> V -> X -> Y  given plaintexts T:
    U = S(T xor K), V = U or (U xor M, M), X = f(V), Y = X + N.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import comb


MAX_ELL = 16

# Stream tags keep Monte-Carlo draws, attack repetitions and sweep points apart
# even when they share a master seed.
MI_STREAM = 0
ATTACK_STREAM = 1
SWEEP_STREAM_BASE = 16

SBOX_KINDS = ("identity", "aes-subbytes", "seeded-random-bijection")

# fmt: off
AES_SBOX = np.array([
    0x63, 0x7C, 0x77, 0x7B, 0xF2, 0x6B, 0x6F, 0xC5, 0x30, 0x01, 0x67, 0x2B, 0xFE, 0xD7, 0xAB, 0x76,
    0xCA, 0x82, 0xC9, 0x7D, 0xFA, 0x59, 0x47, 0xF0, 0xAD, 0xD4, 0xA2, 0xAF, 0x9C, 0xA4, 0x72, 0xC0,
    0xB7, 0xFD, 0x93, 0x26, 0x36, 0x3F, 0xF7, 0xCC, 0x34, 0xA5, 0xE5, 0xF1, 0x71, 0xD8, 0x31, 0x15,
    0x04, 0xC7, 0x23, 0xC3, 0x18, 0x96, 0x05, 0x9A, 0x07, 0x12, 0x80, 0xE2, 0xEB, 0x27, 0xB2, 0x75,
    0x09, 0x83, 0x2C, 0x1A, 0x1B, 0x6E, 0x5A, 0xA0, 0x52, 0x3B, 0xD6, 0xB3, 0x29, 0xE3, 0x2F, 0x84,
    0x53, 0xD1, 0x00, 0xED, 0x20, 0xFC, 0xB1, 0x5B, 0x6A, 0xCB, 0xBE, 0x39, 0x4A, 0x4C, 0x58, 0xCF,
    0xD0, 0xEF, 0xAA, 0xFB, 0x43, 0x4D, 0x33, 0x85, 0x45, 0xF9, 0x02, 0x7F, 0x50, 0x3C, 0x9F, 0xA8,
    0x51, 0xA3, 0x40, 0x8F, 0x92, 0x9D, 0x38, 0xF5, 0xBC, 0xB6, 0xDA, 0x21, 0x10, 0xFF, 0xF3, 0xD2,
    0xCD, 0x0C, 0x13, 0xEC, 0x5F, 0x97, 0x44, 0x17, 0xC4, 0xA7, 0x7E, 0x3D, 0x64, 0x5D, 0x19, 0x73,
    0x60, 0x81, 0x4F, 0xDC, 0x22, 0x2A, 0x90, 0x88, 0x46, 0xEE, 0xB8, 0x14, 0xDE, 0x5E, 0x0B, 0xDB,
    0xE0, 0x32, 0x3A, 0x0A, 0x49, 0x06, 0x24, 0x5C, 0xC2, 0xD3, 0xAC, 0x62, 0x91, 0x95, 0xE4, 0x79,
    0xE7, 0xC8, 0x37, 0x6D, 0x8D, 0xD5, 0x4E, 0xA9, 0x6C, 0x56, 0xF4, 0xEA, 0x65, 0x7A, 0xAE, 0x08,
    0xBA, 0x78, 0x25, 0x2E, 0x1C, 0xA6, 0xB4, 0xC6, 0xE8, 0xDD, 0x74, 0x1F, 0x4B, 0xBD, 0x8B, 0x8A,
    0x70, 0x3E, 0xB5, 0x66, 0x48, 0x03, 0xF6, 0x0E, 0x61, 0x35, 0x57, 0xB9, 0x86, 0xC1, 0x1D, 0x9E,
    0xE1, 0xF8, 0x98, 0x11, 0x69, 0xD9, 0x8E, 0x94, 0x9B, 0x1E, 0x87, 0xE9, 0xCE, 0x55, 0x28, 0xDF,
    0x8C, 0xA1, 0x89, 0x0D, 0xBF, 0xE6, 0x42, 0x68, 0x41, 0x99, 0x2D, 0x0F, 0xB0, 0x54, 0xBB, 0x16,
], dtype=np.int64)
# fmt: on


@dataclass(frozen=True)
class FieldParams:
    """Word size of the key/plaintext alphabet F_{2^ell}."""

    ell: int

    def __post_init__(self):
        if not isinstance(self.ell, (int, np.integer)) or not 1 <= self.ell <= MAX_ELL:
            raise ValueError(f"ell must be an integer in [1, {MAX_ELL}], got {self.ell!r}")

    @property
    def order(self) -> int:
        return 1 << self.ell

    @cached_property
    def hw_table(self) -> np.ndarray:
        """Hamming weight of every ell-bit word."""
        words = np.arange(self.order, dtype=np.int64)
        weights = np.zeros(self.order, dtype=np.int64)
        for bit in range(self.ell):
            weights += (words >> bit) & 1
        return weights


@dataclass(frozen=True, eq=False)
class SboxSpec:
    """Bijective substitution table S used in U = S(T xor K)."""

    kind: str
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.int64)
        if not np.array_equal(np.sort(table), np.arange(table.size)):
            raise ValueError(f"S-box '{self.kind}' is not a bijection")
        object.__setattr__(self, "table", table)


@dataclass(frozen=True, eq=False)
class LeakageConfig:
    """
    One leakage channel.

    Args:
        field: word size
        sbox: substitution table
        masked: False for an unprotected implementation, True for first-order Boolean masking
        sigma2: noise variance
    """

    field: FieldParams
    sbox: SboxSpec
    masked: bool
    sigma2: float

    def __post_init__(self):
        if self.sbox.table.size != self.field.order:
            raise ValueError(
                f"S-box has {self.sbox.table.size} entries, expected {self.field.order}"
            )
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")

    @property
    def ell(self) -> int:
        return self.field.ell

    @property
    def max_leakage(self) -> int:
        return 2 * self.ell if self.masked else self.ell

    @cached_property
    def sbox_hw(self) -> np.ndarray:
        """w_H(S(w)) for every word w; the leakage class of a key hypothesis."""
        return self.field.hw_table[self.sbox.table]

    @cached_property
    def mask_counts(self) -> np.ndarray:
        return mask_class_counts(self.field)

    def with_sigma2(self, sigma2: float) -> "LeakageConfig":
        return LeakageConfig(self.field, self.sbox, self.masked, sigma2)


@dataclass(frozen=True, eq=False)
class DrawBatch:
    """
    One Monte-Carlo draw of q traces.

    `v` holds the share pairs (u xor m, m) as a (q, 2) array when masked, else u itself.
    """

    q: int
    t: np.ndarray
    k: int
    m: Optional[np.ndarray]
    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class SeededRng:
    """
    Counter-based random source.

    Draw j of stream s always comes from Philox keyed by the master seed with
    (j, s) in the high counter words, so a draw does not depend on which worker
    produced it or in what order.
    """

    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed!r}")

    def generator(self, draw_index: int, stream: int = MI_STREAM) -> np.random.Generator:
        if draw_index < 0 or stream < 0:
            raise ValueError("draw_index and stream must be non-negative")
        counter = np.array([0, 0, draw_index, stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=int(self.master_seed), counter=counter))


def hamming_weight(w: int, field: FieldParams) -> int:
    """Number of set bits of an ell-bit word."""
    if not 0 <= w < field.order:
        raise ValueError(f"word {w!r} outside F_2^{field.ell}")
    return int(field.hw_table[w])


def mask_class_counts(field: FieldParams) -> np.ndarray:
    """
    Count masks by the zero-offset leakage they induce.

    Returns:
        Integer table N of shape (ell + 1, 2 * ell + 1) where
        N[h][s] = #{m : w_H(u xor m) + w_H(m) = s} for any u with w_H(u) = h.
        Every set bit of u contributes exactly 1 whatever the mask bit, every clear
        bit contributes 0 or 2, hence N[h][h + 2j] = 2^h * C(ell - h, j).
    """
    ell = field.ell
    counts = np.zeros((ell + 1, 2 * ell + 1), dtype=np.int64)
    for h in range(ell + 1):
        for j in range(ell - h + 1):
            counts[h, h + 2 * j] = (1 << h) * comb(ell - h, j, exact=True)
    return counts


def sbox_build(kind: str, field: FieldParams, seed: Optional[int] = None) -> SboxSpec:
    """
    Build an S-box table.

    Args:
        kind: 'identity', 'aes-subbytes' (ell = 8 only) or 'seeded-random-bijection'
        field: word size
        seed: permutation seed for 'seeded-random-bijection' (default 0)

    Returns:
        SboxSpec with a bijective table
    """
    if kind == "identity":
        table = np.arange(field.order, dtype=np.int64)
    elif kind == "aes-subbytes":
        if field.ell != 8:
            raise ValueError(f"aes-subbytes requires ell = 8, got ell = {field.ell}")
        table = AES_SBOX.copy()
    elif kind == "seeded-random-bijection":
        # Generator.permutation is a Fisher-Yates shuffle of the identity.
        rng = np.random.Generator(np.random.Philox(key=0 if seed is None else int(seed)))
        table = rng.permutation(field.order).astype(np.int64)
    else:
        raise ValueError(f"Unsupported S-box kind: {kind}. Supported: {', '.join(SBOX_KINDS)}")
    return SboxSpec(kind=kind, table=table)


def make_config(ell: int, masked: bool, sigma2: float, sbox: str = "identity",
                sbox_seed: Optional[int] = None) -> LeakageConfig:
    """Shorthand for building a LeakageConfig from plain values."""
    field = FieldParams(ell)
    return LeakageConfig(field, sbox_build(sbox, field, sbox_seed), bool(masked), float(sigma2))


def sample_draw(config: LeakageConfig, q: int, rng: SeededRng, draw_index: int,
                stream: int = MI_STREAM) -> DrawBatch:
    """
    Draw plaintexts, key, masks and noisy leakage for q traces.

    Args:
        config: channel under study
        q: number of traces
        rng: seeded random source
        draw_index: index j of the draw within its stream
        stream: stream tag

    Returns:
        DrawBatch with every intermediate populated
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")

    gen = rng.generator(draw_index, stream)
    order = config.field.order
    hw = config.field.hw_table

    t = gen.integers(0, order, size=q, dtype=np.int64)
    k = int(gen.integers(0, order))
    m = gen.integers(0, order, size=q, dtype=np.int64) if config.masked else None
    noise = gen.standard_normal(q) * np.sqrt(config.sigma2)

    u = config.sbox.table[t ^ k]
    if config.masked:
        v = np.stack([u ^ m, m], axis=1)
        x = (hw[u ^ m] + hw[m]).astype(np.float64)
    else:
        v = u
        x = hw[u].astype(np.float64)

    return DrawBatch(q=q, t=t, k=k, m=m, u=u, v=v, x=x, y=x + noise)
