"""
LeakBound - Oracle Module
Exact conditional entropies and mutual informations for tiny channels, by exhaustive
enumeration of plaintexts and keys plus Simpson quadrature over the leakage.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.special import comb, entr
from scipy.stats import norm

from leakage_core import LeakageConfig


LN2 = math.log(2.0)

MAX_ORACLE_ELL = 3
MAX_ORACLE_Q = 2

CONDITIONINGS = ("T", "U", "X")


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Simpson rule on [s_min - tail * sigma, s_max + tail * sigma] with step sigma / resolution."""

    tail_sigmas: float = 8.0
    resolution: int = 50

    def __post_init__(self):
        if self.tail_sigmas <= 0 or self.resolution < 1:
            raise ValueError("tail_sigmas and resolution must be positive")

    def halved(self) -> "QuadratureSpec":
        return QuadratureSpec(self.tail_sigmas, 2 * self.resolution)

    def nodes(self, s_min: float, s_max: float, sigma: float) -> np.ndarray:
        lo = s_min - self.tail_sigmas * sigma
        hi = s_max + self.tail_sigmas * sigma
        step = sigma / self.resolution
        # Simpson needs an even number of intervals
        half_intervals = int(math.ceil((hi - lo) / (2.0 * step)))
        return np.linspace(lo, hi, 2 * half_intervals + 1)


def _check_caps(config: LeakageConfig, q: int):
    if config.ell > MAX_ORACLE_ELL:
        raise ValueError(f"oracle supports ell <= {MAX_ORACLE_ELL}, got ell = {config.ell}")
    if not 1 <= q <= MAX_ORACLE_Q:
        raise ValueError(f"oracle supports 1 <= q <= {MAX_ORACLE_Q}, got q = {q}")


def _class_densities(config: LeakageConfig, nodes: np.ndarray) -> np.ndarray:
    """p(y | w_H(u) = h) on the nodes, one row per class h."""
    ell = config.ell
    sigma = math.sqrt(config.sigma2)
    if config.masked:
        levels = np.arange(2 * ell + 1)
        weights = config.mask_counts / config.field.order
    else:
        levels = np.arange(ell + 1)
        weights = np.eye(ell + 1)
    phi = norm.pdf(nodes[None, :], loc=levels[:, None], scale=sigma)
    return weights @ phi


def _entropy_1d(density: np.ndarray, nodes: np.ndarray) -> float:
    return float(simpson(entr(density), x=nodes) / LN2)


def _entropy_2d(density: np.ndarray, nodes: np.ndarray) -> float:
    inner = simpson(entr(density), x=nodes, axis=1)
    return float(simpson(inner, x=nodes) / LN2)


def _entropy_given_t(config: LeakageConfig, q: int, quad: QuadratureSpec) -> float:
    """
    H(Y|T) averaged over plaintext vectors.

    Relabelling t -> t xor c together with k -> k xor c leaves p(y|t) unchanged up to
    the key order, so the first plaintext is fixed to zero.
    """
    nodes = quad.nodes(0.0, config.max_leakage, math.sqrt(config.sigma2))
    densities = _class_densities(config, nodes)
    order = config.field.order
    keys = np.arange(order)

    if q == 1:
        classes = config.sbox_hw[keys]
        return _entropy_1d(densities[classes].mean(axis=0), nodes)

    total = []
    first = densities[config.sbox_hw[keys]]
    for t2 in range(order):
        second = densities[config.sbox_hw[t2 ^ keys]]
        joint = first.T @ second / order
        total.append(_entropy_2d(joint, nodes))
    return math.fsum(total) / order


def _entropy_given_u(config: LeakageConfig, q: int, quad: QuadratureSpec) -> float:
    """Given u the traces are independent and each u_i is uniform, so H(Y|U) = q * E_h H(Y_1 | h)."""
    nodes = quad.nodes(0.0, config.max_leakage, math.sqrt(config.sigma2))
    densities = _class_densities(config, nodes)
    ell = config.ell
    terms = [
        comb(ell, h, exact=True) / config.field.order * _entropy_1d(densities[h], nodes)
        for h in range(ell + 1)
    ]
    return q * math.fsum(terms)


def _entropy_given_x(config: LeakageConfig, q: int, quad: QuadratureSpec) -> float:
    sigma = math.sqrt(config.sigma2)
    nodes = quad.nodes(0.0, 0.0, sigma)
    return q * _entropy_1d(norm.pdf(nodes, scale=sigma), nodes)


def entropy_exact_small(config: LeakageConfig, q: int, conditioning: str,
                        quad: QuadratureSpec = QuadratureSpec()) -> float:
    """
    Exact conditional differential entropy of the leakage, in bits.

    Args:
        config: channel with ell <= 3
        q: number of traces, 1 or 2
        conditioning: 'T', 'U' or 'X'
        quad: quadrature rule

    Returns:
        H(Y|T), H(Y|U) or H(Y|X)
    """
    _check_caps(config, q)
    if conditioning == "T":
        return _entropy_given_t(config, q, quad)
    if conditioning == "U":
        return _entropy_given_u(config, q, quad)
    if conditioning == "X":
        return _entropy_given_x(config, q, quad)
    raise ValueError(f"conditioning must be one of {CONDITIONINGS}, got {conditioning!r}")


def mi_exact_small(config: LeakageConfig, q: int,
                   quad: QuadratureSpec = QuadratureSpec()) -> Tuple[float, float]:
    """
    Exact (I(X;Y|T), I(U;Y|T)) in bits for a tiny channel.

    Both are differences against the same H(Y|T) evaluation.
    """
    h_t = entropy_exact_small(config, q, "T", quad)
    h_u = entropy_exact_small(config, q, "U", quad)
    h_x = entropy_exact_small(config, q, "X", quad)
    return h_t - h_x, h_t - h_u


def single_letter_mi_exact(config: LeakageConfig,
                           quad: QuadratureSpec = QuadratureSpec()) -> float:
    """
    Exact I(X_1; Y_1 | T_1) in bits for any word size.

    With one trace and a uniform key, p(y|t) is the leakage mixture over the
    binomial weight classes whatever t is.
    """
    sigma = math.sqrt(config.sigma2)
    nodes = quad.nodes(0.0, config.max_leakage, sigma)
    densities = _class_densities(config, nodes)
    ell = config.ell
    weights = np.array([comb(ell, h, exact=True) for h in range(ell + 1)]) / config.field.order
    return _entropy_1d(weights @ densities, nodes) - _entropy_given_x(config, 1, quad)
