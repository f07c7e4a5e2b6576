"""Deterministic quadrature on the unit disk for the measures dlam_s.

The measures are dlam_s(z) = (1 - |z|^2)^(s - 2) dA.  Rules are polar
products: Gauss-Jacobi nodes in u = |z|^2 (the Jacobi weight absorbs the
combined boundary exponent s + decay - 2) times uniform angular nodes.
A rule built with a declared ``decay_exponent`` integrates functions of
the form (1 - |z|^2)^decay * (smooth) accurately even when lam_s itself
has infinite mass (s <= 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .geometry import check_in_disk

DEFAULT_RADIAL_ORDER = 96
DEFAULT_ANGULAR_ORDER = 256


class IntegrabilityError(ValueError):
    """s + decay_exponent <= 1: the requested weighted integral diverges."""


class NodeValueError(ValueError):
    """The integrand returned a non-finite value at a quadrature node."""


@dataclass(frozen=True)
class DiskRule:
    """Polar product rule for integrals against dlam_s on the disk."""

    nodes: np.ndarray          # complex, flattened radial x angular grid
    weights: np.ndarray        # positive, same length
    measure_exponent: float    # the s of lam_s
    decay_exponent: float
    radial_order: int
    angular_order: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=complex))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must have equal length")
        if np.any(self.weights <= 0.0):
            raise ValueError("rule weights must be positive")

    @property
    def size(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class RegionRule:
    """A DiskRule restricted to the nodes inside a region."""

    base: DiskRule
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.base.nodes.shape:
            raise ValueError("mask must match the base rule nodes")
        object.__setattr__(self, "mask", m)

    @property
    def nodes(self) -> np.ndarray:
        return self.base.nodes[self.mask]

    @property
    def weights(self) -> np.ndarray:
        return self.base.weights[self.mask]

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))


def build_disk_rule(s: float,
                    radial_order: int = DEFAULT_RADIAL_ORDER,
                    angular_order: int = DEFAULT_ANGULAR_ORDER,
                    decay_exponent: float = 0.0,
                    angular_offset: float = 0.0) -> DiskRule:
    """Build a rule for integrands with (1-|z|^2)^decay behavior against lam_s.

    The combined radial exponent alpha = s + decay - 2 must exceed -1.
    Weights carry the factor (1 - u)^(-decay) so the rule is applied to
    the raw integrand (decay included), while the Gauss-Jacobi nodes see
    only its smooth part.
    """
    alpha = s + decay_exponent - 2.0
    if alpha <= -1.0:
        raise IntegrabilityError(
            f"s + decay_exponent = {s + decay_exponent:g} <= 1 is not integrable on the disk")
    if radial_order < 2 or angular_order < 4:
        raise ValueError("radial_order >= 2 and angular_order >= 4 required")
    x, v = roots_jacobi(radial_order, alpha, 0.0)
    u = 0.5 * (x + 1.0)
    radial_w = v * 0.5 ** (alpha + 1.0) * (1.0 - u) ** (-decay_exponent)
    theta = angular_offset + 2.0 * math.pi * np.arange(angular_order) / angular_order
    radii = np.sqrt(u)
    nodes = (radii[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = np.broadcast_to((radial_w * (math.pi / angular_order))[:, None],
                              (radial_order, angular_order)).ravel().copy()
    check_in_disk(nodes)
    return DiskRule(nodes=nodes, weights=weights, measure_exponent=s,
                    decay_exponent=decay_exponent,
                    radial_order=radial_order, angular_order=angular_order)


def restrict(rule: DiskRule, membership) -> RegionRule:
    """Restrict a rule to the nodes where the membership predicate holds."""
    mask = np.asarray(membership(rule.nodes), dtype=bool)
    if not np.any(mask):
        raise ValueError("membership mask removed every node of the rule")
    return RegionRule(base=rule, mask=mask)


def pairwise_sum(values: np.ndarray):
    """Deterministic tree reduction over a fixed ordering."""
    vals = np.asarray(values).ravel()
    n = vals.size
    if n == 0:
        return vals.dtype.type(0)
    while n > 1:
        half = n // 2
        head = vals[: 2 * half]
        vals = head[0::2] + head[1::2] if n % 2 == 0 else \
            np.concatenate([head[0::2] + head[1::2], vals[-1:]])
        n = vals.size
    return vals[0]


def integrate(rule, f):
    """Sum w_i f(z_i) for a DiskRule or RegionRule.

    ``f`` must accept a complex ndarray and return values of matching
    shape.  Non-finite values are reported with the offending node.
    """
    nodes = rule.nodes
    weights = rule.weights
    vals = np.asarray(f(nodes))
    if vals.shape != nodes.shape:
        raise ValueError("integrand must return one value per node")
    finite = np.isfinite(vals) if not np.iscomplexobj(vals) else \
        np.isfinite(vals.real) & np.isfinite(vals.imag)
    if not np.all(finite):
        idx = int(np.argmin(finite))
        raise NodeValueError(f"integrand not finite at node {nodes[idx]!r} (index {idx})")
    return pairwise_sum(weights * vals)


def lam_mass(s: float) -> float:
    """Total mass of lam_s on the disk, pi / (s - 1), for s > 1."""
    if s <= 1.0:
        raise IntegrabilityError("lam_s has infinite mass for s <= 1")
    return math.pi / (s - 1.0)
