"""Hyperbolic geometry of the unit disk and the SU(1,1) Moebius action.

Conventions used throughout the package:

* points live in the open unit disk, kept away from the boundary by
  ``BOUNDARY_GUARD``;
* the similarity kernel ``d(z, w)`` equals ``sech(rho/2)`` where ``rho``
  is the hyperbolic distance of the curvature -1 metric, so ``d`` is 1
  exactly at coincidence and decays to 0 at the boundary;
* the invariant measure is ``dlam_0 = (1 - |z|^2)^-2 dA`` with ``dA``
  the Lebesgue area element.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

BOUNDARY_GUARD = 1e-12

_DET_TOL = 1e-10
_COMPOSE_TOL = 1e-12


class BoundaryError(ValueError):
    """A point lies on or numerically too close to the unit circle."""


def check_in_disk(z, guard: float = BOUNDARY_GUARD):
    """Validate that z (scalar or array) lies inside the guarded disk."""
    a = np.asarray(z, dtype=complex)
    bad = np.abs(a) >= 1.0 - guard
    if np.any(bad):
        worst = np.max(np.abs(a))
        raise BoundaryError(f"point with |z| = {worst:.17g} violates the boundary guard {guard:g}")
    return z


@dataclass(frozen=True)
class DiskPoint:
    """A validated point of the open unit disk."""

    value: complex

    def __post_init__(self):
        check_in_disk(self.value)

    def __complex__(self) -> complex:
        return complex(self.value)


def as_complex(z) -> complex:
    """Accept DiskPoint or plain complex and return a validated complex."""
    v = complex(z.value) if isinstance(z, DiskPoint) else complex(z)
    check_in_disk(v)
    return v


@dataclass(frozen=True)
class SU11Element:
    """Matrix [[a, b], [conj(b), conj(a)]] with |a|^2 - |b|^2 = 1.

    The constructor renormalizes the pair by the square root of the
    determinant; input with |det - 1| > 1e-10 after normalization is
    rejected as not an SU(1,1) candidate.
    """

    a: complex
    b: complex

    def __post_init__(self):
        a, b = complex(self.a), complex(self.b)
        det = abs(a) ** 2 - abs(b) ** 2
        if det <= 0.0 or not math.isfinite(det):
            raise ValueError(f"|a|^2 - |b|^2 = {det:g} is not positive")
        scale = math.sqrt(det)
        a, b = a / scale, b / scale
        if abs(abs(a) ** 2 - abs(b) ** 2 - 1.0) > _DET_TOL:
            raise ValueError("could not normalize to unit determinant")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @staticmethod
    def identity() -> "SU11Element":
        return SU11Element(1.0, 0.0)

    def inverse(self) -> "SU11Element":
        return SU11Element(self.a.conjugate(), -self.b)

    def compose(self, other: "SU11Element") -> "SU11Element":
        # [[a1,b1],[b1*,a1*]] @ [[a2,b2],[b2*,a2*]]
        a = self.a * other.a + self.b * other.b.conjugate()
        b = self.a * other.b + self.b * other.a.conjugate()
        return SU11Element(a, b)

    def __mul__(self, other: "SU11Element") -> "SU11Element":
        return self.compose(other)

    def trace(self) -> complex:
        return self.a + self.a.conjugate()

    def is_hyperbolic(self) -> bool:
        return abs(self.trace()) > 2.0

    def apply(self, z):
        """Moebius action z -> (a z + b) / (b* z + a*), vectorized."""
        if isinstance(z, DiskPoint):
            z = z.value
        z = np.asarray(z, dtype=complex) if not np.isscalar(z) else z
        w = (self.a * z + self.b) / (self.b.conjugate() * z + self.a.conjugate())
        check_in_disk(w)
        return w

    def __call__(self, z):
        return self.apply(z)


def mobius_apply(g: SU11Element, z):
    """Apply the disk action of g to a point (or array of points)."""
    return g.apply(z)


@dataclass(frozen=True)
class Weight:
    """Weight parameter r > 2 of the analytic function spaces H_r.

    ``c`` is the normalizing constant (r - 1) / pi that makes the
    constant function 1 a unit vector of H_r.
    """

    r: float

    def __post_init__(self):
        if not (self.r > 2.0):
            raise ValueError(f"weight r = {self.r} must exceed 2")

    @property
    def c(self) -> float:
        return (self.r - 1.0) / math.pi

    def is_integer(self) -> bool:
        return float(self.r).is_integer()


def d_kernel(z, w):
    """Similarity kernel (1-|z|^2)^(1/2) (1-|w|^2)^(1/2) / |1 - conj(z) w|.

    Symmetric, Moebius invariant, equal to 1 iff z == w, and equal to
    sech(rho/2) in terms of the curvature -1 hyperbolic distance rho.
    Accepts scalars or broadcastable arrays.
    """
    if isinstance(z, DiskPoint):
        z = z.value
    if isinstance(w, DiskPoint):
        w = w.value
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    num = np.sqrt((1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2))
    out = num / np.abs(1.0 - np.conj(z) * w)
    if out.ndim == 0:
        return float(out)
    return out


def hyperbolic_distance(z, w):
    """Distance of the curvature -1 metric; satisfies d = sech(rho/2)."""
    if isinstance(z, DiskPoint):
        z = z.value
    if isinstance(w, DiskPoint):
        w = w.value
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    t = np.abs(z - w) / np.abs(1.0 - np.conj(z) * w)
    out = 2.0 * np.arctanh(t)
    if out.ndim == 0:
        return float(out)
    return out


def euclidean_radius(rho: float) -> float:
    """Euclidean radius of the hyperbolic circle of radius rho about 0."""
    return math.tanh(rho / 2.0)


def phase_alpha(g: SU11Element) -> float:
    """Angle alpha in (-pi, pi] with exp(i alpha) = a / conj(a)."""
    alpha = 2.0 * cmath.phase(g.a)
    # wrap into (-pi, pi]
    alpha = math.remainder(alpha, 2.0 * math.pi)
    if alpha <= -math.pi:
        alpha += 2.0 * math.pi
    return alpha


def aleph(g: SU11Element) -> complex:
    """Unimodular factor exp(i (pi + alpha)) attached to the orbit point g 0."""
    return cmath.exp(1j * (math.pi + phase_alpha(g)))


def discrete_series_action(w: Weight, g: SU11Element, f, z):
    """Weight-r action (pi_r(g) f)(z) = (a - conj(b) z)^(-r) f(g^{-1} z).

    Only integer weights are accepted: the automorphy factor is then
    single valued and the action is unitary on H_r (checked by
    quadrature in the test suite, not asserted here).
    """
    if not w.is_integer():
        raise ValueError(f"discrete series action needs integer r, got {w.r}")
    r = int(w.r)
    if isinstance(z, DiskPoint):
        z = z.value
    z = np.asarray(z, dtype=complex)
    jac = g.a - g.b.conjugate() * z
    pre = (g.a.conjugate() * z - g.b) / jac
    check_in_disk(pre)
    out = jac ** (-r) * np.asarray(f(pre), dtype=complex)
    if out.ndim == 0:
        return complex(out)
    return out


def random_su11(rng: np.random.Generator, scale: float = 1.0) -> SU11Element:
    """Random group element; scale controls the typical translation length."""
    b = scale * (rng.standard_normal() + 1j * rng.standard_normal())
    phi = rng.uniform(-math.pi, math.pi)
    a = math.sqrt(1.0 + abs(b) ** 2) * cmath.exp(1j * phi)
    return SU11Element(a, b)
