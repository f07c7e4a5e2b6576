"""Classical weighted Bergman space in a truncated orthonormal monomial basis.

This is the group-free brute-force oracle: operators are honest
matrices, symbols and products are exact linear algebra, and every
identity constant of the equivariant calculus is calibrated against it.
The inner product is normalized so that <1, 1> = 1 and the reproducing
kernel is (1 - x conj(z))^(-r) with no prefactor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Weight, as_complex
from .quadrature import DiskRule, integrate

DEFAULT_DEGREE_CAP = 60


class TruncationTailError(ValueError):
    """Kernel truncation error at the requested point exceeds the guard."""


def monomial_norm_sq(w: Weight, n: int) -> float:
    """Squared norm of z^n: Gamma(n+1) Gamma(r) / Gamma(n+r).

    Computed by the stable ratio recursion beta_n = beta_{n-1} n/(n+r-1).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    beta = 1.0
    for k in range(1, n + 1):
        beta *= k / (k + w.r - 1.0)
    return beta


@dataclass(frozen=True)
class MonomialBasis:
    """Orthonormalized monomials 0..degree_cap for a fixed weight."""

    weight: Weight
    degree_cap: int = DEFAULT_DEGREE_CAP
    norms_sq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree_cap < 1:
            raise ValueError("degree_cap must be >= 1")
        r = self.weight.r
        beta = np.empty(self.degree_cap + 1)
        beta[0] = 1.0
        for n in range(1, self.degree_cap + 1):
            beta[n] = beta[n - 1] * n / (n + r - 1.0)
        object.__setattr__(self, "norms_sq", beta)

    @property
    def size(self) -> int:
        return self.degree_cap + 1

    def coherent_coords(self, z) -> np.ndarray:
        """Coordinates of the evaluation vector e_z: conj(z)^n / sqrt(beta_n).

        Vectorized: returns shape (..., size).
        """
        zc = np.conj(np.asarray(z, dtype=complex))[..., None]
        pows = zc ** np.arange(self.size)
        return pows / np.sqrt(self.norms_sq)

    def kernel_tail(self, z, x) -> float:
        """Relative truncation error of (1 - x conj(z))^(-r) at the cap."""
        t = abs(np.conj(complex(z)) * complex(x))
        r = self.weight.r
        if t >= 1.0:
            return math.inf
        if t == 0.0:
            return 0.0
        lead = (1.0 - t) ** (-r)
        n = self.degree_cap + 1
        logc = (math.lgamma(n + r) - math.lgamma(n + 1) - math.lgamma(r)
                + n * math.log(t))
        if logc < -700:
            return 0.0
        term = math.exp(logc)
        tail = 0.0
        for _ in range(400):
            tail += term
            n += 1
            term *= (n + r - 1.0) / n * t
            q = (n + r) / (n + 1) * t
            if q < 1.0 and term / (1.0 - q) < 1e-9 * lead:
                tail += term / (1.0 - q)
                break
        return tail / lead


def reproducing_kernel(w: Weight, z, x) -> complex:
    """Evaluation kernel e_z(x) = (1 - x conj(z))^(-r)."""
    zz = as_complex(z)
    xx = as_complex(x)
    return (1.0 - xx * np.conj(zz)) ** (-w.r)


@dataclass(frozen=True)
class TruncatedOperator:
    """Finite section of an operator in the orthonormal monomial basis."""

    basis: MonomialBasis
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.basis.size, self.basis.size):
            raise ValueError(f"matrix must be {self.basis.size} x {self.basis.size}")
        if not np.all(np.isfinite(m.real) & np.isfinite(m.imag)):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "matrix", m)

    def adjoint(self) -> "TruncatedOperator":
        return TruncatedOperator(self.basis, self.matrix.conj().T)

    def __matmul__(self, other: "TruncatedOperator") -> "TruncatedOperator":
        return TruncatedOperator(self.basis, self.matrix @ other.matrix)

    @staticmethod
    def identity(basis: MonomialBasis) -> "TruncatedOperator":
        return TruncatedOperator(basis, np.eye(basis.size, dtype=complex))

    @staticmethod
    def rank_one(basis: MonomialBasis, u, v) -> "TruncatedOperator":
        """The operator f -> <f, e_v> e_u in the truncated basis."""
        cu = basis.coherent_coords(as_complex(u))
        cv = basis.coherent_coords(as_complex(v))
        return TruncatedOperator(basis, np.outer(cu, cv.conj()))


def toeplitz_matrix(phi, basis: MonomialBasis, rule: DiskRule) -> TruncatedOperator:
    """Matrix of the Toeplitz operator with bounded symbol phi.

    Entries <phi e_n, e_m> in the orthonormal basis, assembled as one
    weighted Vandermonde sandwich over the lam_r rule.
    """
    w = basis.weight
    if rule.measure_exponent != w.r:
        raise ValueError("toeplitz_matrix needs a rule targeting lam_r")
    nodes = rule.nodes
    vals = np.asarray(phi(nodes), dtype=complex)
    if vals.shape != nodes.shape:
        raise ValueError("phi must return one value per node")
    if not np.all(np.isfinite(vals.real) & np.isfinite(vals.imag)):
        raise ValueError("phi returned a non-finite value on the rule nodes")
    powers = nodes[:, None] ** np.arange(basis.size)[None, :]
    scaled = powers / np.sqrt(basis.norms_sq)[None, :]
    mat = w.c * (scaled.conj().T * (rule.weights * vals)[None, :]) @ scaled
    return TruncatedOperator(basis, mat)


def berezin_symbol(A: TruncatedOperator, z, zeta, tail_guard: float = 1e-10):
    """Symbol <A e_z, e_zeta> / <e_z, e_zeta>, vectorized over z/zeta arrays.

    Rejects evaluation points whose kernel truncation tail exceeds the
    guard (the finite basis cannot represent e_z there).
    """
    basis = A.basis
    zz = np.asarray(z, dtype=complex)
    tt = np.asarray(zeta, dtype=complex)
    worst = basis.kernel_tail(np.max(np.abs(zz)) + 0j, np.max(np.abs(tt)) + 0j)
    if worst > tail_guard:
        raise TruncationTailError(
            f"kernel truncation tail {worst:.3e} exceeds guard {tail_guard:g}; "
            "shrink |z| or raise degree_cap")
    ez = basis.coherent_coords(zz)
    et = basis.coherent_coords(tt)
    num = np.einsum("...m,mn,...n->...", et.conj(), A.matrix, ez)
    den = np.einsum("...m,...m->...", et.conj(), ez)
    out = num / den
    if out.ndim == 0:
        return complex(out)
    return out


def operator_sup_norm(A: TruncatedOperator) -> float:
    """Largest singular value of the truncated matrix."""
    return float(np.linalg.svd(A.matrix, compute_uv=False)[0])
