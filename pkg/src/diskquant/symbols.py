"""Group-equivariant Berezin calculus: invariant symbols and their algebra.

An element of the quantized algebra is represented by its bi-kernel
k(conj(z), zeta), antianalytic in the first slot, analytic in the
second, invariant under the diagonal group action.  Everything here is
built from coherent-state sums

    k(conj(e1), e2) = (1 - conj(e1) e2)^r *
                      sum_j m_j (1 - conj(e1) b_j)^-r (1 - conj(a_j) e2)^-r,

the symbol of sum_j m_j |e_{a_j}><e_{b_j}|, which makes pair-grid
evaluation and Nystrom compression low-rank matrix products.  Group
sums are truncated by word-length shells; every evaluation reports the
last shell magnitude as its tail proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fuchsian import FundamentalDomain, OrbitTable
from .geometry import Weight, as_complex, d_kernel
from .quadrature import DiskRule, build_disk_rule

_CHUNK = 4_000_000  # complex entries per broadcasting chunk


class ConvergenceError(RuntimeError):
    """Group-sum shells stopped decreasing: outside the convergent regime."""


@dataclass(frozen=True)
class ValueWithTail:
    value: complex
    tail: float
    profile: tuple = ()   # per-shell magnitudes, when the caller wants them

    @property
    def real(self) -> float:
        return float(np.real(self.value))


def _shell_check(shells: np.ndarray, what: str):
    """Raise unless the last two nonempty shells decrease in magnitude."""
    nz = shells[shells > 0.0]
    if nz.size >= 3 and nz[-1] >= nz[-2]:
        raise ConvergenceError(
            f"{what}: last shells {nz[-2]:.3e} -> {nz[-1]:.3e} are not decreasing")


def _shell_check_loose(shells: np.ndarray, what: str):
    """Raise only when the final shell still carries the largest weight.

    Evaluation at group-moved points re-indexes the sum, which makes the
    shell profile peaked rather than monotone; genuine divergence keeps
    the profile rising into the truncation edge.
    """
    nz = shells[shells > 0.0]
    if nz.size >= 3 and nz[-1] >= np.max(nz[:-1]):
        raise ConvergenceError(
            f"{what}: final shell {nz[-1]:.3e} dominates the profile; "
            "the group sum shows no decay at the truncation edge")


class InvariantSymbol:
    """Base class: a weight, a backing orbit table, an evaluator."""

    weight: Weight
    table: OrbitTable
    label: str = "symbol"

    def eval(self, e1, e2):
        """Bi-kernel value at (conj(e1), e2); broadcasts over arrays."""
        raise NotImplementedError

    def eval_with_tail(self, e1, e2):
        return self.eval(e1, e2), 0.0

    def pair_grid(self, e1, e2):
        """Matrix of values over the product grid e1 x e2."""
        a1 = np.asarray(e1, dtype=complex)
        a2 = np.asarray(e2, dtype=complex)
        return self.eval(a1[:, None], a2[None, :])

    def diag(self, pts):
        return self.eval(pts, pts)

    def kernel_factors(self, pts):
        """Low-rank factors (A, B) of the operator kernel matrix.

        The operator representing the symbol acts on L^2(lam_r) with
        kernel k(conj(e1), e2) / (1 - conj(e1) e2)^r; returns A, B with
        kernel-matrix[i, j] = (A @ B.T)[i, j] at e1 = pts[i], e2 = pts[j],
        or None when no low-rank structure is available.
        """
        return None

    def scaled(self, c: complex) -> "ScaledSymbol":
        return ScaledSymbol(self, c)

    def plus(self, other: "InvariantSymbol") -> "SumSymbol":
        return SumSymbol(self, other)


class ConstantSymbol(InvariantSymbol):
    """The symbol of c times the identity operator."""

    def __init__(self, weight: Weight, table: OrbitTable, value: complex = 1.0):
        self.weight = weight
        self.table = table
        self.value = complex(value)
        self.label = f"const({value})"

    def eval(self, e1, e2):
        out = np.broadcast_arrays(np.asarray(e1, dtype=complex),
                                  np.asarray(e2, dtype=complex))[0]
        return np.full(out.shape, self.value, dtype=complex) if out.ndim else self.value


class ScaledSymbol(InvariantSymbol):
    def __init__(self, base: InvariantSymbol, c: complex):
        self.base, self.c = base, complex(c)
        self.weight, self.table = base.weight, base.table
        self.label = f"{c} * {base.label}"

    def eval(self, e1, e2):
        return self.c * self.base.eval(e1, e2)

    def eval_with_tail(self, e1, e2):
        v, t = self.base.eval_with_tail(e1, e2)
        return self.c * v, abs(self.c) * t

    def kernel_factors(self, pts):
        f = self.base.kernel_factors(pts)
        return None if f is None else (self.c * f[0], f[1])


class SumSymbol(InvariantSymbol):
    def __init__(self, x: InvariantSymbol, y: InvariantSymbol):
        if x.weight.r != y.weight.r:
            raise ValueError("summands must share the weight")
        self.x, self.y = x, y
        self.weight, self.table = x.weight, x.table
        self.label = f"{x.label} + {y.label}"

    def eval(self, e1, e2):
        return self.x.eval(e1, e2) + self.y.eval(e1, e2)

    def eval_with_tail(self, e1, e2):
        vx, tx = self.x.eval_with_tail(e1, e2)
        vy, ty = self.y.eval_with_tail(e1, e2)
        return vx + vy, tx + ty

    def kernel_factors(self, pts):
        fx, fy = self.x.kernel_factors(pts), self.y.kernel_factors(pts)
        if fx is None or fy is None:
            return None
        return np.hstack([fx[0], fy[0]]), np.hstack([fx[1], fy[1]])


class CoherentSumSymbol(InvariantSymbol):
    """Symbol of sum_j m_j |e_{ket_j}><e_{bra_j}| with shell bookkeeping."""

    def __init__(self, weight: Weight, table: OrbitTable, coeffs, kets, bras,
                 shells=None, extra_tail: float = 0.0, label: str = "coherent-sum",
                 check_convergence: bool = True):
        self.weight = weight
        self.table = table
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.kets = np.asarray(kets, dtype=complex)
        self.bras = np.asarray(bras, dtype=complex)
        n = self.coeffs.size
        if self.kets.size != n or self.bras.size != n:
            raise ValueError("coeffs, kets and bras must have equal length")
        self.shells = np.zeros(n, dtype=np.int64) if shells is None \
            else np.asarray(shells, dtype=np.int64)
        self.extra_tail = float(extra_tail)
        self.label = label
        self.check_convergence = check_convergence

    @property
    def terms(self) -> int:
        return self.coeffs.size

    def _shell_profile(self, mags: np.ndarray) -> np.ndarray:
        return np.bincount(self.shells, weights=mags,
                           minlength=int(self.shells.max(initial=0)) + 1)

    def eval_with_tail(self, e1, e2):
        r = self.weight.r
        a1 = np.asarray(e1, dtype=complex)
        a2 = np.asarray(e2, dtype=complex)
        out_shape = np.broadcast_shapes(a1.shape, a2.shape)
        z1 = np.broadcast_to(a1, out_shape).ravel()
        z2 = np.broadcast_to(a2, out_shape).ravel()
        vals = np.empty(z1.size, dtype=complex)
        worst_profile = None
        chunk = max(1, _CHUNK // max(self.terms, 1))
        for i in range(0, z1.size, chunk):
            sl = slice(i, min(i + chunk, z1.size))
            c1 = np.conj(z1[sl])[:, None]
            terms = (self.coeffs[None, :]
                     * (1.0 - c1 * self.bras[None, :]) ** (-r)
                     * (1.0 - np.conj(self.kets)[None, :] * z2[sl][:, None]) ** (-r))
            pref = (1.0 - c1[:, 0] * z2[sl]) ** r
            prof = self._shell_profile(
                np.max(np.abs(terms) * np.abs(pref)[:, None], axis=0))
            worst_profile = prof if worst_profile is None else np.maximum(worst_profile, prof)
            vals[sl] = pref * np.sum(terms, axis=1)
        if self.check_convergence and worst_profile is not None:
            _shell_check_loose(worst_profile, self.label)
        tail = self.extra_tail + (float(worst_profile[-1])
                                  if worst_profile is not None and worst_profile.size > 1 else 0.0)
        vals = vals.reshape(out_shape)
        if not out_shape:
            return complex(vals[()]), tail
        return vals, tail

    def eval(self, e1, e2):
        return self.eval_with_tail(e1, e2)[0]

    def pair_grid(self, e1, e2):
        """(len(e1), len(e2)) grid via two coherent factor matrices."""
        r = self.weight.r
        a1 = np.asarray(e1, dtype=complex).ravel()
        a2 = np.asarray(e2, dtype=complex).ravel()
        left = (1.0 - np.conj(a1)[:, None] * self.bras[None, :]) ** (-r) * self.coeffs[None, :]
        right = (1.0 - np.conj(self.kets)[:, None] * a2[None, :]) ** (-r)
        return (1.0 - np.conj(a1)[:, None] * a2[None, :]) ** r * (left @ right)

    def kernel_factors(self, pts):
        r = self.weight.r
        p = np.asarray(pts, dtype=complex).ravel()
        A = (1.0 - np.conj(p)[:, None] * self.bras[None, :]) ** (-r) * self.coeffs[None, :]
        B = (1.0 - np.conj(self.kets)[None, :] * p[:, None]) ** (-r)
        return A, B

    def reduce_by_coefficient(self, rel_tol: float = 1e-13) -> "CoherentSumSymbol":
        """Drop terms with negligible coefficient mass (tail-recorded)."""
        mags = np.abs(self.coeffs)
        keep = mags > rel_tol * float(np.sum(mags))
        dropped = float(np.sum(mags[~keep]))
        return CoherentSumSymbol(self.weight, self.table, self.coeffs[keep],
                                 self.kets[keep], self.bras[keep], self.shells[keep],
                                 extra_tail=self.extra_tail + dropped,
                                 label=self.label + "|reduced",
                                 check_convergence=False)

    def reduce_for_region(self, radius: float, rel_tol: float = 1e-12) -> "CoherentSumSymbol":
        """Drop terms that cannot matter on |points| <= radius.

        Uses the crude per-term bound |m_j| (1+R^2)^r / ((1-R|bra|)(1-R|ket|))^r;
        the dropped mass is carried in ``extra_tail``.
        """
        r, R = self.weight.r, float(radius)
        bound = (np.abs(self.coeffs) * (1.0 + R * R) ** r
                 / ((1.0 - R * np.abs(self.bras)) ** r * (1.0 - R * np.abs(self.kets)) ** r))
        total = float(np.sum(bound))
        keep = bound > rel_tol * total
        dropped = float(np.sum(bound[~keep]))
        return CoherentSumSymbol(self.weight, self.table, self.coeffs[keep],
                                 self.kets[keep], self.bras[keep], self.shells[keep],
                                 extra_tail=self.extra_tail + dropped,
                                 label=self.label + f"|R<={R:g}",
                                 check_convergence=False)


class EvalVector(CoherentSumSymbol):
    """The group-averaged point-evaluation bi-kernel tagged by (z, zeta)."""

    def __init__(self, z: complex, zeta: complex, table: OrbitTable, weight: Weight):
        z = as_complex(z)
        zeta = as_complex(zeta)
        r = weight.r
        gz = table.apply_all(z)
        gzeta = table.apply_all(zeta)
        coeffs = weight.c * (1.0 - np.conj(gz) * gzeta) ** r
        super().__init__(weight, table, coeffs, kets=gz, bras=gzeta,
                         shells=table.word_lengths,
                         label=f"eval({z:.3g},{zeta:.3g})")
        self.z, self.zeta = z, zeta
        if table.size > 1:
            _shell_check(self._shell_profile(np.abs(coeffs)), self.label + " coefficients")

    def eval_transported(self, e1, e2):
        """Same sum with the group applied to the evaluation points instead.

        The alternative arrangement of the group average: each term
        transports (e1, e2) by gamma and keeps (z, zeta) fixed.  Agrees
        with ``eval`` up to the shell tail; used as a consistency check.
        """
        r = self.weight.r
        tab = self.table
        a1 = np.asarray(e1, dtype=complex)
        a2 = np.asarray(e2, dtype=complex)
        shape = np.broadcast_shapes(a1.shape, a2.shape)
        g1 = tab.apply_all(np.broadcast_to(a1, shape).ravel()[:, None])
        g2 = tab.apply_all(np.broadcast_to(a2, shape).ravel()[:, None])
        terms = ((1.0 - np.conj(g1) * g2) ** r * (1.0 - np.conj(self.z) * self.zeta) ** r
                 / ((1.0 - np.conj(self.z) * g2) ** r * (1.0 - np.conj(g1) * self.zeta) ** r))
        vals = self.weight.c * np.sum(terms, axis=1).reshape(shape)
        return vals if shape else complex(vals[()])


def eval_vector(z, zeta, table: OrbitTable, weight: Weight) -> EvalVector:
    """Group-averaged evaluation bi-kernel at (z, zeta)."""
    return EvalVector(z, zeta, table, weight)


def poincare_series(table: OrbitTable, z, eta, weight: Weight) -> ValueWithTail:
    """K(z, eta) = sum over the group of d(gamma eta, z)^r, shell-truncated."""
    if weight.r <= 2.0:
        raise ConvergenceError("the group sum needs r > 2 for a cocompact group")
    z = as_complex(z)
    eta = as_complex(eta)
    terms = d_kernel(table.apply_all(eta), z) ** weight.r
    shells = table.shell_sums(terms)
    if table.size > 1:
        _shell_check(shells, "poincare series")
    tail = float(shells[-1]) if shells.size > 1 else 0.0
    return ValueWithTail(float(np.sum(terms)), tail)


def poincare_sup(table: OrbitTable, weight: Weight, probes) -> float:
    """Max of the group-summed kernel over a probe grid (diagonal z = eta)."""
    best = 0.0
    for p in np.asarray(probes, dtype=complex).ravel():
        best = max(best, poincare_series(table, p, p, weight).real)
    return best


class MatrixSymbol(InvariantSymbol):
    """Exact symbol of a truncated-basis operator (trivial group only)."""

    def __init__(self, op, table: OrbitTable):
        if not table.group.is_trivial:
            raise ValueError("MatrixSymbol is the trivial-group oracle representation")
        self.op = op
        self.weight = op.basis.weight
        self.table = table
        self.label = "matrix-symbol"

    def eval(self, e1, e2):
        r = self.weight.r
        basis = self.op.basis
        a1 = np.asarray(e1, dtype=complex)
        a2 = np.asarray(e2, dtype=complex)
        c1 = basis.coherent_coords(a1)
        c2 = basis.coherent_coords(a2)
        num = np.einsum("...m,mn,...n->...", np.conj(c2), self.op.matrix, c1)
        out = num * (1.0 - np.conj(a1) * a2) ** r
        return complex(out) if out.ndim == 0 else out

    def pair_grid(self, e1, e2):
        r = self.weight.r
        basis = self.op.basis
        a1 = np.asarray(e1, dtype=complex).ravel()
        a2 = np.asarray(e2, dtype=complex).ravel()
        c1 = basis.coherent_coords(a1)          # (n1, m)
        c2 = np.conj(basis.coherent_coords(a2))  # (n2, m)
        num = c1 @ self.op.matrix.T @ c2.T       # (n1, n2)
        return (1.0 - np.conj(a1)[:, None] * a2[None, :]) ** r * num

    def kernel_factors(self, pts):
        basis = self.op.basis
        p = np.asarray(pts, dtype=complex).ravel()
        Q = basis.coherent_coords(p)             # rows: conj(p)^n / sqrt(beta)
        A = Q @ self.op.matrix.T                 # pairs with the first slot
        return A, np.conj(Q)


def toeplitz_symbol_disk_quadrature(phi, table: OrbitTable, weight: Weight,
                                    rule: DiskRule) -> "ToeplitzDiskSymbol":
    return ToeplitzDiskSymbol(phi, table, weight, rule)


class ToeplitzDiskSymbol(InvariantSymbol):
    """Toeplitz symbol via the full-disk lam_r quadrature form."""

    def __init__(self, phi, table: OrbitTable, weight: Weight, rule: DiskRule):
        if rule.measure_exponent != weight.r:
            raise ValueError("needs a rule targeting lam_r")
        self.weight, self.table, self.rule = weight, table, rule
        vals = np.asarray(phi(rule.nodes), dtype=complex)
        if not np.all(np.isfinite(vals.real) & np.isfinite(vals.imag)):
            raise ValueError("phi returned non-finite values on the rule")
        self.phivals = vals
        self.label = "toeplitz(disk-rule)"

    def eval(self, e1, e2):
        r = self.weight.r
        xi = self.rule.nodes
        w = self.rule.weights * self.phivals
        a1 = np.asarray(e1, dtype=complex)
        a2 = np.asarray(e2, dtype=complex)
        shape = np.broadcast_shapes(a1.shape, a2.shape)
        z1 = np.broadcast_to(a1, shape).ravel()
        z2 = np.broadcast_to(a2, shape).ravel()
        out = np.empty(z1.size, dtype=complex)
        chunk = max(1, _CHUNK // xi.size)
        for i in range(0, z1.size, chunk):
            sl = slice(i, min(i + chunk, z1.size))
            c1 = np.conj(z1[sl])[:, None]
            kern = (w[None, :]
                    * (1.0 - c1 * xi[None, :]) ** (-r)
                    * (1.0 - np.conj(xi)[None, :] * z2[sl][:, None]) ** (-r))
            out[sl] = (1.0 - c1[:, 0] * z2[sl]) ** r * np.sum(kern, axis=1)
        out *= self.weight.c
        out = out.reshape(shape)
        return complex(out[()]) if not shape else out


def atoms_from_density(phi, domain: FundamentalDomain, n_radial: int = 16,
                       n_angular: int = 16):
    """Discretize phi dlam_0 over the fundamental domain into point atoms."""
    nodes, weights = domain.domain_rule(n_radial, n_angular)
    vals = np.asarray(phi(nodes), dtype=complex)
    return nodes, weights * vals


def measure_toeplitz_symbol(atoms, table: OrbitTable, weight: Weight,
                            domain: FundamentalDomain | None = None,
                            translate_tol: float = 1e-11) -> CoherentSumSymbol:
    """Symbol of the Toeplitz operator whose symbol is an atomic measure on F.

    ``atoms`` is a sequence of (point, weight) pairs or a (points, weights)
    array pair.  Each atom is group-translated with coefficients
    c (1-|gamma eta|^2)^r; translates below ``translate_tol`` relative
    coefficient mass are dropped into the tail.
    """
    if isinstance(atoms, tuple) and len(atoms) == 2:
        pts = np.asarray(atoms[0], dtype=complex).ravel()
        wts = np.asarray(atoms[1], dtype=complex).ravel()
    else:
        pts = np.array([as_complex(p) for p, _ in atoms], dtype=complex)
        wts = np.array([complex(c) for _, c in atoms], dtype=complex)
    if pts.size != wts.size:
        raise ValueError("atom points and weights must pair up")
    if domain is not None:
        ok = domain.membership(pts)
        if not np.all(ok):
            bad = pts[~np.atleast_1d(ok)][0]
            raise ValueError(f"atom {bad!r} lies outside the fundamental domain")
    r = weight.r
    trans = table.apply_all(pts[:, None])                 # (atoms, group)
    coeff = weight.c * wts[:, None] * (1.0 - np.abs(trans) ** 2) ** r
    shells = np.broadcast_to(table.word_lengths[None, :], trans.shape)
    mags = np.abs(coeff)
    total = float(np.sum(mags))
    keep = mags > translate_tol * max(total, 1e-300)
    dropped = float(np.sum(mags[~keep]))
    sym = CoherentSumSymbol(weight, table, coeff[keep], kets=trans[keep],
                            bras=trans[keep], shells=shells[keep],
                            extra_tail=dropped, label="toeplitz(measure)",
                            check_convergence=False)
    return sym


def invariant_toeplitz_symbol(phi, table: OrbitTable, weight: Weight,
                              rule: DiskRule,
                              invariance_check: int = 4,
                              invariance_tol: float = 1e-6) -> ToeplitzDiskSymbol:
    """Toeplitz symbol of a bounded invariant function (disk-rule form).

    The invariance of phi is spot-checked on a few tabulated group
    elements before building the symbol.
    """
    if table.size > 1 and invariance_check > 0:
        pts = np.array([0.11 + 0.07j, -0.2 + 0.31j, 0.4 - 0.22j, -0.33 - 0.18j])
        idx = np.linspace(1, table.size - 1, invariance_check).astype(int)
        base = np.asarray(phi(pts), dtype=complex)
        scale = float(np.max(np.abs(base))) + 1e-30
        for i in idx:
            moved = np.asarray(phi(table.element(int(i)).apply(pts)), dtype=complex)
            rel = float(np.max(np.abs(moved - base))) / scale
            if rel > invariance_tol:
                raise ValueError(f"phi is not invariant: relative deviation {rel:.3e} "
                                 f"on table element {i}")
    return ToeplitzDiskSymbol(phi, table, weight, rule)


def invariant_bump(table: OrbitTable, center, p: float = 12.0):
    """Invariant test function: normalized group sum of d(gamma c, .)^p."""
    c = as_complex(center)
    pts = table.apply_all(c)

    def phi(z):
        zz = np.asarray(z, dtype=complex)
        flat = zz.ravel()
        out = np.empty(flat.size, dtype=float)
        chunk = max(1, _CHUNK // pts.size)
        for i in range(0, flat.size, chunk):
            sl = slice(i, min(i + chunk, flat.size))
            out[sl] = np.sum(d_kernel(flat[sl][:, None], pts[None, :]) ** p, axis=1)
        norm = float(np.sum(d_kernel(c, pts) ** p))
        res = out.reshape(zz.shape) / norm
        return res if zz.ndim else float(res[()])

    return phi


class StarSymbol(InvariantSymbol):
    """Symbol of the operator product of two symbols.

    Computed by the calibrated composition integral over the disk: for
    the product (A then B applied second), the first slot pairs with
    the B factor,

        (A o B)(conj(z), zeta) = kappa * int B(conj(z), xi) A(conj(xi), zeta)
                                 * W(z, xi, zeta) dlam_0(xi),

    with W = (1-conj(z) zeta)^r (1-|xi|^2)^r / ((1-conj(z) xi)^r (1-conj(xi) zeta)^r);
    the lam_r rule absorbs (1-|xi|^2)^r dlam_0.
    """

    def __init__(self, A: InvariantSymbol, B: InvariantSymbol, rule: DiskRule,
                 kappa: float | None = None):
        if A.weight.r != B.weight.r:
            raise ValueError("star product needs a common weight")
        if rule.measure_exponent != A.weight.r:
            raise ValueError("star product needs a rule targeting lam_r")
        self.A, self.B, self.rule = A, B, rule
        self.weight, self.table = A.weight, A.table
        self.kappa = A.weight.c if kappa is None else float(kappa)
        self.label = f"({A.label}) * ({B.label})"

    def eval_with_tail(self, e1, e2):
        r = self.weight.r
        xi = self.rule.nodes
        w = self.rule.weights
        a1 = np.asarray(e1, dtype=complex)
        a2 = np.asarray(e2, dtype=complex)
        shape = np.broadcast_shapes(a1.shape, a2.shape)
        z1 = np.broadcast_to(a1, shape).ravel()
        z2 = np.broadcast_to(a2, shape).ravel()
        out = np.empty(z1.size, dtype=complex)
        tail = 0.0
        chunk = max(16, _CHUNK // (4 * xi.size))
        for i in range(0, z1.size, chunk):
            sl = slice(i, min(i + chunk, z1.size))
            bvals, tb = _with_tail(self.B, "pair", z1[sl], xi)
            avals, ta = _with_tail(self.A, "pair", xi, z2[sl])
            c1 = np.conj(z1[sl])[:, None]
            ratio = (w[None, :] * (1.0 - c1 * xi[None, :]) ** (-r)
                     * (1.0 - np.conj(xi)[None, :] * z2[sl][:, None]) ** (-r))
            core = np.einsum("pk,kp->p", bvals * ratio, avals)
            out[sl] = self.kappa * (1.0 - c1[:, 0] * z2[sl]) ** r * core
            tail = max(tail, ta + tb)
        out = out.reshape(shape)
        if not shape:
            return complex(out[()]), tail
        return out, tail

    def eval(self, e1, e2):
        return self.eval_with_tail(e1, e2)[0]


def _with_tail(sym: InvariantSymbol, mode: str, e1, e2):
    """pair_grid plus tail when available (grids do not report tails)."""
    if mode == "pair":
        grid = sym.pair_grid(e1, e2)
        tail = getattr(sym, "extra_tail", 0.0)
        return grid, float(tail)
    raise ValueError(mode)


def _rule_arrays(rule):
    """Accept a DiskRule/RegionRule or a plain (nodes, weights) pair."""
    if isinstance(rule, tuple):
        return np.asarray(rule[0], dtype=complex), np.asarray(rule[1], dtype=float)
    return rule.nodes, rule.weights


def star_product(A: InvariantSymbol, B: InvariantSymbol, rule: DiskRule,
                 kappa: float | None = None) -> StarSymbol:
    """Symbol of the operator product A B (A applied after B)."""
    return StarSymbol(A, B, rule, kappa)


def trace_tau(A: InvariantSymbol, domain: FundamentalDomain,
              rule=None) -> ValueWithTail:
    """Normalized trace: fundamental-domain average of the diagonal symbol."""
    nodes, weights = domain.domain_rule() if rule is None else rule
    cov = domain.covolume_cache
    if cov is None:
        cov = float(np.sum(domain.domain_rule()[1]))
        domain.covolume_cache = cov
    vals, tail = A.eval_with_tail(nodes, nodes) if hasattr(A, "eval_with_tail") \
        else (A.eval(nodes, nodes), 0.0)
    return ValueWithTail(complex(np.sum(weights * vals) / cov), tail / cov)


def l2_norm_sq_integral(A: InvariantSymbol, domain: FundamentalDomain,
                        disk_rule: DiskRule | None = None,
                        domain_orders=(16, 20)) -> float:
    """Square of the Hilbert norm: the (disk x domain) double integral
    of |k(conj(z), eta)|^2 d(z, eta)^(2r) against lam_0 x lam_0."""
    w = A.weight
    if disk_rule is None:
        disk_rule = build_disk_rule(0.0, radial_order=64, angular_order=384,
                                    decay_exponent=w.r)
    if isinstance(A, CoherentSumSymbol) and A.terms > 2048:
        A = A.reduce_by_coefficient()
    zn = disk_rule.nodes
    zw = disk_rule.weights
    fn, fw = domain.domain_rule(*domain_orders)
    total = 0.0
    cost = max(fn.size, getattr(A, "terms", fn.size))
    chunk = max(1, _CHUNK // cost)
    for i in range(0, zn.size, chunk):
        sl = slice(i, min(i + chunk, zn.size))
        grid = A.pair_grid(zn[sl], fn)            # (disk-chunk, domain)
        dd = d_kernel(zn[sl][:, None], fn[None, :]) ** (2.0 * w.r)
        total += float(np.real(np.sum((np.abs(grid) ** 2 * dd)
                                      * zw[sl][:, None] * fw[None, :])))
    return total


def l2_norm_sq_orbit_sum(z, zeta, table: OrbitTable, weight: Weight) -> ValueWithTail:
    """Squared Hilbert norm of the evaluation bi-kernel as a pure group sum.

    Equals c^2 times the value of the transported form of the kernel at
    the swapped pair; real up to the shell tail.  The printed form of
    this sum in the source material couples the wrong points in one
    denominator (it is not even real); the corrected arrangement below
    reproduces the double-integral norm exactly up to the normalization
    bridge calibrated from the trivial-group oracle.
    """
    z = as_complex(z)
    zeta = as_complex(zeta)
    r = weight.r
    gz = table.apply_all(z)
    gzeta = table.apply_all(zeta)
    terms = ((1.0 - np.conj(zeta) * z) ** r * (1.0 - np.conj(gz) * gzeta) ** r
             / ((1.0 - np.conj(gz) * z) ** r * (1.0 - np.conj(zeta) * gzeta) ** r))
    shells = table.shell_sums(np.abs(terms))
    if table.size > 1:
        _shell_check(shells, "l2 orbit sum")
    tail = weight.c ** 2 * (float(shells[-1]) if shells.size > 1 else 0.0)
    total = weight.c ** 2 * complex(np.sum(terms))
    if abs(total.imag) > max(tail, 1e-10 * abs(total)):
        raise ConvergenceError(
            f"l2 orbit sum has imaginary residual {total.imag:.3e} beyond the tail {tail:.3e}")
    return ValueWithTail(total.real, tail)


@dataclass(frozen=True)
class LambdaNormResult:
    value: float
    per_probe_first: np.ndarray
    per_probe_second: np.ndarray
    probes: np.ndarray
    tail: float
    note: str = "probe-grid sup: an under-approximation of the true sup"


def lambda_norm(A: InvariantSymbol, domain: FundamentalDomain, rule: DiskRule,
                probe_grid=None) -> LambdaNormResult:
    """max over the two sup-integrals of |k| d^r against lam_0.

    Both integrals are probed over the closure of the fundamental
    domain, which suffices because the probe integrals are invariant
    under the group action on the probe point.
    """
    w = A.weight
    probes = make_probe_grid(domain, 12, seed=1) if probe_grid is None \
        else np.asarray(probe_grid, dtype=complex).ravel()
    zn, zw = _rule_arrays(rule)
    first = np.empty(probes.size)
    second = np.empty(probes.size)
    tail = 0.0
    for i, p in enumerate(probes):
        dpow = d_kernel(p, zn) ** w.r
        g1, t1 = _with_tail(A, "pair", np.array([p]), zn)
        first[i] = float(np.sum(np.abs(g1[0]) * dpow * zw))
        g2, t2 = _with_tail(A, "pair", zn, np.array([p]))
        second[i] = float(np.sum(np.abs(g2[:, 0]) * dpow * zw))
        tail = max(tail, t1 + t2)
    return LambdaNormResult(value=float(max(first.max(), second.max())),
                            per_probe_first=first, per_probe_second=second,
                            probes=probes, tail=tail)


def make_probe_grid(domain: FundamentalDomain, count: int, seed: int = 0,
                    include_vertices: bool = True) -> np.ndarray:
    """Low-discrepancy points inside the domain plus its vertices."""
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    offset = (seed * golden) % 1.0
    th = 2.0 * math.pi * ((offset + golden * np.arange(count)) % 1.0)
    uu = (np.arange(count) + 0.5) / count
    smax = domain.radial_extent(th)
    pts = np.sqrt(uu) * smax * 0.97 * np.exp(1j * th)
    if include_vertices:
        pts = np.concatenate([pts, 0.999 * domain.vertices()])
    return pts


def reproducing_identity_residual(z, table: OrbitTable, weight: Weight,
                                  rule, probes, kappa: float,
                                  gamma_max_shell: int | None = None) -> float:
    """Residual of the group-sum reproducing identity for evaluation kernels.

    kappa * int e_{conj(z), zeta}(p1, p2) d(z, zeta)^r dlam_0(zeta)
    should restore e_{conj(z), z}(p1, p2); returns the max relative
    residual over the probe pairs (p1, p2).  The integrand's group sum
    may be capped at ``gamma_max_shell`` (coefficients decay fast in the
    word length while the integration variable only enters denominators
    bounded on compact probe sets).
    """
    z = as_complex(z)
    zn, zw = _rule_arrays(rule)
    if gamma_max_shell is None:
        gamma_max_shell = max(1, table.max_word_length - 2)
    sel = table.word_lengths <= gamma_max_shell
    ga, gb = table.a[sel], table.b[sel]
    gz = (ga * z + gb) / (np.conj(gb) * z + np.conj(ga))
    worst = 0.0
    rhs_sym = EvalVector(z, z, table, weight)
    for (p1, p2) in probes:
        vals = np.empty(zn.size, dtype=complex)
        chunk = max(1, _CHUNK // max(gz.size, 1))
        for i in range(0, zn.size, chunk):
            sl = slice(i, min(i + chunk, zn.size))
            zeta = zn[sl][:, None]
            gzeta = (ga[None, :] * zeta + gb[None, :]) \
                / (np.conj(gb)[None, :] * zeta + np.conj(ga)[None, :])
            coeff = weight.c * (1.0 - np.conj(gz)[None, :] * gzeta) ** weight.r
            term = (coeff * (1.0 - np.conj(p1) * p2) ** weight.r
                    / ((1.0 - np.conj(gz)[None, :] * p2) ** weight.r
                       * (1.0 - np.conj(p1) * gzeta) ** weight.r))
            vals[sl] = np.sum(term, axis=1)
        lhs = kappa * complex(np.sum(zw * d_kernel(z, zn) ** weight.r * vals))
        rhs = rhs_sym.eval(p1, p2)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return worst


def mean_value_residual(A: InvariantSymbol, z, weight: Weight, rule: DiskRule,
                        kappa: float) -> float:
    """|kappa * int k(conj(z), zeta) d(z, zeta)^r dlam_0(zeta) - k(conj(z), z)|.

    Relative to |k(conj(z), z)|; the diagonal-restoration identity.
    """
    z = as_complex(z)
    zn, zw = _rule_arrays(rule)
    grid, _ = _with_tail(A, "pair", np.array([z]), zn)
    integral = complex(np.sum(zw * d_kernel(z, zn) ** weight.r * grid[0]))
    diag = A.eval(z, z)
    return abs(kappa * integral - diag) / abs(diag)


def sesquiholomorphy_residual(A: InvariantSymbol, z, zeta, h: float = 1e-4):
    """Finite-difference analyticity check in each slot.

    Compares the two difference quotients of the derivative along the
    real and imaginary directions; both residuals are relative.
    """
    z = as_complex(z)
    zeta = as_complex(zeta)

    def rel(a, b):
        return abs(a - b) / (abs(a) + abs(b) + 1e-300)

    # analytic slot: f(zeta + h) behaves like an analytic function of zeta
    dx = (A.eval(z, zeta + h) - A.eval(z, zeta - h)) / (2.0 * h)
    dy = (A.eval(z, zeta + 1j * h) - A.eval(z, zeta - 1j * h)) / (2.0j * h)
    res2 = rel(dx, dy)
    # antianalytic slot: f is analytic in conj(e1), so conjugate steps swap
    dx1 = (A.eval(z + h, zeta) - A.eval(z - h, zeta)) / (2.0 * h)
    dy1 = (A.eval(z + 1j * h, zeta) - A.eval(z - 1j * h, zeta)) / (-2.0j * h)
    res1 = rel(dx1, dy1)
    return max(res1, res2)


def diagonal_invariance_residual(A: InvariantSymbol, pts, n_gamma: int = 6,
                                 max_shell: int | None = None) -> float:
    """Max relative deviation of k(gamma ., gamma .) from k on sample pairs.

    Only group elements of word length up to ``max_shell`` are used: a
    deep translate re-centers the truncated group sum outside its own
    coverage, so invariance is meaningful only below the guard radius.
    """
    tab = A.table
    if tab.size <= 1:
        return 0.0
    if max_shell is None:
        max_shell = max(1, tab.max_word_length - 3)
    cand = np.nonzero((tab.word_lengths >= 1) & (tab.word_lengths <= max_shell))[0]
    if cand.size == 0:
        return 0.0
    pts = np.asarray(pts, dtype=complex).ravel()
    base = A.eval(pts, np.roll(pts, 1))
    scale = float(np.max(np.abs(base))) + 1e-30
    idx = cand[np.linspace(0, cand.size - 1, min(n_gamma, cand.size)).astype(int)]
    worst = 0.0
    for i in idx:
        g = tab.element(int(i))
        moved = A.eval(g.apply(pts), g.apply(np.roll(pts, 1)))
        worst = max(worst, float(np.max(np.abs(moved - base))) / scale)
    return worst
