"""Cocompact Fuchsian group machinery: orbits, counting, fundamental domain.

Orbit enumeration walks reduced words breadth-first and deduplicates
matrices projectively (g and -g act identically on the disk).  The
Dirichlet domain about 0 is star shaped, which gives both a pure
d-kernel membership test and an exact sector quadrature rule; tiles
gamma F inherit that rule through the invariance of lam_0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (SU11Element, d_kernel, euclidean_radius,
                       hyperbolic_distance)
from .quadrature import DiskRule, RegionRule, restrict

DEFAULT_DEDUP_TOL = 1e-9
DEFAULT_ENTRY_CAP = 500_000
TIE_TOL = 1e-12

_SQRT2 = math.sqrt(2.0)


class EntryCapError(RuntimeError):
    """Orbit enumeration exceeded the configured entry cap."""


class InsufficientDepthError(RuntimeError):
    """The orbit table is too shallow for the requested computation."""


@dataclass(frozen=True)
class FuchsianGroup:
    generators: tuple
    labels: tuple
    is_trivial: bool = False
    declared_genus: int | None = None

    def __post_init__(self):
        if len(self.generators) != len(self.labels):
            raise ValueError("one label per generator required")

    @property
    def letters(self):
        """Generators followed by their inverses."""
        return tuple(self.generators) + tuple(g.inverse() for g in self.generators)


def trivial_group() -> FuchsianGroup:
    return FuchsianGroup(generators=(), labels=(), is_trivial=True)


def octagon_group() -> FuchsianGroup:
    """Genus-2 test fixture: four side-pairing translations of a regular octagon.

    Generators g_k = [[1+sqrt(2), m e^{i k pi/4}], [m e^{-i k pi/4}, 1+sqrt(2)]]
    with m = sqrt(2 + 2 sqrt(2)); the determinant (1+sqrt 2)^2 - m^2 is 1 exactly.
    """
    a = 1.0 + _SQRT2
    m = math.sqrt(2.0 + 2.0 * _SQRT2)
    gens = tuple(SU11Element(a, m * np.exp(1j * k * math.pi / 4.0)) for k in range(4))
    return FuchsianGroup(generators=gens, labels=("a", "b", "c", "d"), declared_genus=2)


def cyclic_group(g: SU11Element, label: str = "a") -> FuchsianGroup:
    """Group generated by a single element (not cocompact; used as an oracle)."""
    return FuchsianGroup(generators=(g,), labels=(label,))


def write_group_file(group: FuchsianGroup, path):
    """Write the generator file format: Re(a) Im(a) Re(b) Im(b) label_id reserved."""
    lines = ["# diskquant group definition: one generator per line",
             "# Re(a) Im(a) Re(b) Im(b) label_id reserved"]
    for i, g in enumerate(group.generators):
        lines.append(f"{g.a.real!r} {g.a.imag!r} {g.b.real!r} {g.b.imag!r} {i} 0")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_group_file(path) -> FuchsianGroup:
    """Parse a generator file; errors name the offending line number."""
    gens, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}: line {lineno}: expected 6 fields, found {len(parts)}")
            try:
                re_a, im_a, re_b, im_b, label_id, _reserved = (float(p) for p in parts)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            try:
                gens.append(SU11Element(complex(re_a, im_a), complex(re_b, im_b)))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: not an SU(1,1) matrix: {exc}") from None
            labels.append(f"g{int(label_id)}")
    if not gens:
        return trivial_group()
    return FuchsianGroup(generators=tuple(gens), labels=tuple(labels))


def _canonical_sign(a: complex, b: complex):
    """Fix the sign of the pair: g and -g are the same isometry."""
    lead = a.real if abs(a.real) > 1e-6 else a.imag
    if lead < 0.0:
        return -a, -b
    return a, b


@dataclass(frozen=True)
class OrbitTable:
    """Deduplicated enumeration of the orbit of 0, sorted by radius."""

    group: FuchsianGroup
    words: tuple                      # tuples of letter indices
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)   # gamma 0 = b / conj(a)
    radii: np.ndarray = field(repr=False)
    word_lengths: np.ndarray = field(repr=False)
    max_word_length: int
    dedup_tol: float
    frontier_min_radius: float = 1.0

    @property
    def size(self) -> int:
        return self.radii.size

    @property
    def reliable_radius(self) -> float:
        """Largest radius below which no orbit point can be missing.

        Every missed element extends a reduced word of the deepest
        shell, so the minimal radius over the one-step extensions of the
        final frontier (peeked at enumeration time) bounds the first
        missing point from below, provided per-shell minimal
        displacements keep growing with word length (checked on the
        tabulated shells; the estimate degrades to the deepest-shell
        minimum when the check fails).
        """
        if self.group.is_trivial or self.max_word_length == 0:
            return 1.0
        mins = [float(np.min(self.radii[self.word_lengths == L]))
                for L in range(1, self.max_word_length + 1)
                if np.any(self.word_lengths == L)]
        if any(b < a - 1e-12 for a, b in zip(mins, mins[1:])):
            return min(mins[-1], self.frontier_min_radius) if mins else self.frontier_min_radius
        return self.frontier_min_radius

    def element(self, i: int) -> SU11Element:
        return SU11Element(complex(self.a[i]), complex(self.b[i]))

    def shell_sums(self, term_magnitudes) -> np.ndarray:
        """Sum per word-length shell (index = word length)."""
        return np.bincount(self.word_lengths,
                           weights=np.asarray(term_magnitudes, dtype=float),
                           minlength=self.max_word_length + 1)

    def apply_all(self, z) -> np.ndarray:
        """gamma z for every tabulated gamma; z scalar or shape (..., 1)."""
        z = np.asarray(z, dtype=complex)
        return (self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a))


def enumerate_orbit(group: FuchsianGroup, max_word_length: int,
                    dedup_tol: float = DEFAULT_DEDUP_TOL,
                    entry_cap: int = DEFAULT_ENTRY_CAP) -> OrbitTable:
    """Breadth-first reduced-word enumeration with projective dedup.

    No immediate generator-inverse cancellations are explored; distinct
    reduced words reaching the same matrix (surface-group relations) are
    merged by a grid hash at ``dedup_tol``, with straddle-safe neighbor
    probes so grid-boundary roundoff cannot create duplicates.
    """
    if max_word_length < 0:
        raise ValueError("max_word_length must be >= 0")
    if not (1e-12 <= dedup_tol <= 1e-6):
        raise ValueError("dedup_tol outside [1e-12, 1e-6]")

    letters = group.letters
    n_letters = len(letters)
    n_gen = len(group.generators)
    letter_ab = [(g.a, g.b) for g in letters]

    inv_tol = 1.0 / dedup_tol
    fuzz = 0.25 * dedup_tol
    cells: dict = {}
    entries: list = []   # (word, canonical a, canonical b)

    def probe_keys(a: complex, b: complex):
        spans = []
        for x in (a.real, a.imag, b.real, b.imag):
            lo = math.floor((x - fuzz) * inv_tol)
            hi = math.floor((x + fuzz) * inv_tol)
            spans.append((lo,) if lo == hi else (lo, hi))
        for k0 in spans[0]:
            for k1 in spans[1]:
                for k2 in spans[2]:
                    for k3 in spans[3]:
                        yield (k0, k1, k2, k3)

    def try_insert(word, a: complex, b: complex) -> bool:
        a, b = _canonical_sign(a, b)
        key = (math.floor(a.real * inv_tol), math.floor(a.imag * inv_tol),
               math.floor(b.real * inv_tol), math.floor(b.imag * inv_tol))
        for k in probe_keys(a, b):
            for idx in cells.get(k, ()):
                _, ea, eb = entries[idx]
                if (abs(ea.real - a.real) < dedup_tol and abs(ea.imag - a.imag) < dedup_tol
                        and abs(eb.real - b.real) < dedup_tol and abs(eb.imag - b.imag) < dedup_tol):
                    return False
        if len(entries) >= entry_cap:
            raise EntryCapError(f"orbit entry cap {entry_cap} exceeded at word length {len(word)}")
        cells.setdefault(key, []).append(len(entries))
        entries.append((word, a, b))
        return True

    try_insert((), 1.0 + 0.0j, 0.0 + 0.0j)
    frontier = [((), 1.0 + 0.0j, 0.0 + 0.0j)]
    for _ in range(max_word_length):
        nxt = []
        for word, a, b in frontier:
            last = word[-1] if word else None
            for li in range(n_letters):
                if last is not None and (li + n_gen) % (2 * n_gen) == last:
                    continue  # immediate cancellation
                la, lb = letter_ab[li]
                na = a * la + b * lb.conjugate()
                nb = a * lb + b * la.conjugate()
                nword = word + (li,)
                if try_insert(nword, na, nb):
                    nxt.append((nword, na, nb))
        frontier = nxt
        if not frontier:
            break

    def already_tabulated(a: complex, b: complex) -> bool:
        a, b = _canonical_sign(a, b)
        for k in probe_keys(a, b):
            for idx in cells.get(k, ()):
                _, ea, eb = entries[idx]
                if (abs(ea.real - a.real) < dedup_tol and abs(ea.imag - a.imag) < dedup_tol
                        and abs(eb.real - b.real) < dedup_tol and abs(eb.imag - b.imag) < dedup_tol):
                    return True
        return False

    # peek one generation ahead: the closest candidate extension that is
    # not already tabulated bounds the first orbit point the truncated
    # table can miss (extensions may collapse to short tabulated words)
    frontier_min = 1.0
    if frontier and n_letters:
        fa = np.array([e[1] for e in frontier], dtype=complex)
        fb = np.array([e[2] for e in frontier], dtype=complex)
        last_letters = np.array([e[0][-1] if e[0] else -1 for e in frontier])
        cand_a, cand_b, cand_r = [], [], []
        for li in range(n_letters):
            keep = last_letters != (li + n_gen) % (2 * n_gen)
            if not np.any(keep):
                continue
            la, lb = letter_ab[li]
            na = fa[keep] * la + fb[keep] * np.conj(lb)
            nb = fa[keep] * lb + fb[keep] * np.conj(la)
            cand_a.append(na)
            cand_b.append(nb)
            cand_r.append(np.abs(nb / np.conj(na)))
        if cand_a:
            cand_a = np.concatenate(cand_a)
            cand_b = np.concatenate(cand_b)
            cand_r = np.concatenate(cand_r)
            for idx in np.argsort(cand_r, kind="stable"):
                if not already_tabulated(complex(cand_a[idx]), complex(cand_b[idx])):
                    frontier_min = float(cand_r[idx])
                    break

    order = sorted(range(len(entries)),
                   key=lambda i: (abs(entries[i][2] / entries[i][1].conjugate()),
                                  len(entries[i][0]), entries[i][0]))
    words = tuple(entries[i][0] for i in order)
    a = np.array([entries[i][1] for i in order], dtype=complex)
    b = np.array([entries[i][2] for i in order], dtype=complex)
    points = b / np.conj(a)
    return OrbitTable(group=group, words=words, a=a, b=b, points=points,
                      radii=np.abs(points),
                      word_lengths=np.array([len(w) for w in words], dtype=np.int64),
                      max_word_length=max_word_length, dedup_tol=dedup_tol,
                      frontier_min_radius=frontier_min)


def counting_function(table: OrbitTable, s: float) -> int:
    """Number of orbit points with |gamma 0| < s (s must be reliable)."""
    if not (0.0 < s < 1.0):
        raise ValueError("s must lie in (0, 1)")
    if s > table.reliable_radius:
        raise InsufficientDepthError(
            f"s = {s:g} exceeds the reliable radius {table.reliable_radius:g}; "
            "enumerate a deeper table")
    return int(np.searchsorted(table.radii, s, side="left"))


def exponent_probe(table: OrbitTable, r_values):
    """Partial sums of d(gamma 0, 0)^r by word length, one row per r."""
    out = []
    d0 = np.sqrt(1.0 - table.radii ** 2)  # d(gamma 0, 0)
    for r in r_values:
        shell = table.shell_sums(d0 ** r)
        out.append((float(r), np.cumsum(shell).tolist()))
    return out


@dataclass
class FundamentalDomain:
    """Dirichlet domain about 0 with membership and exact quadrature."""

    table: OrbitTable
    tie_tol: float = TIE_TOL
    covolume_cache: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def _nontrivial_points(self):
        radii = self.table.radii
        start = int(np.searchsorted(radii, 1e-14, side="left"))
        return self.table.points[start:], radii[start:]

    def _boundary_points(self) -> np.ndarray:
        """Orbit points whose bisectors can touch the domain (prefiltered)."""
        if "boundary" in self._cache:
            return self._cache["boundary"]
        pts, radii = self._nontrivial_points()
        if pts.size == 0:
            raise InsufficientDepthError("trivial orbit: the domain is the whole disk")
        # upper bound for the domain extent from the nearest points only
        near = pts[: min(64, pts.size)]
        th = np.linspace(0.0, 2.0 * math.pi, 512, endpoint=False)
        q = np.real(np.exp(1j * th)[:, None] / near[None, :])
        smax = np.full(q.shape, np.inf)
        hit = q >= 1.0
        smax[hit] = q[hit] - np.sqrt(q[hit] ** 2 - 1.0)
        s_ub = float(np.max(np.min(smax, axis=1)))
        if not math.isfinite(s_ub):
            raise InsufficientDepthError("domain not bounded by tabulated bisectors; deepen the table")
        rho_ub = 2.0 * math.atanh(min(s_ub * 1.05, 1.0 - 1e-15))
        need = euclidean_radius(2.0 * rho_ub)
        if need > self.table.reliable_radius + 1e-12:
            raise InsufficientDepthError(
                f"domain boundary needs orbit radius {need:.6f} > reliable "
                f"{self.table.reliable_radius:.6f}")
        cut = int(np.searchsorted(radii, min(need + 1e-9, 1.0), side="right"))
        out = pts[:cut]
        self._cache["boundary"] = out
        return out

    def membership(self, z, extra_points=None):
        """True where d(z, 0) >= d(z, p) - tie_tol for every orbit point p.

        The Dirichlet domain is the intersection of the half-spaces of
        its active sides, so the comparison runs over the prefiltered
        boundary set; its completeness is depth-guarded once in
        ``_boundary_points`` (InsufficientDepthError when the table
        cannot certify the side list).
        """
        zin = np.asarray(z, dtype=complex)
        zs = np.atleast_1d(zin)
        pts, _ = self._nontrivial_points()
        if pts.size == 0 and extra_points is None:
            out = np.ones(zs.shape, dtype=bool)
            return bool(out[0]) if zin.ndim == 0 else out
        use = self._boundary_points()
        if extra_points is not None:
            use = np.concatenate([use, np.asarray(extra_points, dtype=complex)])
        d0 = np.sqrt(1.0 - np.abs(zs.ravel()) ** 2)
        ok = np.ones(zs.size, dtype=bool)
        flat = zs.ravel()
        chunk = max(1, 4_000_000 // max(use.size, 1))
        for i in range(0, flat.size, chunk):
            sl = slice(i, min(i + chunk, flat.size))
            dzp = d_kernel(flat[sl][:, None], use[None, :])
            ok[sl] = np.all(d0[sl][:, None] >= dzp - self.tie_tol, axis=1)
        ok = ok.reshape(zs.shape)
        return bool(ok.ravel()[0]) if zin.ndim == 0 else ok

    # -- star-shaped boundary -------------------------------------------

    def radial_extent(self, theta, extra_points=None):
        """Euclidean boundary radius of the domain along each ray angle."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        pts = self._boundary_points()
        if extra_points is not None:
            pts = np.concatenate([pts, np.asarray(extra_points, dtype=complex)])
        # the ray s e^{i theta} meets the bisector of p where
        # s^2 - 2 q s + 1 = 0 with q = Re(e^{i theta} / p)
        q = np.real(np.exp(1j * th)[:, None] / pts[None, :])
        smax = np.full(q.shape, np.inf)
        hit = q >= 1.0
        qh = q[hit]
        smax[hit] = qh - np.sqrt(qh * qh - 1.0)
        out = np.min(smax, axis=1)
        if not np.all(np.isfinite(out)):
            raise InsufficientDepthError("domain not bounded by tabulated bisectors; deepen the table")
        return out if np.asarray(theta).ndim else float(out[0])

    def _active_index(self, theta):
        pts = self._boundary_points()
        q = np.real(np.exp(1j * np.atleast_1d(theta))[:, None] / pts[None, :])
        smax = np.full(q.shape, np.inf)
        hit = q >= 1.0
        qh = q[hit]
        smax[hit] = qh - np.sqrt(qh * qh - 1.0)
        return np.argmin(smax, axis=1)

    def vertex_angles(self, scan: int = 4096) -> np.ndarray:
        """Angles where the active bisector changes (corners of the domain)."""
        if ("corners", scan) in self._cache:
            return self._cache[("corners", scan)]
        th = np.linspace(0.0, 2.0 * math.pi, scan, endpoint=False)
        idx = self._active_index(th)
        corners = []
        for k in range(scan):
            a, b = idx[k], idx[(k + 1) % scan]
            if a == b:
                continue
            lo = th[k]
            hi = th[k] + 2.0 * math.pi / scan
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                if self._active_index(np.array([mid]))[0] == a:
                    lo = mid
                else:
                    hi = mid
            corners.append((0.5 * (lo + hi)) % (2.0 * math.pi))
        out = np.sort(np.array(corners))
        if out.size > 1:
            # bisection from adjacent scan cells can detect one corner twice
            gaps = np.diff(out, append=out[0] + 2.0 * math.pi)
            out = out[gaps > 1e-9]
        self._cache[("corners", scan)] = out
        return out

    def vertices(self) -> np.ndarray:
        ang = self.vertex_angles()
        return self.radial_extent(ang) * np.exp(1j * ang)

    def domain_rule(self, n_radial: int = 24, n_angular: int = 24):
        """Sector rule (nodes, lam_0 weights) for smooth integrals over the domain.

        Gauss-Legendre in angle between consecutive vertex angles and in
        u = s^2 along each ray; spectrally accurate because the domain
        is star shaped about 0 and compactly inside the disk.
        """
        key = ("rule", n_radial, n_angular)
        if key in self._cache:
            return self._cache[key]
        xg, wg = np.polynomial.legendre.leggauss(n_radial)
        xa, wa = np.polynomial.legendre.leggauss(n_angular)
        corners = self.vertex_angles()
        nodes, weights = [], []
        for i in range(corners.size):
            t0 = corners[i]
            t1 = corners[(i + 1) % corners.size] if i + 1 < corners.size \
                else corners[0] + 2.0 * math.pi
            th = 0.5 * (t1 - t0) * (xa + 1.0) + t0
            wth = 0.5 * (t1 - t0) * wa
            umax = self.radial_extent(th) ** 2
            u = 0.5 * umax[None, :] * (xg[:, None] + 1.0)
            wu = 0.5 * umax[None, :] * wg[:, None]
            z = np.sqrt(u) * np.exp(1j * th)[None, :]
            w = 0.5 * wu * wth[None, :] / (1.0 - u) ** 2
            nodes.append(z.ravel())
            weights.append(w.ravel())
        rule = (np.concatenate(nodes), np.concatenate(weights))
        self._cache[key] = rule
        return rule


    def tile_rule(self, elements, n_radial: int = 10, n_angular: int = 10):
        """Pushforward of the sector rule through a list of group elements.

        lam_0 is invariant, so each tile gamma F inherits the domain
        weights unchanged; the union covers the tiles exactly with no
        mask error.  Returns (nodes, lam_0 weights).
        """
        base_nodes, base_weights = self.domain_rule(n_radial, n_angular)
        nodes, weights = [], []
        for g in elements:
            nodes.append(g.apply(base_nodes))
            weights.append(base_weights)
        return np.concatenate(nodes), np.concatenate(weights)


def tiled_lam0_rule(domain: FundamentalDomain, table: OrbitTable,
                    max_shell: int | None = None, tile_radius: float | None = None,
                    n_radial: int = 10, n_angular: int = 10):
    """lam_0 rule over a union of tiles gamma F from the orbit table.

    Tiles are selected by word length (``max_shell``) or, preferably,
    by orbit radius (``tile_radius``), which covers a hyperbolic ball
    and leaves only a thin annulus uncovered.  Spectrally accurate per
    tile; suited to integrands with tile structure near the boundary
    (group-averaged kernels) that defeat plain polar rules.  Callers
    weight the uncovered remainder by their integrand decay.
    """
    if (max_shell is None) == (tile_radius is None):
        raise ValueError("select tiles by exactly one of max_shell / tile_radius")
    if tile_radius is not None:
        if tile_radius > table.reliable_radius:
            raise InsufficientDepthError(
                f"tile selection radius {tile_radius:g} exceeds the reliable radius "
                f"{table.reliable_radius:g}")
        idx = np.nonzero(table.radii <= tile_radius)[0]
    else:
        idx = np.nonzero(table.word_lengths <= max_shell)[0]
    elements = [table.element(int(i)) for i in idx]
    return domain.tile_rule(elements, n_radial, n_angular)


def dirichlet_membership(domain: FundamentalDomain, z) -> bool:
    return domain.membership(z)


def covolume(domain: FundamentalDomain, rule: DiskRule | RegionRule | None = None) -> float:
    """lam_0 area of the fundamental domain.

    With ``rule=None`` the exact star-shaped sector rule is used; a
    DiskRule is masked by the membership predicate (an independent,
    lower-accuracy route kept for cross checks).
    """
    if rule is None:
        _, weights = domain.domain_rule()
        value = float(np.sum(weights))
        domain.covolume_cache = value
        return value
    region = restrict(rule, domain.membership) if isinstance(rule, DiskRule) else rule
    s = region.base.measure_exponent
    # reweight the lam_s rule to integrate the lam_0 indicator
    value = float(np.sum(region.weights * (1.0 - np.abs(region.nodes) ** 2) ** (-s)))
    if domain.covolume_cache is None:
        domain.covolume_cache = value
    return value
