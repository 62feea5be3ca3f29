"""Affine S-lattices and point enumeration inside S-adic boxes.

A lattice is Z_S^d . basis + shift, stored per place.  In exact diagonal
mode every place shares one rational unimodular basis and one rational
shift, and all arithmetic is exact.  In split mode the real basis carries
floats (Haar samples) while the finite-place bases stay rational and
p-integral with unit determinant, tagged with the sampled digit depth.

Enumeration reduces the finite-place ball conditions to one congruence
class mod M per coordinate (the ultrametric makes multiplication by a
GL_d(Z_p) basis norm-preserving, so the conditions transfer to the
Z_S-coordinates directly), then walks the real ellipsoid with coordinate
wise interval pruning on an exact LDL decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import _linalg as la
from .errors import (
    ConfigError,
    DegenerateForm,
    DimensionMismatch,
    InsufficientPadicPrecision,
    InvariantViolation,
    RegionTooLarge,
)
from .sarith import INF, SConfig, TVector, padic_norm, valuation

DEFAULT_MAX_CANDIDATES = 2_000_000


# --- boxes and test functions ---------------------------------------------------


@dataclass(frozen=True)
class SBox:
    """{v : ||v - center||_2 < T_inf, |v_i - center_i|_p <= p^{t_p}}.

    Real condition strict Euclidean, finite conditions closed coordinatewise.
    """

    t: TVector
    center: tuple | None = None

    def center_at(self, d: int):
        if self.center is None:
            return (Fraction(0),) * d
        return self.center

    def volume(self, d: int) -> float:
        """Haar volume: Euclidean d-ball times p^{d t_p} per finite place."""
        unit = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        v = unit * float(self.t.t_inf) ** d
        for p, tp in self.t.t_p.items():
            v *= float(p) ** (d * tp)
        return v


@dataclass(frozen=True)
class TestFunction:
    """Indicator test functions: an SBox, a product box, or a quadric slice.

    product-box: real part is a product of closed intervals, finite part a
    ball |v_i - c_i|_p <= p^{e_p} per place.
    quadric-slice: Q(v) in a real open interval and in a_p + p^{c_p} Z_p per
    finite place, intersected with a bounding SBox.
    """

    kind: str
    box: SBox | None = None
    intervals: tuple | None = None
    finite_center: dict | None = None
    finite_exponent: dict | None = None
    form: object = None
    real_interval: tuple | None = None
    finite_target: dict | None = None

    def support_box(self, ctx: SConfig, d: int) -> SBox:
        if self.kind in ("sbox", "quadric-slice"):
            return self.box
        lo = [Fraction(x) for x, _ in self.intervals]
        hi = [Fraction(x) for _, x in self.intervals]
        center = tuple((a + b) / 2 for a, b in zip(lo, hi))
        # the Euclidean radius covers the corner of the real product box
        corner = sum(((b - a) / 2) ** 2 for a, b in zip(lo, hi))
        t_inf = _isqrt_ceil_fraction(corner) + 1
        t_p = {}
        for p in ctx.primes:
            e = (self.finite_exponent or {}).get(p, 0)
            c = (self.finite_center or {}).get(p, (0,) * d)
            # the support box is centered at the real center, so absorb the
            # p-adic distance between the two centers
            gap = max(
                (
                    -valuation(Fraction(ci) - mi, p)
                    for ci, mi in zip(c, center)
                    if Fraction(ci) != mi
                ),
                default=0,
            )
            t_p[p] = max(e, gap, 0)
        return SBox(TVector(t_inf, t_p, ctx), center)

    def __call__(self, point, ctx: SConfig) -> int:
        if self.kind == "sbox":
            return 1 if _point_in_sbox(point, self.box, ctx) else 0
        if self.kind == "product-box":
            real = point.image(INF)
            for x, (lo, hi) in zip(real, self.intervals):
                if not (lo <= x <= hi):
                    return 0
            for p in ctx.primes:
                # an omitted place constrains to the unit ball Z_p^d, which
                # keeps the support compact in Q_S^d
                e = (self.finite_exponent or {}).get(p, 0)
                c = (self.finite_center or {}).get(p, (0,) * len(real))
                for x, ci in zip(point.image(p), c):
                    if padic_norm(Fraction(x) - Fraction(ci), p) > Fraction(p) ** e:
                        return 0
            return 1
        if self.kind == "quadric-slice":
            if not _point_in_sbox(point, self.box, ctx):
                return 0
            lo, hi = self.real_interval
            real = point.image(INF)
            qv = self.form.value_at(real, INF)
            if not (lo < qv < hi):
                return 0
            for p, (a_p, c_p) in (self.finite_target or {}).items():
                qp = self.form.value_at(point.image(p), p)
                diff = qp - Fraction(a_p)
                if padic_norm(diff, p) > Fraction(p) ** (-c_p):
                    return 0
            return 1
        raise ConfigError(f"unknown test function kind {self.kind}")


def indicator_sbox(box: SBox) -> TestFunction:
    return TestFunction(kind="sbox", box=box)


def indicator_product_box(intervals, finite_exponent=None, finite_center=None):
    return TestFunction(
        kind="product-box",
        intervals=tuple((x, y) for x, y in intervals),
        finite_exponent=dict(finite_exponent or {}),
        finite_center=dict(finite_center or {}),
    )


def indicator_quadric_slice(form, real_interval, finite_target, box: SBox):
    return TestFunction(
        kind="quadric-slice",
        form=form,
        real_interval=tuple(real_interval),
        finite_target=dict(finite_target or {}),
        box=box,
    )


def _point_in_sbox(point, box: SBox, ctx: SConfig) -> bool:
    real = point.image(INF)
    d = len(real)
    c = box.center_at(d)
    if all(isinstance(x, (int, Fraction)) for x in real) and isinstance(
        box.t.t_inf, (int, Fraction)
    ):
        s = sum((Fraction(x) - Fraction(ci)) ** 2 for x, ci in zip(real, c))
        if s >= Fraction(box.t.t_inf) ** 2:
            return False
    else:
        s = sum((float(x) - float(ci)) ** 2 for x, ci in zip(real, c))
        if s >= float(box.t.t_inf) ** 2:
            return False
    for p, tp in box.t.t_p.items():
        for x, ci in zip(point.image(p), c):
            if padic_norm(Fraction(x) - Fraction(ci), p) > Fraction(p) ** tp:
                return False
    return True


# --- lattices ---------------------------------------------------------------------


@dataclass(frozen=True)
class AffineSLattice:
    """Z_S^d @ basis + shift, per place; see the module docstring."""

    dim: int
    ctx: SConfig
    basis_inf: tuple
    shift_inf: tuple
    basis_p: dict
    shift_p: dict
    depth: dict
    exact: bool

    def basis_at(self, place):
        return self.basis_inf if place == INF else self.basis_p[place]

    def shift_at(self, place):
        return self.shift_inf if place == INF else self.shift_p[place]


@dataclass(frozen=True)
class LatticePoint:
    """A lattice point: Z_S-coordinates plus per-place images."""

    coords: tuple
    real: tuple
    finite: dict | None  # None: all finite images equal `real` (exact mode)

    def image(self, place):
        if place == INF or self.finite is None:
            return self.real
        return self.finite[place]

    def is_origin(self) -> bool:
        if self.finite is None:
            return all(x == 0 for x in self.real)
        finite_zero = all(
            all(x == 0 for x in img) for img in self.finite.values()
        )
        return finite_zero and all(abs(float(x)) < 1e-12 for x in self.real)


def affine_slattice(ctx: SConfig, basis, shift=None) -> AffineSLattice:
    """Exact diagonal-mode lattice: one rational unimodular basis (rows)."""
    d = len(basis)
    rows = la.as_matrix(basis)
    # det = +-1 makes |det|_p = 1 at every place at once
    if abs(la.det(rows)) != 1:
        raise ConfigError("exact lattice basis must have determinant +-1")
    for p in ctx.primes:
        # enumeration maps balls through the basis; that needs the basis in
        # GL_d(Z_p).  Any Z_S-lattice has such a presentation: re-basis by
        # GL_d(Z_S) before constructing.
        if any(x.denominator % p == 0 for row in rows for x in row):
            raise InvariantViolation(
                f"basis entries must be {p}-integral; re-basis the lattice"
            )
    if shift is None:
        shift = (Fraction(0),) * d
    shift = tuple(Fraction(x) for x in shift)
    if len(shift) != d:
        raise DimensionMismatch("shift dimension mismatch")
    return AffineSLattice(
        d, ctx, rows, shift,
        {p: rows for p in ctx.primes}, {p: shift for p in ctx.primes},
        {p: None for p in ctx.primes}, True,
    )


def affine_slattice_split(
    ctx: SConfig, basis_inf, basis_p, shift_inf=None, shift_p=None,
    depth=None,
) -> AffineSLattice:
    """Split-mode lattice: float real basis, exact p-integral finite bases."""
    d = len(basis_inf)
    b_inf = tuple(tuple(float(x) for x in row) for row in basis_inf)
    det = _float_det(b_inf)
    if abs(abs(det) - 1.0) > 1e-6:
        raise ConfigError(f"real basis determinant {det} is not +-1")
    bp = {}
    for p in ctx.primes:
        m = la.as_matrix(basis_p[p])
        if any(valuation(x, p) < 0 for row in m for x in row if x != 0):
            raise ConfigError(f"basis at p={p} is not p-integral")
        if valuation(la.det(m), p) != 0:
            raise ConfigError(f"basis at p={p} has non-unit determinant")
        bp[p] = m
    s_inf = tuple(float(x) for x in (shift_inf or (0.0,) * d))
    sp = {
        p: tuple(Fraction(x) for x in (shift_p or {}).get(p, (0,) * d))
        for p in ctx.primes
    }
    dep = {p: (depth or {}).get(p) for p in ctx.primes}
    return AffineSLattice(d, ctx, b_inf, s_inf, bp, sp, dep, False)


def _float_det(m) -> float:
    n = len(m)
    a = [list(row) for row in m]
    out = 1.0
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(a[r][c]))
        if a[piv][c] == 0:
            return 0.0
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            out = -out
        out *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            for k in range(c, n):
                a[r][k] -= f * a[c][k]
    return out


# --- integer square roots on fractions -----------------------------------------------


def _isqrt_floor_fraction(x: Fraction) -> int:
    """floor(sqrt(x)) for x >= 0."""
    if x < 0:
        raise ConfigError("negative radicand")
    return math.isqrt(x.numerator * x.denominator) // x.denominator


def _isqrt_ceil_fraction(x: Fraction) -> int:
    f = _isqrt_floor_fraction(x)
    return f if Fraction(f) * f == x else f + 1


# --- enumeration -----------------------------------------------------------------------


def enumerate_points(
    lat: AffineSLattice, box: SBox, max_candidates: int = DEFAULT_MAX_CANDIDATES
):
    """All points of the lattice inside the box, sorted by their integer
    coordinate representative; exact in the finite places always, and in the
    real place too when the lattice is in exact mode."""
    d = lat.dim
    ctx = lat.ctx
    center = box.center_at(d)
    # finite places: k in w_p + p^{-t_p} Z_p^d componentwise
    residues = {}
    for p in ctx.primes:
        tp = box.t.t_p.get(p, 0)
        ginv = la.inverse(lat.basis_p[p])
        w = la.vec_mat(
            tuple(Fraction(c) - s for c, s in zip(center, lat.shift_p[p])), ginv
        )
        r_p = max(
            tp,
            max((-valuation(x, p) for x in w if x != 0), default=0),
            0,
        )
        s_p = r_p - tp
        if lat.depth[p] is not None and s_p > lat.depth[p]:
            raise InsufficientPadicPrecision(
                f"need {s_p} digits at p={p}, sampled {lat.depth[p]}"
            )
        residues[p] = (r_p, s_p, w)
    r_exp = {p: residues[p][0] for p in ctx.primes}
    big_r = 1
    for p in ctx.primes:
        big_r *= p ** r_exp[p]
    # CRT the per-coordinate congruences m = R w mod p^{s_p}
    mod = 1
    rem = [0] * d
    for p in ctx.primes:
        r_p, s_p, w = residues[p]
        pe = p**s_p
        if pe == 1:
            continue
        for i in range(d):
            target = Fraction(big_r) * w[i]
            t_int = (
                target.numerator * pow(target.denominator, -1, pe)
            ) % pe
            rem[i] = _crt(rem[i], mod, t_int, pe)
        mod *= pe
    # real place: v(n) = n . B + y0 with m = rem + mod * n
    exact_real = lat.exact and isinstance(box.t.t_inf, (int, Fraction)) and all(
        isinstance(x, (int, Fraction)) for x in center
    )
    if exact_real:
        scale = Fraction(mod, big_r)
        b = tuple(
            tuple(scale * x for x in row) for row in lat.basis_inf
        )
        base = la.vec_mat(
            tuple(Fraction(r, big_r) for r in rem), lat.basis_inf
        )
        y0 = tuple(
            bb + s - Fraction(c)
            for bb, s, c in zip(base, lat.shift_inf, center)
        )
        t2 = Fraction(box.t.t_inf) ** 2
    else:
        scale = mod / big_r
        b = tuple(
            tuple(scale * float(x) for x in row) for row in lat.basis_inf
        )
        base = [
            sum(rem[i] / big_r * float(lat.basis_inf[i][j]) for i in range(d))
            for j in range(d)
        ]
        y0 = tuple(
            bb + float(s) - float(c)
            for bb, s, c in zip(base, lat.shift_inf, center)
        )
        t2 = float(box.t.t_inf) ** 2
    ns = _ellipsoid_integer_points(b, y0, t2, max_candidates, exact_real)
    points = []
    for n in ns:
        m = tuple(rem[i] + mod * n[i] for i in range(d))
        k = tuple(Fraction(mi, big_r) for mi in m)
        points.append(_make_point(lat, k))
    points.sort(key=lambda pt: pt.coords)
    return points


def _crt(a1, m1, a2, m2):
    u = pow(m1, -1, m2)
    return (a1 + m1 * ((a2 - a1) * u % m2)) % (m1 * m2)


def _make_point(lat: AffineSLattice, k) -> LatticePoint:
    if lat.exact:
        v = tuple(
            x + s
            for x, s in zip(la.vec_mat(k, lat.basis_inf), lat.shift_inf)
        )
        return LatticePoint(k, v, None)
    real = tuple(
        sum(float(k[i]) * lat.basis_inf[i][j] for i in range(lat.dim))
        + lat.shift_inf[j]
        for j in range(lat.dim)
    )
    finite = {
        p: tuple(
            x + s
            for x, s in zip(la.vec_mat(k, lat.basis_p[p]), lat.shift_p[p])
        )
        for p in lat.ctx.primes
    }
    return LatticePoint(k, real, finite)


def _ellipsoid_integer_points(b, y0, t2, max_candidates, exact):
    """Integer n with ||n.b + y0||^2 < t2, via LDL with interval pruning.

    The recursion peels the last coordinate first; bounds at each level are
    slightly loosened and every leaf is re-tested with the original metric.
    """
    d = len(b)
    h = [[sum(b[i][k] * b[j][k] for k in range(d)) for j in range(d)] for i in range(d)]
    # affine center: n* = -y0 . b^{-1}
    if exact:
        binv = la.inverse(b)
        nstar = tuple(-x for x in la.vec_mat(y0, binv))
    else:
        binv = _float_inverse(b)
        nstar = tuple(
            -sum(y0[i] * binv[i][j] for i in range(d)) for j in range(d)
        )
    diag, lower = _ldl(h, exact)
    out = []
    budget = [max_candidates]
    _fp_recurse(d - 1, [0] * d, t2, diag, lower, nstar, b, y0, t2, out, budget, exact)
    return out


def _ldl(h, exact):
    """h = L D L^T with L unit lower triangular; entries Fraction or float."""
    d = len(h)
    lower = [[(Fraction(0) if exact else 0.0)] * d for _ in range(d)]
    diag = [Fraction(0) if exact else 0.0] * d
    for i in range(d):
        lower[i][i] = Fraction(1) if exact else 1.0
    for j in range(d):
        s = h[j][j] - sum(diag[k] * lower[j][k] * lower[j][k] for k in range(j))
        if (exact and s <= 0) or (not exact and s <= 0.0):
            raise DegenerateForm("lattice Gram not positive definite")
        diag[j] = s
        for i in range(j + 1, d):
            lower[i][j] = (
                h[i][j] - sum(diag[k] * lower[i][k] * lower[j][k] for k in range(j))
            ) / diag[j]
    return diag, lower


def _fp_recurse(level, n, rem, diag, lower, nstar, b, y0, t2, out, budget, exact):
    """Choose n[level] given n[level+1:], with rem the remaining radius^2.

    In the LDL expansion Q(n - n*) = sum_i d_i (z_i + sum_{j>i} L_ji z_j)^2
    with z = n - n*, the term at `level` depends only on deeper coordinates,
    so fixing levels from d-1 downward keeps an exact remaining budget.
    """
    d = len(n)
    z_known = {
        j: n[j] - nstar[j] for j in range(level + 1, d)
    }
    offset = sum(lower[j][level] * z_known[j] for j in range(level + 1, d))
    # d_level * (z_level + offset)^2 <= rem
    bound2 = rem / diag[level]
    if exact:
        half = _isqrt_floor_fraction(bound2) + 1
        center = nstar[level] - offset
        lo = math.ceil(center - half)
        hi = math.floor(center + half)
    else:
        if bound2 < 0:
            return
        half = math.sqrt(bound2) * (1 + 1e-12) + 1e-9
        center = nstar[level] - offset
        lo = math.ceil(center - half)
        hi = math.floor(center + half)
    budget[0] -= max(0, hi - lo + 1)
    if budget[0] < 0:
        raise RegionTooLarge("enumeration budget exhausted")
    for nv in range(lo, hi + 1):
        z = nv - nstar[level]
        term = diag[level] * (z + offset) ** 2
        new_rem = rem - term
        if (exact and new_rem < 0) or (not exact and new_rem < -1e-9 * float(t2)):
            continue
        n[level] = nv
        if level == 0:
            if _leaf_ok(n, b, y0, t2, exact):
                out.append(tuple(n))
        else:
            _fp_recurse(
                level - 1, n, new_rem, diag, lower, nstar, b, y0, t2, out,
                budget, exact,
            )
    n[level] = 0


def _leaf_ok(n, b, y0, t2, exact) -> bool:
    d = len(n)
    v = [sum(n[i] * b[i][j] for i in range(d)) + y0[j] for j in range(d)]
    s = sum(x * x for x in v)
    return s < t2


def _float_inverse(m):
    n = len(m)
    a = [list(row) + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(m)]
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(a[r][c]))
        if a[piv][c] == 0:
            raise DegenerateForm("singular real basis")
        a[c], a[piv] = a[piv], a[c]
        f = a[c][c]
        a[c] = [x / f for x in a[c]]
        for r in range(n):
            if r != c and a[r][c] != 0:
                g = a[r][c]
                a[r] = [x - g * y for x, y in zip(a[r], a[c])]
    return [row[n:] for row in a]


# --- Siegel transforms and counting ------------------------------------------------


def siegel_transform(
    f: TestFunction, lat: AffineSLattice, mode: str = "affine",
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> int:
    """Sum of f over the lattice (affine) or over the nonzero points
    (homogeneous)."""
    if mode not in ("affine", "homogeneous"):
        raise ConfigError("mode must be affine or homogeneous")
    support = f.support_box(lat.ctx, lat.dim)
    total = 0
    for pt in enumerate_points(lat, support, max_candidates):
        if mode == "homogeneous" and pt.is_origin():
            continue
        total += f(pt, lat.ctx)
    return total


def count_in_set(
    lat: AffineSLattice, target, max_candidates: int = DEFAULT_MAX_CANDIDATES
) -> int:
    """Exact number of lattice points in an SBox or indicator target."""
    if isinstance(target, SBox):
        target = indicator_sbox(target)
    return siegel_transform(target, lat, "affine", max_candidates)


def discrepancy(
    lat: AffineSLattice, target, vol: float | None = None,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> float:
    """|#(lattice points in target) - vol(target)|."""
    if vol is None:
        if isinstance(target, SBox):
            vol = target.volume(lat.dim)
        elif target.kind == "sbox":
            vol = target.box.volume(lat.dim)
        else:
            raise ConfigError("volume must be supplied for non-box targets")
    n = count_in_set(lat, target, max_candidates)
    return abs(n - vol)
