"""Counts of S-points with form values in shrinking targets.

The headline counters N(q, w; Q, I, T) and N(Q_xi, I, T), their volume
predictions, the exact rescaling identity relating them, and ladder sweeps
with a fitted error exponent.

Counting never enumerates the candidate box: after clearing denominators
the points become an integer grid n with per-coordinate congruences, and
the counter iterates only over the d-1 leading coordinates. The last
coordinate is resolved in closed form: the real window gives at most two
integer intervals via exact square roots, and the p-adic value targets
cut congruence classes out of them, counted by floor arithmetic against
a cached class table. That keeps T_inf in the hundreds and |x|_p <= p^2
well inside desk budgets where the naive candidate set has ~10^9 points.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .congruence import CongruenceContext
from .errors import ConfigError, DimensionMismatch, RegionTooLarge
from .qspace import QuadraticFormS
from .sarith import INF, SConfig, TVector, valuation
from .volume import check_family_range, leading_constant

DEFAULT_MAX_CANDIDATES = 5_000_000
MAX_VALUE_MODULUS = 4096


# --- shrinking families ---------------------------------------------------------

@dataclass(frozen=True)
class FinitePart:
    """Target data at one finite place: a_p + p^(c + kappa t_p) Z_p."""

    a: Fraction
    c: int
    kappa: int


@dataclass(frozen=True)
class ShrinkingFamily:
    """T-indexed decreasing target family.

    Real component (a - c T^-kappa / 2, a + c T^-kappa / 2); finite
    components a_p + p^(c_p + kappa_p t_p) Z_p. Places absent from
    `finite` default to the unit target Z_p.
    """

    d: int
    c_inf: Fraction | float
    kappa_inf: float
    a_inf: Fraction | float
    finite: dict

    def real_interval(self, t_inf):
        if self.kappa_inf == 0 and not (
            isinstance(self.c_inf, float) or isinstance(self.a_inf, float)
        ):
            half = Fraction(self.c_inf, 2)
            return (Fraction(self.a_inf) - half, Fraction(self.a_inf) + half)
        half = 0.5 * float(self.c_inf) * float(t_inf) ** (-self.kappa_inf)
        return (float(self.a_inf) - half, float(self.a_inf) + half)

    def finite_target(self, p: int, t_p: int):
        part = self.finite.get(p)
        if part is None:
            return Fraction(0), 0
        return part.a, part.c + part.kappa * t_p


def shrinking_family(
    d: int, c_inf, kappa_inf: float = 0.0, a_inf=0, finite: dict | None = None
) -> ShrinkingFamily:
    if not float(c_inf) > 0:
        raise ConfigError("interval scale c_inf must be positive")
    parts = {}
    for p, part in (finite or {}).items():
        if not isinstance(part, FinitePart):
            a, c, kappa = part
            part = FinitePart(Fraction(a), int(c), int(kappa))
        parts[int(p)] = part
    fam = ShrinkingFamily(d, c_inf, float(kappa_inf), a_inf, parts)
    check_family_range(d, fam)
    return fam


@dataclass(frozen=True)
class SInterval:
    """Concrete target at one scale: open real interval x per-place balls."""

    real: tuple
    finite: dict  # p -> (center a_p, exponent e_p)

    def real_length(self):
        return self.real[1] - self.real[0]

    def volume(self) -> float:
        v = float(self.real_length())
        for p, (_, e) in self.finite.items():
            v *= float(p) ** (-e)
        return v

    def scaled(self, factor: Fraction) -> "SInterval":
        """The image under value scaling v -> factor * v, exactly."""
        factor = Fraction(factor)
        lo = Fraction(self.real[0]) * factor
        hi = Fraction(self.real[1]) * factor
        finite = {
            p: (a * factor, e + valuation(factor, p))
            for p, (a, e) in self.finite.items()
        }
        return SInterval((lo, hi) if factor > 0 else (hi, lo), finite)

    def contains(self, real_value, finite_values: dict) -> bool:
        lo, hi = self.real
        if isinstance(real_value, Fraction) and isinstance(lo, Fraction):
            if not lo < real_value < hi:
                return False
        elif not float(lo) < float(real_value) < float(hi):
            return False
        for p, (a, e) in self.finite.items():
            diff = Fraction(finite_values[p]) - a
            if diff != 0 and valuation(diff, p) < e:
                return False
        return True


def interval_at(family: ShrinkingFamily, t: TVector) -> SInterval:
    finite = {
        p: family.finite_target(p, tp) for p, tp in t.t_p.items()
    }
    return SInterval(family.real_interval(t.t_inf), finite)


# --- the integer fiber counter --------------------------------------------------

def _visqrt(x):
    """Vectorized floor(sqrt(x)) for nonnegative int64 arrays, exact."""
    s = np.sqrt(x.astype(np.float64)).astype(np.int64)
    s = np.maximum(s, 0)
    while True:
        over = s * s > x
        if not np.any(over):
            break
        s[over] -= 1
    while True:
        under = (s + 1) ** 2 <= x
        if not np.any(under):
            break
        s[under] += 1
    return s


def _strict_floor(x: Fraction) -> int:
    """Largest integer strictly below x."""
    return (x.numerator - 1) // x.denominator


def _strict_ceil(x: Fraction) -> int:
    """Smallest integer strictly above x."""
    return x.numerator // x.denominator + 1


@dataclass(frozen=True)
class _Instance:
    """One integer counting problem: points n in Z^d, n = rho mod L
    coordinatewise, |n|^2 < ball2, with W(n) = n G n (integer Gram) in
    [w_lo, w_hi] and n G_mix n = c_val mod m_val.

    G carries the real window; G_mix is the CRT mix of the finite-place
    Grams, so per-place value targets survive forms whose real Gram is
    perturbed away from the finite ones.
    """

    gram: tuple
    gram_mix: tuple
    rho: tuple
    l_mod: int
    ball2: Fraction
    w_lo: int
    w_hi: int
    m_val: int
    c_val: int
    empty: bool = False


def _value_congruences(q_form: QuadraticFormS, r_hat: int, interval: SInterval):
    """Per-prime conditions v_p(n G_p n - rhat^2 a_p) >= e_p + 2 t_p as one
    CRT system n G_mix n = c_val mod m_val.

    Returns (m_val, c_val, gram_mix) or None when some place admits no
    integer values at all.
    """
    d = q_form.dim
    systems = []  # (p^E, D_p G_p mod p^E, target mod p^E)
    for p, (a_p, e_p) in interval.finite.items():
        gram = q_form.gram_at(p)
        d_p = math.lcm(*[Fraction(x).denominator for row in gram for x in row])
        target = Fraction(d_p) * r_hat * r_hat * a_p
        exp = e_p + valuation(Fraction(d_p) * r_hat * r_hat, p)
        if target != 0 and valuation(target, p) < 0:
            if valuation(target, p) >= exp:
                continue  # non-integral center, harmless at this depth
            return None
        if exp <= 0:
            continue
        pe = p**exp
        t_int = target.numerator * pow(target.denominator, -1, pe) % pe
        g_mod = tuple(
            tuple(int(Fraction(x) * d_p) % pe for x in row) for row in gram
        )
        systems.append((pe, g_mod, t_int))
    m_val = 1
    for pe, _, _ in systems:
        m_val *= pe
    gram_mix = [[0] * d for _ in range(d)]
    c_val = 0
    for pe, g_mod, t_int in systems:
        other = m_val // pe
        basis = other * pow(other, -1, pe) % m_val
        c_val = (c_val + basis * t_int) % m_val
        for i in range(d):
            for j in range(d):
                gram_mix[i][j] = (gram_mix[i][j] + basis * g_mod[i][j]) % m_val
    return m_val, c_val, tuple(tuple(row) for row in gram_mix)


def _mod_reduce(x: Fraction, m: int) -> int:
    """x mod m for a fraction whose denominator is invertible mod m."""
    if m == 1:
        return 0
    x = Fraction(x)
    if math.gcd(x.denominator, m) != 1:
        raise ConfigError("congruence center not reducible mod the lattice modulus")
    return x.numerator * pow(x.denominator, -1, m) % m


def _build_instance(
    q_form: QuadraticFormS, xi_scaled, l_mod: int, r_hat: int,
    t_inf, interval: SInterval,
) -> _Instance:
    """Common construction: points x = n / r_hat with n = xi_scaled mod l_mod."""
    d = q_form.dim
    gram = q_form.gram_at(INF)
    dens = [Fraction(x).denominator for row in gram for x in row]
    d_scale = math.lcm(*dens)
    gi = [[int(Fraction(x) * d_scale) for x in row] for row in gram]
    rho = tuple(_mod_reduce(x, l_mod) for x in xi_scaled)
    ball2 = (Fraction(t_inf) * r_hat) ** 2
    scale = Fraction(d_scale) * r_hat * r_hat
    w_lo = _strict_ceil(scale * Fraction(interval.real[0]))
    w_hi = _strict_floor(scale * Fraction(interval.real[1]))
    vc = _value_congruences(q_form, r_hat, interval)
    if vc is None or w_lo > w_hi:
        return _Instance((), (), rho, l_mod, ball2, 0, -1, 1, 0, empty=True)
    m_val, c_val, gram_mix = vc
    if m_val > MAX_VALUE_MODULUS or math.lcm(l_mod, m_val) > MAX_VALUE_MODULUS:
        raise RegionTooLarge(
            f"p-adic value modulus {m_val} (x lattice modulus {l_mod}) "
            "exceeds the fiber-counter budget"
        )
    # bring a nonzero diagonal entry to the last slot when one exists
    perm = list(range(d))
    if gi[d - 1][d - 1] == 0:
        for i in range(d):
            if gi[i][i] != 0:
                perm[i], perm[d - 1] = perm[d - 1], perm[i]
                break
    gp = tuple(tuple(gi[perm[i]][perm[j]] for j in range(d)) for i in range(d))
    gm = tuple(
        tuple(gram_mix[perm[i]][perm[j]] for j in range(d)) for i in range(d)
    )
    rho = tuple(rho[i] for i in perm)
    return _Instance(gp, gm, rho, l_mod, ball2, w_lo, w_hi, m_val, c_val)


def _progression(lo: int, hi: int, residue: int, step: int):
    start = lo + (residue - lo) % step
    if start > hi:
        return np.empty(0, dtype=np.int64)
    return np.arange(start, hi + 1, step, dtype=np.int64)


class _ClassTables:
    """Per-period prefix sums of the admissible last-coordinate classes.

    A class table depends on (b, c) mod m_val of the congruence quadratic;
    its prefix sums make counting an interval of integers O(1) per row:
    #ok in [lo, hi] = C(hi) - C(lo - 1) with
    C(x) = K (floor(x / m) - 1) + cum[x mod m].
    """

    def __init__(self, inst: _Instance, m_big: int):
        self.m_val = inst.m_val
        self.c_val = inst.c_val
        self.m_big = m_big
        self.r = np.arange(m_big, dtype=np.int64)
        self.lattice_ok = self.r % inst.l_mod == inst.rho[-1]
        self.a_mod = inst.gram_mix[-1][-1] % inst.m_val if inst.gram_mix else 0
        self.index: dict = {}
        self.cums: list = []
        self.totals: list = []
        self._cum_arr = None
        self._tot_arr = None

    def _table_id(self, key: int) -> int:
        got = self.index.get(key)
        if got is not None:
            return got
        b_mod, c_mod = divmod(key, self.m_val)
        vals = (self.a_mod * self.r * self.r + b_mod * self.r + c_mod) % self.m_val
        ok = self.lattice_ok & (vals == self.c_val)
        gid = len(self.cums)
        self.index[key] = gid
        self.cums.append(np.cumsum(ok))
        self.totals.append(int(self.cums[-1][-1]))
        self._cum_arr = None
        return gid

    def ids_for(self, b_mod, c_mod):
        keys = b_mod * self.m_val + c_mod
        uniq, inv = np.unique(keys, return_inverse=True)
        gids = np.array([self._table_id(int(k)) for k in uniq], dtype=np.int64)
        if self._cum_arr is None:
            self._cum_arr = np.asarray(self.cums)
            self._tot_arr = np.asarray(self.totals, dtype=np.int64)
        return gids[inv]

    def count(self, ids, lo, hi) -> int:
        """Sum over rows of #{n in [lo[i], hi[i]] : class ok}, empty rows 0."""
        m = self.m_big
        ks = self._tot_arr[ids]
        lo1 = lo - 1
        c_hi = ks * (hi // m - 1) + self._cum_arr[ids, hi % m]
        c_lo = ks * (lo1 // m - 1) + self._cum_arr[ids, lo1 % m]
        return int(np.sum(np.where(hi >= lo, c_hi - c_lo, 0)))


def _count_instance(inst: _Instance, max_candidates: int) -> int:
    if inst.empty:
        return 0
    d = len(inst.gram)
    g = inst.gram
    big_n = _strict_floor(inst.ball2)
    if big_n < 0:
        return 0
    if big_n > (1 << 50):
        raise RegionTooLarge("real radius too large for exact integer counting")
    n_max = math.isqrt(big_n)
    a_last = g[d - 1][d - 1]
    sign = -1 if a_last < 0 else 1
    w_lo, w_hi = (inst.w_lo, inst.w_hi) if sign == 1 else (-inst.w_hi, -inst.w_lo)
    a = sign * a_last
    abs_g = [[abs(v) for v in row] for row in g]
    max_b = 2 * n_max * sum(abs_g[d - 1])
    max_c = n_max * n_max * sum(map(sum, abs_g))
    max_disc = max_b * max_b + 4 * max(a, 1) * (max_c + max(abs(w_lo), abs(w_hi), 1))
    if max_disc >= 1 << 62:
        raise RegionTooLarge("fiber counter coefficients exceed the 64-bit range")
    m_big = math.lcm(inst.l_mod, inst.m_val)
    tables = _ClassTables(inst, m_big)
    gm = inst.gram_mix
    m_val = inst.m_val
    axes = [
        _progression(-n_max, n_max, inst.rho[i], inst.l_mod)
        for i in range(d - 1)
    ]
    total = 0
    seen = 0

    def head_iter():
        if d == 2:
            yield (), 0
            return
        for head in itertools.product(*(axes[i] for i in range(d - 2))):
            s = sum(int(x) * int(x) for x in head)
            if s <= big_n:
                yield tuple(int(x) for x in head), s
        return

    for head, s_head in head_iter():
        vec_axis = axes[d - 2]
        lim = math.isqrt(big_n - s_head)
        x = vec_axis[(vec_axis >= -lim) & (vec_axis <= lim)]
        if len(x) == 0:
            continue
        seen += len(x)
        if seen > max_candidates:
            raise RegionTooLarge(
                f"fiber counter budget exceeded ({seen} prefixes); "
                "raise max_candidates"
            )
        # W(n) = a n_d^2 + b(n') n_d + c(n'), coefficients linear/quadratic in x
        j = d - 2
        b = sign * (
            2 * sum(g[d - 1][i] * head[i] for i in range(j))
            + 2 * g[d - 1][j] * x
        )
        c = sign * (
            sum(g[i][k] * head[i] * head[k] for i in range(j) for k in range(j))
            + 2 * sum(g[j][i] * head[i] for i in range(j)) * x
            + g[j][j] * x * x
        )
        ball_rhs = big_n - s_head - x * x
        sb = _visqrt(ball_rhs)
        if a != 0:
            disc_hi = b * b - 4 * a * (c - w_hi)
            has = disc_hi >= 0
            s_o = _visqrt(np.maximum(disc_hi, 0))
            o_lo = -((b + s_o) // (2 * a))
            o_hi = (-b + s_o) // (2 * a)
            disc_lo = b * b - 4 * a * (c - (w_lo - 1))
            cut = disc_lo >= 0
            s_e = _visqrt(np.maximum(disc_lo, 0))
            e_lo = -((b + s_e) // (2 * a))
            e_hi = (-b + s_e) // (2 * a)
            lo1 = np.maximum(o_lo, -sb)
            hi1 = np.where(cut, np.minimum(e_lo - 1, o_hi), o_hi)
            hi1 = np.minimum(hi1, sb)
            lo2 = np.where(cut, np.maximum(e_hi + 1, o_lo), 1)
            lo2 = np.maximum(lo2, -sb)
            hi2 = np.where(cut, np.minimum(o_hi, sb), 0)
            lo1, hi1 = np.where(has, lo1, 1), np.where(has, hi1, 0)
            lo2, hi2 = np.where(has, lo2, 1), np.where(has, hi2, 0)
        else:
            nz = b != 0
            lin_lo = np.where(b > 0, w_lo - c, w_hi - c)
            lin_hi = np.where(b > 0, w_hi - c, w_lo - c)
            b_safe = np.where(nz, b, 1)
            lo1 = -((-lin_lo) // b_safe)
            hi1 = lin_hi // b_safe
            const_ok = (c >= w_lo) & (c <= w_hi)
            lo1 = np.where(nz, lo1, np.where(const_ok, -sb, 1))
            hi1 = np.where(nz, hi1, np.where(const_ok, sb, 0))
            lo1, hi1 = np.maximum(lo1, -sb), np.minimum(hi1, sb)
            lo2 = np.ones_like(lo1)
            hi2 = np.zeros_like(hi1)
        if m_val > 1:
            b_mix = (
                2 * sum(gm[d - 1][i] * head[i] for i in range(j))
                + 2 * gm[d - 1][j] * x
            ) % m_val
            c_mix = (
                sum(gm[i][k] * head[i] * head[k] for i in range(j) for k in range(j))
                + 2 * sum(gm[j][i] * head[i] for i in range(j)) * x
                + gm[j][j] % m_val * x * x
            ) % m_val
        else:
            b_mix = np.zeros_like(x)
            c_mix = np.zeros_like(x)
        ids = tables.ids_for(b_mix, c_mix)
        total += tables.count(ids, lo1, hi1)
        total += tables.count(ids, lo2, hi2)
    return total


# --- raw counters ----------------------------------------------------------------

def _require_plain_form(q_form: QuadraticFormS, d: int):
    if q_form.dim != d:
        raise DimensionMismatch("form dimension mismatch")
    for place in (INF, *q_form.ctx.primes):
        if any(x != 0 for x in q_form.shift_at(place)):
            raise ConfigError(
                "counters take the shift separately; pass a plain form"
            )
    for place in (INF, *q_form.ctx.primes):
        gram = q_form.gram_at(place)
        if any(not isinstance(x, (int, Fraction)) for row in gram for x in row):
            raise ConfigError("counting needs exact rational Gram matrices")


def _depth_scale(ctx: SConfig, t: TVector) -> int:
    r = 1
    for p, tp in t.t_p.items():
        if tp < 0:
            raise ConfigError("fiber counting needs t_p >= 0")
        r *= p**tp
    return r


def congruence_count(
    cctx: CongruenceContext, q_form: QuadraticFormS, interval: SInterval,
    t: TVector, max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> int:
    """#{k in q Z_S^d + w : Q(k) in interval, k in B_T}, exactly."""
    _require_plain_form(q_form, cctx.d)
    r = _depth_scale(cctx.ctx, t)
    # n = r k runs over n = r w mod q
    inst = _build_instance(
        q_form, tuple(r * Fraction(w) for w in cctx.w), cctx.q, r,
        t.t_inf, interval,
    )
    return _count_instance(inst, max_candidates)


def inhom_count(
    q_form: QuadraticFormS, xi, interval: SInterval, t: TVector,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> int:
    """#{x in Z_S^d + xi : Q(x) in interval, x in B_T}, exactly."""
    d = q_form.dim
    _require_plain_form(q_form, d)
    xi = tuple(Fraction(x) for x in xi)
    if len(xi) != d:
        raise DimensionMismatch("shift dimension mismatch")
    r = _depth_scale(q_form.ctx, t)
    # l_mod is the prime-to-S part of the denominators of xi; S-place poles
    # of xi need no special casing because Z_S shifts can absorb them
    l_mod = 1
    for x in xi:
        den = x.denominator
        for p in q_form.ctx.primes:
            while den % p == 0:
                den //= p
        l_mod = math.lcm(l_mod, den)
    r_hat = r * l_mod
    scaled = tuple(Fraction(r_hat) * x for x in xi)
    inst = _build_instance(q_form, scaled, l_mod, r_hat, t.t_inf, interval)
    return _count_instance(inst, max_candidates)


# --- public counters with predictions --------------------------------------------

@dataclass(frozen=True)
class CountResult:
    n: int
    prediction: float
    ratio: float
    t: TVector
    vol_interval: float
    wall_ms: float


def _prediction(c_q: float, interval: SInterval, t: TVector, d: int,
                q_power: int) -> float:
    return c_q * interval.volume() * t.size() ** (d - 2) / q_power


def _ratio(n: int, prediction: float) -> float:
    return n / prediction if prediction > 0 else math.nan


def count_congruence(
    cctx: CongruenceContext, q_form: QuadraticFormS, family: ShrinkingFamily,
    t: TVector, c_q: float | None = None,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> CountResult:
    """Exact N(q, w; Q, I_T, T) with the c_Q (1/q^d) vol(I) |T|^(d-2)
    prediction."""
    start = time.perf_counter()
    interval = interval_at(family, t)
    n = congruence_count(cctx, q_form, interval, t, max_candidates)
    if c_q is None:
        c_q = leading_constant(q_form, family, t_p=t.t_p).c_q
    pred = _prediction(c_q, interval, t, q_form.dim, cctx.q**q_form.dim)
    wall = (time.perf_counter() - start) * 1000.0
    return CountResult(n, pred, _ratio(n, pred), t, interval.volume(), wall)


def count_inhom(
    q_form: QuadraticFormS, xi, family: ShrinkingFamily, t: TVector,
    c_q: float | None = None, max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> CountResult:
    """Exact N(Q_xi, I_T, T) with the c_Q vol(I) |T|^(d-2) prediction."""
    start = time.perf_counter()
    interval = interval_at(family, t)
    n = inhom_count(q_form, xi, interval, t, max_candidates)
    if c_q is None:
        c_q = leading_constant(q_form, family, t_p=t.t_p).c_q
    pred = _prediction(c_q, interval, t, q_form.dim, 1)
    wall = (time.perf_counter() - start) * 1000.0
    return CountResult(n, pred, _ratio(n, pred), t, interval.volume(), wall)


def rescale_identity_check(
    cctx, q_form: QuadraticFormS, family: ShrinkingFamily,
    t: TVector, max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> bool:
    """N(q, w; Q, I, T) = N(Q_{w/q}, I/q^2, (T_inf/q, t_p)) exactly.

    The left side counts k = q k1 directly; the right side counts k1 on the
    shifted grid, so the equality exercises the interval and radius scaling
    plumbing end to end. cctx may be a CongruenceContext or a plain (q, w)
    pair; the latter admits the trivial q = 1 case.
    """
    if not isinstance(cctx, CongruenceContext):
        q, w = cctx
        cctx = CongruenceContext(
            q_form.dim, int(q), tuple(Fraction(x) for x in w), q_form.ctx
        )
    q = cctx.q
    interval = interval_at(family, t)
    lhs = congruence_count(cctx, q_form, interval, t, max_candidates)
    t_small = TVector(Fraction(t.t_inf) / q, dict(t.t_p), t.ctx)
    xi = tuple(Fraction(w) / q for w in cctx.w)
    rhs = inhom_count(
        q_form, xi, interval.scaled(Fraction(1, q * q)), t_small,
        max_candidates,
    )
    return lhs == rhs


# --- sweeps -----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    results: tuple
    delta_hat: float | None
    complete: bool


def sweep(
    q_form: QuadraticFormS, target, family: ShrinkingFamily, ladder,
    budget_s: float | None = None,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> SweepResult:
    """Counts along a T ladder with predictions and a fitted residual
    exponent delta_hat from |N - prediction| ~ |T|^(d - 2 - kappa - delta).

    target: a CongruenceContext for congruence counts, or a shift vector
    for inhomogeneous counts. One c_Q is extracted at the largest ladder
    scale and reused on every rung, so volume error stays decoupled from
    counting error. A wall-clock budget stops the sweep early (soft:
    partial results return with complete=False).
    """
    check_family_range(q_form.dim, family)
    ladder = list(ladder)
    for prev, nxt in zip(ladder, ladder[1:]):
        if not nxt.dominates(prev):
            raise ConfigError("ladder must be increasing componentwise")
    if not ladder:
        return SweepResult((), None, True)
    congruent = isinstance(target, CongruenceContext)
    c_q = leading_constant(q_form, family, t_p=ladder[-1].t_p).c_q
    results = []
    complete = True
    start = time.monotonic()
    for t in ladder:
        if budget_s is not None and time.monotonic() - start > budget_s:
            complete = False
            break
        if congruent:
            results.append(
                count_congruence(target, q_form, family, t, c_q, max_candidates)
            )
        else:
            results.append(
                count_inhom(q_form, target, family, t, c_q, max_candidates)
            )
    return SweepResult(tuple(results), _fit_delta(q_form.dim, family, results),
                       complete)


def _fit_delta(d: int, family: ShrinkingFamily, results) -> float | None:
    if len(results) < 2:
        return None
    xs = [math.log(r.t.size()) for r in results]
    ys = [math.log(max(abs(r.n - r.prediction), 0.5)) for r in results]
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    den = sum((x - mx) ** 2 for x in xs)
    if den == 0:
        return None
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / den
    return (d - 2 - family.kappa_inf) - slope
