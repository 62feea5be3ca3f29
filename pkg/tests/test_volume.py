"""Tests for quadric slice volumes.

The p-adic engine (Jordan blocks + histogram convolution) is checked
against a direct-count oracle that clears denominators with an integer
scale and evaluates the quadratic form on every residue vector; the two
share only the stabilization criterion, not the counting machinery.  Real
volumes are checked against closed-form section lengths in cylindrical /
polar coordinates, which differ from the engine's eigenbasis quadrature.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pytest

from sqcount.errors import (
    AnisotropicForm,
    ConfigError,
    DegenerateForm,
    FamilyOutOfRange,
    MethodDisagreement,
    NotStabilized,
)
from sqcount.qspace import quadratic_form
from sqcount.sarith import SConfig, valuation
from sqcount.volume import (
    PadicVolumeRequest,
    leading_constant,
    padic_quadric_volume,
    real_quadric_volume,
)

F = Fraction
S0 = SConfig(())
S3 = SConfig((3,))

TERN = ((1, 0, 0), (0, 1, 0), (0, 0, -1))
QUAT = ((1, 0, 0, 0), (0, 1, 0, 0), (0, 0, -1, 0), (0, 0, 0, -1))
HYP2 = ((0, 1), (1, 0))  # Q = 2 x1 x2


def frac_gram(rows):
    return tuple(tuple(F(x) for x in row) for row in rows)


# --- independent p-adic oracle --------------------------------------------------

def oracle_fraction(gram, p, b, s_eff, m):
    """Fraction of y mod p^m with v_p(Q(y) - b) >= s_eff, by direct count.

    Denominators are cleared first: with D the lcm of all denominators,
    the condition becomes D*Q(y) = D*b mod p^(s_eff + v_p(D)), all integer.
    """
    d = len(gram)
    dens = [F(x).denominator for row in gram for x in row]
    dens.append(F(b).denominator)
    big_d = math.lcm(*dens)
    mod_exp = s_eff + valuation(F(big_d), p)
    if mod_exp <= 0:
        return F(1)
    g_int = np.array(
        [[int(F(x) * big_d) for x in row] for row in gram], dtype=np.int64
    )
    b_int = int(F(b) * big_d)
    pm = p**m
    assert pm**d <= 700_000, "oracle instance too large"
    grid = np.indices((pm,) * d).reshape(d, -1).T.astype(np.int64)
    qv = np.einsum("ij,jk,ik->i", grid, g_int, grid)
    hits = int(np.count_nonzero((qv - b_int) % (p**mod_exp) == 0))
    return F(hits, pm**d)


def oracle_volume(gram, p, t=0, a=F(0), c=0, m_cap=6):
    s = 2 * t + c
    b = F(p) ** (2 * t) * F(a)
    prev = None
    for m in range(1, m_cap + 1):
        cur = oracle_fraction(gram, p, b, s, m)
        if prev is not None and cur == prev:
            return F(p) ** (len(gram) * t) * cur
        prev = cur
    pytest.fail(f"oracle did not stabilize by m={m_cap}")


class TestPadicVolume:
    def test_ternary_zero_target_is_one_third(self):
        req = PadicVolumeRequest(3, frac_gram(TERN), t=0, a=F(0), c=1)
        assert padic_quadric_volume(req) == F(1, 3)
        # direct zero count over the 27 residue vectors mod 3
        zeros = sum(
            1
            for x in range(3)
            for y in range(3)
            for z in range(3)
            if (x * x + y * y - z * z) % 3 == 0
        )
        assert zeros == 9
        assert oracle_volume(frac_gram(TERN), 3, 0, F(0), 1) == F(1, 3)

    def test_whole_ball_is_one(self):
        for p in (2, 3, 5):
            req = PadicVolumeRequest(p, frac_gram(TERN), t=0, a=F(0), c=0)
            assert padic_quadric_volume(req) == 1
        # target p^{-1}Z_p contains every value too
        req = PadicVolumeRequest(3, frac_gram(TERN), t=0, a=F(0), c=-1)
        assert padic_quadric_volume(req) == 1

    def test_whole_ball_with_half_integer_gram(self):
        hb = ((F(0), F(1, 2)), (F(1, 2), F(0)))
        req = PadicVolumeRequest(2, hb, t=0, a=F(0), c=0)
        assert padic_quadric_volume(req) == 1

    def test_deeper_ball_matches_exhaustive_count(self):
        req = PadicVolumeRequest(3, frac_gram(TERN), t=1, a=F(0), c=1)
        got = padic_quadric_volume(req)
        assert got == oracle_volume(frac_gram(TERN), 3, 1, F(0), 1)
        assert got == F(11, 9)

    def test_target_with_negative_valuation_center(self):
        # Q(Z_3^3) is 3-integral, so a target around 1/3 is missed entirely
        req = PadicVolumeRequest(3, frac_gram(TERN), t=0, a=F(1, 3), c=1)
        assert padic_quadric_volume(req) == 0
        # but a deep enough ball does reach it
        req2 = PadicVolumeRequest(3, frac_gram(TERN), t=1, a=F(1, 3), c=1)
        got = padic_quadric_volume(req2)
        assert got == oracle_volume(frac_gram(TERN), 3, 1, F(1, 3), 1)
        assert got > 0

    def test_cross_term_block_at_two(self):
        gram = frac_gram(((0, 1, 0), (1, 0, 0), (0, 0, 1)))
        for t, c, a in [(0, 1, F(0)), (0, 2, F(1)), (1, 1, F(0)), (0, 1, F(1, 2))]:
            req = PadicVolumeRequest(2, gram, t=t, a=a, c=c)
            assert padic_quadric_volume(req) == oracle_volume(gram, 2, t, a, c)

    def test_random_integer_grams_match_oracle(self):
        import random

        rng = random.Random(20260816)
        cases = 0
        while cases < 12:
            p = rng.choice([2, 3])
            d = 3
            g = [[0] * d for _ in range(d)]
            for i in range(d):
                for j in range(i, d):
                    g[i][j] = g[j][i] = F(rng.randrange(-3, 4))
            gram = tuple(tuple(row) for row in g)
            if _det3(gram) == 0:
                continue
            t = rng.choice([0, 1]) if p == 2 else 0
            c = rng.choice([0, 1])
            a = F(rng.randrange(0, p))
            got = padic_quadric_volume(
                PadicVolumeRequest(p, gram, t=t, a=a, c=c)
            )
            want = oracle_volume(gram, p, t, a, c)
            assert got == want, (gram, p, t, a, c)
            assert 0 <= got <= F(p) ** (d * t)
            cases += 1

    def test_random_fractional_grams_match_oracle(self):
        import random

        rng = random.Random(7)
        cases = 0
        while cases < 18:
            p = rng.choice([2, 3, 5])
            d = 2
            g = [[0] * d for _ in range(d)]
            for i in range(d):
                for j in range(i, d):
                    g[i][j] = g[j][i] = F(
                        rng.randrange(-4, 5), rng.choice([1, 1, 2, 3])
                    )
            gram = tuple(tuple(row) for row in g)
            if gram[0][0] * gram[1][1] - gram[0][1] ** 2 == 0:
                continue
            t = rng.choice([0, 1])
            c = rng.choice([0, 1, 2])
            a = F(rng.randrange(0, 2 * p), rng.choice([1, 1, p]))
            if p == 5 and 2 * t + c > 2:
                continue  # keep the oracle grid small
            got = padic_quadric_volume(
                PadicVolumeRequest(p, gram, t=t, a=a, c=c)
            )
            want = oracle_volume(gram, p, t, a, c, m_cap=6)
            assert got == want, (gram, p, t, a, c)
            cases += 1

    def test_s_unit_scaling_invariance(self):
        # x -> ux for a p-adic unit u rescales the form by u^2, same volume
        for p, u in [(3, F(5)), (3, F(1, 5)), (2, F(7)), (5, F(2, 3))]:
            gram = frac_gram(TERN)
            scaled = tuple(tuple(u * u * x for x in row) for row in gram)
            for t, c in [(0, 1), (1, 1)]:
                base = padic_quadric_volume(
                    PadicVolumeRequest(p, gram, t=t, a=F(0), c=c)
                )
                same = padic_quadric_volume(
                    PadicVolumeRequest(p, scaled, t=t, a=F(0), c=c)
                )
                assert base == same

    def test_p_power_scaling_identity(self):
        # vol(Q(p.), t) = p^d vol(Q, t-1), from the substitution y = p x
        for p in (2, 3):
            gram = frac_gram(TERN)
            scaled = tuple(tuple(p * p * x for x in row) for row in gram)
            for t, c in [(0, 3), (1, 1), (1, 2)]:
                lhs = padic_quadric_volume(
                    PadicVolumeRequest(p, scaled, t=t, a=F(0), c=c)
                )
                rhs = padic_quadric_volume(
                    PadicVolumeRequest(p, gram, t=t - 1, a=F(0), c=c)
                )
                assert lhs == F(p) ** 3 * rhs

    def test_stabilization_grid_budget_invariance(self):
        forms = {3: frac_gram(TERN), 4: frac_gram(QUAT)}
        for p in (2, 3, 5):
            for d, gram in forms.items():
                req = PadicVolumeRequest(p, gram, t=1, a=F(0), c=1)
                v = padic_quadric_volume(req)
                default_m = max(2, 2 * 1 + 1 + 1)
                again = padic_quadric_volume(
                    PadicVolumeRequest(p, gram, t=1, a=F(0), c=1, m=default_m + 2)
                )
                assert v == again
                assert 0 < v <= F(p) ** d

    def test_not_stabilized_on_tiny_budget(self):
        req = PadicVolumeRequest(3, frac_gram(TERN), t=0, a=F(0), c=1, m=1)
        with pytest.raises(NotStabilized):
            padic_quadric_volume(req)

    def test_degenerate_form_rejected(self):
        req = PadicVolumeRequest(3, frac_gram(((1, 0), (0, 0))), t=0, c=1)
        with pytest.raises(DegenerateForm):
            padic_quadric_volume(req)


def _det3(g):
    return (
        g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
        - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0])
    )


# --- real volumes ---------------------------------------------------------------

def cylindrical_oracle_ternary(t_inf, delta, n=200_000):
    """vol{x^2+y^2-z^2 in (-delta, delta), ||(x,y,z)|| < T} by integrating
    the closed-form z-section length over the cylindrical radius."""
    total = 0.0
    h = t_inf / n
    for i in range(n):
        r = (i + 0.5) * h
        lo = r * r - delta
        hi = min(r * r + delta, t_inf * t_inf - r * r)
        if hi <= max(lo, 0.0):
            continue
        total += 2.0 * math.pi * r * 2.0 * (
            math.sqrt(hi) - math.sqrt(max(lo, 0.0))
        )
    return total * h


def polar_oracle_hyperbola(delta, n=1_000_000):
    """vol{2 x1 x2 in (-delta, delta), ||x|| < 1}: in polar coordinates the
    angular measure of |sin 2t| < u is 4 arcsin(min(1, u))."""
    total = 0.0
    h = 1.0 / n
    for i in range(n):
        r = (i + 0.5) * h
        u = min(1.0, delta / (r * r))
        total += 4.0 * r * math.asin(u)
    return total * h


class TestRealVolume:
    def test_zero_length_interval(self):
        assert real_quadric_volume(TERN, 10.0, (0.5, 0.5)) == (0.0, 0.0)
        assert real_quadric_volume(TERN, 10.0, (0.5, 0.2)) == (0.0, 0.0)

    def test_ternary_example_cross_methods(self):
        v, e = real_quadric_volume(TERN, 10.0, (-0.5, 0.5), method="cross")
        want = cylindrical_oracle_ternary(10.0, 0.5)
        assert e / v < 0.01
        assert abs(v - want) < e + 1e-3 * want

    def test_hyperbola_band_against_polar_oracle(self):
        want = polar_oracle_hyperbola(0.1)
        vi, ei = real_quadric_volume(
            HYP2, 1.0, (-0.1, 0.1), method="standardized-integral"
        )
        assert abs(vi - want) < ei + 1e-3
        vm, em = real_quadric_volume(
            HYP2, 1.0, (-0.1, 0.1), method="montecarlo", seed=11
        )
        assert abs(vm - want) < em

    def test_method_disagreement_with_zero_slack(self):
        with pytest.raises(MethodDisagreement):
            real_quadric_volume(
                TERN, 10.0, (-0.5, 0.5), method="cross",
                n_samples=20_000, tol_factor=0.0,
            )

    def test_definite_form_rejected(self):
        with pytest.raises(AnisotropicForm):
            real_quadric_volume(((1, 0), (0, 1)), 1.0, (-0.1, 0.1))

    def test_singular_gram_rejected(self):
        with pytest.raises(DegenerateForm):
            real_quadric_volume(((1, 1), (1, 1)), 1.0, (-0.1, 0.1))

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError):
            real_quadric_volume(TERN, 1.0, (-0.1, 0.1), method="nope")


# --- leading constant -----------------------------------------------------------

@dataclass(frozen=True)
class _Part:
    a: Fraction
    c: int
    kappa: int


@dataclass(frozen=True)
class _Family:
    """Minimal stand-in following the shrinking-family protocol."""

    kappa_inf: float
    c_inf: float = 0.5
    a_inf: float = 0.0
    finite: dict = field(default_factory=dict)

    def real_interval(self, t_inf):
        half = 0.5 * self.c_inf * t_inf ** (-self.kappa_inf)
        return (self.a_inf - half, self.a_inf + half)

    def finite_target(self, p, t_p):
        part = self.finite[p]
        return part.a, part.c + part.kappa * t_p


class TestLeadingConstant:
    def ternary(self, ctx=S0):
        return quadratic_form(ctx, frac_gram(TERN))

    def test_ratio_table_flat(self):
        res = leading_constant(self.ternary(), _Family(0.0), n_grid=300)
        ratios = [row[2] for row in res.table]
        assert max(ratios) / min(ratios) - 1.0 < 0.02
        assert res.error > 0
        assert abs(res.c_q - ratios[-1]) <= abs(ratios[-1] - ratios[-2]) + 1e-9

    def test_deviation_shrinks_along_ladder(self):
        res = leading_constant(self.ternary(), _Family(0.0), n_grid=300)
        devs = [abs(row[2] - res.c_q) for row in res.table]
        assert devs[-1] <= devs[0]

    def test_linearity_in_interval_length(self):
        r1 = leading_constant(self.ternary(), _Family(0.0, c_inf=0.5), n_grid=300)
        r2 = leading_constant(self.ternary(), _Family(0.0, c_inf=1.0), n_grid=300)
        tol = r1.error + r2.error + 0.02 * abs(r1.c_q)
        assert abs(r1.c_q - r2.c_q) < tol

    def test_volume_doubles_with_t(self):
        res = leading_constant(self.ternary(), _Family(0.0), n_grid=300)
        t_a, v_a, _ = res.table[-2]
        t_b, v_b, _ = res.table[-1]
        assert t_b == 2 * t_a
        assert abs(v_b / v_a - 2.0) < 0.05  # 2^(d-2) with d = 3

    def test_finite_place_factors_cancel_at_level_zero(self):
        base = leading_constant(self.ternary(), _Family(0.0), n_grid=300)
        fam = _Family(0.0, finite={3: _Part(F(0), 1, 0)})
        res = leading_constant(self.ternary(S3), fam, t_p={3: 0}, n_grid=300)
        # vol_3 = 1/3 exactly matches the normalizing 3^{-1}, so c_q agrees
        assert abs(res.c_q - base.c_q) < base.error + res.error + 1e-9

    def test_finite_place_known_multiplier(self):
        base = leading_constant(self.ternary(), _Family(0.0), n_grid=300)
        fam = _Family(0.0, finite={3: _Part(F(0), 1, 0)})
        res = leading_constant(self.ternary(S3), fam, t_p={3: 1}, n_grid=300)
        # vol_3(t=1) = 11/9 against a normalization of 3^{-1} * 3^{d-2}
        mult = float(F(11, 9) / (F(1, 3) * 3))
        tol = base.error * mult + res.error + 1e-9
        assert abs(res.c_q - mult * base.c_q) < tol

    def test_family_out_of_range(self):
        with pytest.raises(FamilyOutOfRange):
            leading_constant(self.ternary(), _Family(1.0), n_grid=64)
        fam = _Family(0.0, finite={3: _Part(F(0), 1, 1)})
        with pytest.raises(FamilyOutOfRange):
            leading_constant(self.ternary(S3), fam, n_grid=64)
        quat = quadratic_form(S3, frac_gram(QUAT))
        fam2 = _Family(0.0, finite={3: _Part(F(0), 1, 2)})
        with pytest.raises(FamilyOutOfRange):
            leading_constant(quat, fam2, n_grid=32)

    def test_quaternary_kappa_one_allowed(self):
        quat = quadratic_form(S3, frac_gram(QUAT))
        fam = _Family(0.0, finite={3: _Part(F(0), 1, 1)})
        res = leading_constant(quat, fam, t_p={3: 0}, n_grid=64, ladder=3)
        assert res.c_q > 0

    def test_definite_form_rejected(self):
        deff = quadratic_form(S0, frac_gram(((1, 0, 0), (0, 1, 0), (0, 0, 1))))
        with pytest.raises(AnisotropicForm):
            leading_constant(deff, _Family(0.0), n_grid=32)

    def test_degenerate_form_rejected(self):
        deg = quadratic_form(S0, frac_gram(((1, 0, 0), (0, 1, 0), (0, 0, 0))))
        with pytest.raises(DegenerateForm):
            leading_constant(deg, _Family(0.0), n_grid=32)

    def test_config_errors(self):
        two = quadratic_form(S0, frac_gram(HYP2))
        with pytest.raises(ConfigError):
            leading_constant(two, _Family(0.0))
        with pytest.raises(ConfigError):
            leading_constant(self.ternary(), _Family(0.0), ladder=1)
