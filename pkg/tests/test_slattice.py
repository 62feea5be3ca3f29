"""Tests for lattice enumeration, Siegel transforms, and discrepancy.

The enumeration engine is checked against a naive oracle that scans a
rectangular superset of integer representatives and tests every candidate
straight from the definitions.
"""

import math
import random
from fractions import Fraction

import pytest

from sqcount import _linalg as la
from sqcount.errors import InsufficientPadicPrecision, RegionTooLarge
from sqcount.qspace import quadratic_form
from sqcount.sarith import INF, SConfig, TVector, padic_norm, valuation
from sqcount.slattice import (
    SBox,
    affine_slattice,
    affine_slattice_split,
    count_in_set,
    discrepancy,
    enumerate_points,
    indicator_product_box,
    indicator_quadric_slice,
    indicator_sbox,
    siegel_transform,
)

S0 = SConfig(())
S2 = SConfig((2,))
S3 = SConfig((3,))
S23 = SConfig((2, 3))


def box(ctx, t_inf, t_p=None, center=None):
    return SBox(TVector(Fraction(t_inf), t_p or {}, ctx), center)


def _denominator_exponent(lat, b, center, p):
    """Upper bound on the power of p in denominators of coordinates k with
    image inside the box: v_p(k_j) >= lo + gmin for every candidate."""
    tp = b.t.t_p.get(p, 0)
    ginv = la.inverse(lat.basis_p[p])
    gmin = min(
        (valuation(x, p) for row in ginv for x in row if x), default=0
    )
    lo = 0
    for i in range(lat.dim):
        cand = [-tp]
        if center[i]:
            cand.append(valuation(center[i], p))
        if lat.shift_p[p][i]:
            cand.append(valuation(lat.shift_p[p][i], p))
        lo = min(lo, min(cand))
    return max(0, -(lo + min(0, gmin)))


def naive_scan_radius(lat, b):
    d = lat.dim
    center = tuple(Fraction(c) for c in b.center_at(d))
    big_r = 1
    for p in lat.ctx.primes:
        big_r *= p ** _denominator_exponent(lat, b, center, p)
    ginf = la.inverse(lat.basis_inf)
    norm1 = max(sum(abs(x) for x in col) for col in zip(*ginf))
    off = math.sqrt(
        sum(float(c - s) ** 2 for c, s in zip(center, lat.shift_inf))
    )
    m_bound = int(big_r * (float(norm1) * (float(b.t.t_inf) + off) + 1)) + 1
    return big_r, m_bound


def naive_points(lat, b):
    """Independent enumeration: scan a rectangular superset of integer
    representatives and test every candidate from the definitions."""
    assert lat.exact
    d, ctx = lat.dim, lat.ctx
    center = tuple(Fraction(c) for c in b.center_at(d))
    big_r, m_bound = naive_scan_radius(lat, b)
    t2 = Fraction(b.t.t_inf) ** 2
    out = []
    from itertools import product

    for m in product(range(-m_bound, m_bound + 1), repeat=d):
        k = tuple(Fraction(mi, big_r) for mi in m)
        v = tuple(
            x + s for x, s in zip(la.vec_mat(k, lat.basis_inf), lat.shift_inf)
        )
        if sum((x - c) ** 2 for x, c in zip(v, center)) >= t2:
            continue
        ok = True
        for p in ctx.primes:
            tp = b.t.t_p.get(p, 0)
            vp = tuple(
                x + s for x, s in zip(la.vec_mat(k, lat.basis_p[p]), lat.shift_p[p])
            )
            for x, c in zip(vp, center):
                if padic_norm(x - c, p) > Fraction(p) ** tp:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(v)
    return sorted(out)


class TestEnumerate:
    def test_half_integer_grid(self):
        # Z_S^2 with S_f={2}: the ball of Euclidean radius 3/2 at depth
        # t_2 = 1 holds the half-integer grid; direct scan gives 25 points
        lat = affine_slattice(S2, la.identity(2))
        b = box(S2, Fraction(3, 2), {2: 1})
        pts = enumerate_points(lat, b)
        got = sorted(pt.real for pt in pts)
        assert len(got) == 25
        assert got == naive_points(lat, b)
        assert (Fraction(1, 2), Fraction(1, 2)) in got
        assert (Fraction(-1), Fraction(1)) in got

    def test_integer_disk_21(self):
        lat = affine_slattice(S0, la.identity(2))
        b = box(S0, Fraction(5, 2))
        pts = enumerate_points(lat, b)
        assert len(pts) == 21
        assert sorted(p.real for p in pts) == naive_points(lat, b)

    def test_shifted_empty(self):
        lat = affine_slattice(S0, la.identity(2), shift=(Fraction(1, 5), 0))
        b = box(S0, Fraction(1, 10))
        assert enumerate_points(lat, b) == []

    def test_deterministic_order(self):
        lat = affine_slattice(S2, la.identity(2))
        b = box(S2, Fraction(3, 2), {2: 1})
        first = [p.coords for p in enumerate_points(lat, b)]
        second = [p.coords for p in enumerate_points(lat, b)]
        assert first == second == sorted(first)

    def test_budget(self):
        lat = affine_slattice(S0, la.identity(2))
        with pytest.raises(RegionTooLarge):
            enumerate_points(lat, box(S0, 1000), max_candidates=100)

    def test_rejects_non_p_integral_basis(self):
        from sqcount.errors import InvariantViolation

        with pytest.raises(InvariantViolation):
            affine_slattice(
                S2, ((Fraction(2), Fraction(1, 2)), (Fraction(2), Fraction(1)))
            )
        # the same matrix is fine when 2 is not a finite place
        affine_slattice(
            S3, ((Fraction(2), Fraction(1, 2)), (Fraction(2), Fraction(1)))
        )

    def test_insufficient_depth(self):
        lat = affine_slattice_split(
            S2, la.identity(2), {2: la.identity(2)}, depth={2: 1}
        )
        with pytest.raises(InsufficientPadicPrecision):
            enumerate_points(lat, box(S2, 2, {2: -2}))

    def test_split_mode_rotation(self):
        # a rotated float copy of Z^2 still counts 21 points in the disk
        lat = affine_slattice_split(
            S0, [[0.0, 1.0], [-1.0, 0.0]], {},
        )
        pts = enumerate_points(lat, box(S0, Fraction(5, 2)))
        assert len(pts) == 21

    def test_negative_depth_box(self):
        # t_2 = -1: only even-denominator-free points k = 0 mod 2
        lat = affine_slattice(S2, la.identity(2))
        b = box(S2, Fraction(5, 2), {2: -1})
        got = sorted(pt.real for pt in enumerate_points(lat, b))
        assert got == naive_points(lat, b)
        assert (Fraction(2), Fraction(0)) in got
        assert (Fraction(1), Fraction(0)) not in got

    def test_random_against_oracle(self):
        rng = random.Random(23)
        cases = 0
        attempts = 0
        while cases < 25 and attempts < 400:
            attempts += 1
            ctx = rng.choice([S0, S0, S2, S3, S23])
            d = 3 if (not ctx.primes and rng.random() < 0.4) else 2
            u = [list(r) for r in la.identity(d)]
            # shear denominators must avoid ctx primes (basis stays p-integral)
            shear_pool = [0, 1, -1, 2, Fraction(1, 5)]
            if 2 not in ctx.primes:
                shear_pool.append(Fraction(1, 2))
            for _ in range(3):
                i, j = rng.randrange(d), rng.randrange(d)
                if i == j:
                    continue
                c = Fraction(rng.choice(shear_pool))
                for kk in range(d):
                    u[i][kk] += c * u[j][kk]
            den_pool = [1, 1, 5] + list(ctx.primes)
            shift = tuple(
                Fraction(rng.randint(-3, 3), rng.choice(den_pool))
                for _ in range(d)
            )
            lat = affine_slattice(ctx, u, shift)
            t_p = {p: rng.choice([0, 0, 1, -1]) for p in ctx.primes}
            t_inf = Fraction(2) if d == 3 else Fraction(rng.randint(2, 3))
            b = box(ctx, t_inf, t_p)
            _, m_bound = naive_scan_radius(lat, b)
            if (2 * m_bound + 1) ** d > 150_000:
                continue
            expect = naive_points(lat, b)
            got = sorted(pt.real for pt in enumerate_points(lat, b))
            assert got == expect, (u, shift, ctx.primes, t_p)
            cases += 1
        assert cases == 25

    def test_involution(self):
        rng = random.Random(31)
        for _ in range(10):
            shift = (
                Fraction(rng.randint(-4, 4), 5),
                Fraction(rng.randint(-4, 4), 3),
            )
            center = (Fraction(1, 3), Fraction(-1, 2))
            basis = ((Fraction(1), Fraction(1)), (Fraction(0), Fraction(1)))
            lat = affine_slattice(S0, basis, shift)
            neg_lat = affine_slattice(
                S0, basis, tuple(-x for x in shift)
            )
            b = box(S0, 3, center=center)
            neg_b = box(S0, 3, center=tuple(-x for x in center))
            pts = {p.real for p in enumerate_points(lat, b)}
            neg = {
                tuple(-x for x in p.real)
                for p in enumerate_points(neg_lat, neg_b)
            }
            assert pts == neg


class TestSiegel:
    def test_disk_affine_and_homogeneous(self):
        lat = affine_slattice(S0, la.identity(2))
        f = indicator_sbox(box(S0, Fraction(5, 2)))
        assert siegel_transform(f, lat, "affine") == 21
        assert siegel_transform(f, lat, "homogeneous") == 20

    def test_shifted_singleton(self):
        lat = affine_slattice(S0, la.identity(2), shift=(Fraction(1, 5), 0))
        f = indicator_sbox(box(S0, Fraction(1, 2)))
        assert siegel_transform(f, lat, "affine") == 1
        # the lattice misses the origin, so both modes agree
        assert siegel_transform(f, lat, "homogeneous") == 1

    def test_affine_minus_homogeneous_is_origin_indicator(self):
        rng = random.Random(37)
        for _ in range(10):
            shift = (
                Fraction(rng.randint(0, 1)),
                Fraction(rng.randint(-1, 1), rng.choice([1, 5])),
            )
            lat = affine_slattice(S0, la.identity(2), shift)
            f = indicator_sbox(box(S0, Fraction(7, 2)))
            diff = siegel_transform(f, lat, "affine") - siegel_transform(
                f, lat, "homogeneous"
            )
            has_origin = all(x.denominator == 1 for x in shift)
            assert diff == (1 if has_origin else 0)

    def test_product_box(self):
        lat = affine_slattice(S2, la.identity(2))
        f = indicator_product_box(
            [(-1, 1), (-1, 1)], finite_exponent={2: 0}
        )
        # integer points of the closed square: 9 (half-integers excluded
        # by the 2-adic unit ball)
        assert siegel_transform(f, lat, "affine") == 9

    def test_quadric_slice(self):
        ctx = S0
        q = quadratic_form(ctx, [[1, 0, 0], [0, 1, 0], [0, 0, -1]])
        lat = affine_slattice(ctx, la.identity(3))
        f = indicator_quadric_slice(
            q, (Fraction(1, 2), Fraction(3, 2)), {}, box(ctx, 3)
        )
        # x^2+y^2-z^2 = 1 with norm < 3: 4 axis vectors and 8 sign patterns
        # of (+-1,+-1,+-1)
        assert siegel_transform(f, lat, "affine") == 12


class TestDiscrepancy:
    def test_disk_value(self):
        lat = affine_slattice(S0, la.identity(2))
        d = discrepancy(lat, box(S0, Fraction(5, 2)))
        assert abs(d - abs(21 - 6.25 * math.pi)) < 1e-9

    def test_empty_zero_volume(self):
        lat = affine_slattice(S0, la.identity(2), shift=(Fraction(1, 5), 0))
        d = discrepancy(lat, box(S0, Fraction(1, 10)))
        assert abs(d - math.pi / 100) < 1e-12

    def test_corrected_inequality_random_triples(self):
        rng = random.Random(41)
        lat_pool = [
            affine_slattice(S0, la.identity(2)),
            affine_slattice(
                S0, ((Fraction(1), Fraction(1)), (Fraction(0), Fraction(1))),
                (Fraction(1, 3), Fraction(0)),
            ),
        ]
        for _ in range(200):
            lat = rng.choice(lat_pool)
            c = (Fraction(rng.randint(-2, 2), 3), Fraction(rng.randint(-2, 2), 3))
            r1 = Fraction(rng.randint(1, 20), 10)
            r = r1 + Fraction(rng.randint(0, 10), 10)
            r2 = r + Fraction(rng.randint(0, 10), 10)
            a1, a, a2 = (box(S0, rr, center=c) for rr in (r1, r, r2))
            d = discrepancy(lat, a)
            d1 = discrepancy(lat, a1)
            d2 = discrepancy(lat, a2)
            gap = a2.volume(2) - a1.volume(2)
            assert d <= max(d1, d2) + gap + 1e-9

    def test_uncorrected_form_fails(self):
        # one-dimensional counterexample: the inequality with the volume
        # term moved to the left-hand side is violated
        lat = affine_slattice(S0, ((Fraction(1),),))
        a1 = box(S0, Fraction(1, 10))
        a = box(S0, Fraction(3, 5), center=(Fraction(1, 2),))
        a2 = box(S0, Fraction(7, 10), center=(Fraction(3, 5),))
        # containment of the three intervals
        assert count_in_set(lat, a1) == 1 and count_in_set(lat, a) == 2
        d = discrepancy(lat, a)
        d1 = discrepancy(lat, a1)
        d2 = discrepancy(lat, a2)
        gap = a2.volume(1) - a1.volume(1)
        assert d + gap > max(d1, d2) + 1e-6  # printed form is false
        assert d <= max(d1, d2) + gap  # corrected form holds


class TestCountInSet:
    def test_box_and_indicator_agree(self):
        lat = affine_slattice(S0, la.identity(2))
        b = box(S0, Fraction(5, 2))
        assert count_in_set(lat, b) == count_in_set(lat, indicator_sbox(b)) == 21
