from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bth.coeff import PolyRing, XPoly
from bth.diffop import INF, DiffOp, op_distance, op_power
from bth.dressing import (LaxOperator, consistent_pair, dress_from_w, pair_consistency, random_lax,
                          random_poly_lax, root_lower, root_upper, series_inverse, solve_PL_from_L,
                          verify_frac)
from bth.errors import BandExhausted, CompatibilityError, DomainError

EXACT = PolyRing(1, exact=True)
small = st.fractions(min_value=-2, max_value=2, max_denominator=4)
polys = st.lists(small, min_size=0, max_size=2).map(lambda cs: XPoly(EXACT, cs))


@settings(max_examples=40, deadline=None)
@given(st.lists(polys, min_size=1, max_size=5), st.sampled_from(["lower", "upper"]), st.integers(1, 6))
def test_series_inverse_is_exact_on_its_band(tail, side, depth):
    sgn = -1 if side == "lower" else 1
    cs = {0: EXACT.one()}
    cs.update({sgn * (i + 1): p for i, p in enumerate(tail)})
    P = DiffOp(EXACT, cs, (-INF, 0) if side == "lower" else (0, INF))
    inv = series_inverse(P, side, depth)
    one = DiffOp.identity(EXACT)
    for product in (P * inv, inv * P):
        assert op_distance(product, one) == 0
        lo, hi = product.reliable
        assert (lo <= -depth) if side == "lower" else (hi >= depth)


def test_lax_operator_validates_shape():
    with pytest.raises(ValueError):
        LaxOperator(DiffOp.banded(EXACT, {1: 2, 0: 1, -1: 1}), 1, 1)
    with pytest.raises(ValueError):
        LaxOperator.from_fields(EXACT, 1, 1, {3: 1})


@pytest.mark.parametrize("N,M", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_recovered_pair_dresses_both_sides(N, M):
    L = random_poly_lax(EXACT, N, M, np.random.default_rng(N * 10 + M))
    pair = consistent_pair(L, 10)
    assert pair_consistency(L, pair) == 0


def test_periodic_trace_obstruction_is_structured(grid, rng):
    """Generic periodic fields leave a nonzero mean in some stage's right side."""
    L = random_lax(grid, 2, 1, rng)
    with pytest.raises(CompatibilityError) as err:
        solve_PL_from_L(L, 6)
    assert err.value.stage >= 1
    assert err.value.defect > 0


def test_polynomial_gauge_drops_constant_terms():
    L = random_poly_lax(EXACT, 2, 1, np.random.default_rng(8))
    PL = solve_PL_from_L(L, 6)
    for k in range(-6, 0):
        c = PL.coeffs.get(k)
        assert c is None or c.degree < 0 or c.c[0] == 0


def test_dressing_from_coefficient_lists():
    ring = PolyRing(1, exact=True)
    w = [ring.x() * Fraction(1, 2)] + [ring.zero()] * 5
    res = dress_from_w(w, 1, 1, [ring.one()], 6)
    # the leading field is w_1(x) - w_1(x + N eps)
    assert res.lax.u(0) == ring.const(Fraction(-1, 2))
    assert res.leading_field_residual == 0
    with pytest.raises(DomainError):
        dress_from_w(w, 1, 1, [ring.zero()], 6)


def test_depth_too_small_is_reported():
    ring = PolyRing(1, exact=True)
    with pytest.raises(BandExhausted):
        dress_from_w([ring.zero()], 2, 2, [ring.one()], 1)


@pytest.mark.parametrize("N,M", [(2, 1), (3, 2), (2, 3)])
def test_roots_on_the_lattice(grid, rng, N, M):
    L = random_lax(grid, N, M, rng)
    assert op_distance(op_power(root_upper(L, 12), N), L.op) < 1e-10
    assert op_distance(op_power(root_lower(L, 12), M), L.op) < 1e-10


def test_roots_exact_in_polynomial_backend():
    L = random_poly_lax(EXACT, 2, 2, np.random.default_rng(3), lowest=Fraction(9, 4))
    assert op_distance(op_power(root_upper(L, 8), 2), L.op) == 0
    assert op_distance(op_power(root_lower(L, 8), 2), L.op) == 0


def test_dressed_roots_match_recursive_roots():
    L = random_poly_lax(PolyRing(1), 2, 1, np.random.default_rng(5))
    rep = verify_frac(L, consistent_pair(L, 12))
    assert rep.upper_difference < 1e-10
    assert rep.lower_difference < 1e-10
