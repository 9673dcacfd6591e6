from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bth.coeff import LatticeGrid, PolyRing, XPoly
from bth.diffop import (INF, DiffOp, apply, commutator, glue, op_distance, op_mul, op_power, project)
from bth.errors import BandExhausted

RING = PolyRing(Fraction(1, 2), exact=True)
small = st.fractions(min_value=-3, max_value=3, max_denominator=4)
polys = st.lists(small, min_size=0, max_size=3).map(lambda cs: XPoly(RING, cs))
banded = st.dictionaries(st.integers(-2, 2), polys, max_size=4).map(lambda d: DiffOp(RING, d))


def exactly_equal(A, B):
    return op_distance(A, B) == 0


@settings(max_examples=40, deadline=None)
@given(banded, banded, banded)
def test_product_is_associative(A, B, C):
    assert exactly_equal((A * B) * C, A * (B * C))


@settings(max_examples=40, deadline=None)
@given(banded, banded, banded)
def test_product_distributes(A, B, C):
    assert exactly_equal(A * (B + C), A * B + A * C)
    assert exactly_equal((A + B) * C, A * C + B * C)


@settings(max_examples=30, deadline=None)
@given(banded, banded, banded)
def test_jacobi_identity(A, B, C):
    total = (commutator(A, commutator(B, C)) + commutator(B, commutator(C, A))
             + commutator(C, commutator(A, B)))
    assert total.coeffs == {} or all(c == RING.zero() for c in total.coeffs.values())


@settings(max_examples=30, deadline=None)
@given(banded)
def test_projections_split_the_operator(A):
    assert exactly_equal(project(A, "+") + project(A, "-"), A)
    assert all(k >= 0 for k in project(A, "+").coeffs)
    assert all(k < 0 for k in project(A, "-").coeffs)


def test_shift_does_not_commute_with_x():
    shift_op = DiffOp.monomial(RING, 1)
    xop = DiffOp.monomial(RING, 0, RING.x())
    c = commutator(shift_op, xop)
    assert exactly_equal(c, DiffOp.monomial(RING, 1, Fraction(1, 2)))


def _lower_series(depth):
    cs = {-k: RING.const(Fraction(1, k + 1)) for k in range(depth + 1)}
    return DiffOp(RING, cs, (-INF, 0), (-depth, INF))


@settings(max_examples=30, deadline=None)
@given(banded, st.integers(2, 6))
def test_reliable_band_is_truthful(A, depth):
    """Coefficients reported reliable agree with a much deeper truncation."""
    shallow, deep = A * _lower_series(depth), A * _lower_series(depth + 10)
    lo = shallow.reliable[0]
    assert lo > -INF or not A.coeffs
    for k, c in shallow.coeffs.items():
        assert c == deep.coeffs.get(k, RING.zero())


def test_two_sided_tails_starve():
    upper = DiffOp(RING, {k: RING.one() for k in range(5)}, (0, INF), (-INF, 4))
    product = op_mul(_lower_series(4), upper)
    assert product.starved
    with pytest.raises(BandExhausted):
        product.coeff(0)


def test_power_matches_repeated_product():
    A = DiffOp.banded(RING, {1: 1, 0: RING.x(), -1: 2})
    assert exactly_equal(op_power(A, 3), A * A * A)
    assert exactly_equal(op_power(A, 0), DiffOp.identity(RING))


def test_glue_merges_bands_and_checks_overlap():
    low = DiffOp(RING, {0: RING.one(), -1: RING.one()}, (-INF, 0), (-1, INF))
    high = DiffOp(RING, {0: RING.one(), -1: RING.one(), -2: RING.const(3)}, (-INF, 0), (-2, INF))
    merged = glue(low, high)
    assert merged.reliable[0] == -2
    bad = DiffOp(RING, {0: RING.const(2)}, (-INF, 0), (-1, INF))
    with pytest.raises(ValueError):
        glue(low, bad, tol=1e-12)


def test_apply_matches_circulant_matrix(rng):
    g = LatticeGrid(1, 9)
    a, b = g.random_smooth(rng), g.random_smooth(rng)
    A = DiffOp(g, {1: a, -2: b})
    f = g.random_smooth(rng)
    mat = np.zeros((9, 9))
    for s in range(9):
        mat[s, (s + 1) % 9] += a.values[s].real
        mat[s, (s - 2) % 9] += b.values[s].real
    np.testing.assert_allclose(apply(A, f).values, mat @ f.values.real, atol=1e-14)
