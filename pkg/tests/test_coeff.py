from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bth.coeff import (LatticeGrid, PolyRing, SymbolRing, XPoly, exp_log, invert_shift_sum, pointwise,
                       shift, solve_shift_sum, time_symbol)
from bth.errors import CompatibilityError, DomainError, SingularOperator

fractions = st.fractions(min_value=-4, max_value=4, max_denominator=8)
exact_polys = st.lists(fractions, min_size=0, max_size=4)
spacings = st.sampled_from([Fraction(1), Fraction(1, 2), Fraction(-1, 3), Fraction(2)])


@settings(max_examples=60, deadline=None)
@given(exact_polys, st.integers(-4, 4), st.integers(-4, 4), spacings)
def test_poly_shifts_compose(cs, j, k, eps):
    p = XPoly(PolyRing(eps, exact=True), cs)
    assert p.shift(j).shift(k) == p.shift(j + k)


@settings(max_examples=60, deadline=None)
@given(exact_polys, exact_polys, st.integers(-3, 3))
def test_poly_shift_is_a_ring_map(a, b, k):
    ring = PolyRing(Fraction(1, 2), exact=True)
    p, q = XPoly(ring, a), XPoly(ring, b)
    assert (p * q).shift(k) == p.shift(k) * q.shift(k)
    assert (p + q).shift(k) == p.shift(k) + q.shift(k)


@settings(max_examples=40, deadline=None)
@given(exact_polys, exact_polys, exact_polys)
def test_exact_poly_ring_axioms(a, b, c):
    ring = PolyRing(1, exact=True)
    p, q, r = (XPoly(ring, v) for v in (a, b, c))
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert p - p == ring.zero()


def test_poly_shift_matches_evaluation():
    ring = PolyRing(Fraction(1, 2), exact=False)
    p = ring.poly([1.0, -2.0, 0.5])
    xs = np.linspace(-2, 2, 7)
    np.testing.assert_allclose(p.shift(3).evaluate(xs), p.evaluate(xs + 1.5))


def test_poly_reciprocal_only_for_constants():
    ring = PolyRing(1, exact=True)
    assert ring.const(4).reciprocal() == ring.const(Fraction(1, 4))
    with pytest.raises(Exception):
        ring.x().reciprocal()


def test_lattice_shift_periodic_and_windowed():
    g = LatticeGrid(1, 8)
    f = g.x()
    assert shift(f, 3).at(0) == 3
    assert shift(f, 3).at(6) == 1
    w = LatticeGrid(1, 8, "windowed").x()
    s = shift(w, 2)
    assert s.valid == (0, 5)


def test_pointwise_division_guard():
    g = LatticeGrid(1, 5)
    with pytest.raises(DomainError):
        pointwise(g.one(), g.delta(2), "div")


def test_log_requires_positive_values():
    g = LatticeGrid(1, 5)
    f = g.const(2.0)
    np.testing.assert_allclose(exp_log(exp_log(f, "log"), "exp").values, f.values)
    with pytest.raises(DomainError):
        exp_log(g.const(-1.0), "log")


def test_invert_shift_sum_round_trip(rng):
    g = LatticeGrid(1, 17)
    f = g.random_smooth(rng)
    terms = [(2.0, 0), (-0.5, 1), (0.3, -2)]
    sol = invert_shift_sum(terms, f)
    back = sum((shift(sol, s) * c for c, s in terms[1:]), shift(sol, 0) * terms[0][0])
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)


def test_invert_shift_sum_names_singular_mode():
    g = LatticeGrid(1, 9)
    with pytest.raises(SingularOperator) as err:
        invert_shift_sum([(1.0, 1), (-1.0, 0)], g.one())
    assert err.value.mode == 0


def test_gauge_solve_of_difference_equation(rng):
    g = LatticeGrid(1, 15)
    f = g.random_smooth(rng)  # zero mean, hence in the range
    sol = solve_shift_sum([(1.0, 1), (-1.0, 0)], f, singular="gauge")
    np.testing.assert_allclose((shift(sol, 1) - sol).values, f.values, atol=1e-12)
    assert abs(sol.mean()) < 1e-12
    with pytest.raises(CompatibilityError):
        solve_shift_sum([(1.0, 1), (-1.0, 0)], g.one(), singular="gauge")


def test_poly_gauge_solve():
    ring = PolyRing(1, exact=True)
    f = ring.poly([Fraction(1), Fraction(2)])
    sol = solve_shift_sum([(1, 1), (-1, 0)], f, singular="gauge")
    assert sol.shift(1) - sol == f
    assert sol.degree < 0 or sol.c[0] == 0


def test_symbolic_time_derivative():
    ring = SymbolRing(1)
    t = ring.t(1, 0)
    x = ring.x()
    p = t * t * x + x
    name = time_symbol(1, 0)
    assert p.dt(name) == t * x * 2
    assert p.dt(time_symbol(0, 0)).is_zero()
