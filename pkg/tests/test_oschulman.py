from fractions import Fraction

import numpy as np
import pytest

from bth.coeff import PolyRing
from bth.diffop import DiffOp, commutator, op_distance
from bth.dressing import consistent_pair, random_poly_lax
from bth.hierarchy import FlowIndex, TimeConfig
from bth.oschulman import (build_M, build_wave, gamma_L, gamma_R, lower_weight, m_flow_residual,
                           os_residuals, upper_weight, verify_gamma_identities, wave_residuals)

EXACT = PolyRing(1, exact=True)


def test_weights():
    assert upper_weight(2, FlowIndex(2, 0)) == Fraction(1, 2)
    assert upper_weight(1, FlowIndex(1, 1)) == 2
    assert lower_weight(2, FlowIndex(-1, 0)) == Fraction(1, 2)
    assert lower_weight(3, FlowIndex(0, 1)) == 2


@pytest.mark.parametrize("N,M", [(1, 1), (2, 1), (1, 3), (3, 2)])
def test_gamma_identities_hold_exactly(N, M):
    results = verify_gamma_identities(N, M, n_max=2, epsilon=Fraction(1, 3))
    assert len(results) == 2 + 3 * (N + M)
    assert all(results.values())


def test_gamma_operators_canonical_pairs():
    for N, M in ((1, 1), (2, 3)):
        one = DiffOp.identity(EXACT)
        assert op_distance(commutator(DiffOp.monomial(EXACT, N), gamma_L(EXACT, N, M)), one) == 0
        assert op_distance(commutator(DiffOp.monomial(EXACT, -M), gamma_R(EXACT, N, M)), one) == 0


def test_gamma_rejects_out_of_range_times():
    with pytest.raises(ValueError):
        gamma_L(EXACT, 1, 1, {(2, 0): 1})


@pytest.mark.parametrize("N,M", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_orlov_schulman_brackets(N, M):
    L = random_poly_lax(PolyRing(1), N, M, np.random.default_rng(N + 4 * M))
    ctx = build_M(L, consistent_pair(L, 12), TimeConfig({(1, 0): 0.3}))
    assert all(v <= 1e-9 for v in os_residuals(ctx).values())


def test_orlov_schulman_exact_backend():
    L = random_poly_lax(EXACT, 2, 1, np.random.default_rng(2))
    ctx = build_M(L, consistent_pair(L, 8), TimeConfig({(1, 0): Fraction(1, 3)}))
    assert all(v == 0 for v in os_residuals(ctx).values())


@pytest.mark.parametrize("flow", [(1, 0), (0, 0)])
def test_m_operators_evolve_by_the_generator(flow):
    L = random_poly_lax(PolyRing(1), 1, 1, np.random.default_rng(9))
    ctx = build_M(L, consistent_pair(L, 12), TimeConfig({(1, 0): 0.3}))
    assert all(v <= 1e-6 for v in m_flow_residual(ctx, flow).values())


@pytest.mark.parametrize("side,lam", [("L", 2.0), ("R", 0.5)])
def test_wave_residuals_below_tail_bound(side, lam):
    ring = PolyRing(1)
    L = random_poly_lax(ring, 1, 1, np.random.default_rng(21), amplitude=Fraction(1, 8),
                       lowest=Fraction(1, 16))
    ctx = build_M(L, consistent_pair(L, 12), TimeConfig({(1, 0): 0.3}), check=False)
    res = wave_residuals(build_wave(ctx, lam, side), ctx)
    for name, r in res.items():
        assert r["residual"] <= r["bound"], name
