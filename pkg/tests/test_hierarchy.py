import io

import numpy as np
import pytest

from bth.coeff import PolyRing
from bth.diffop import op_distance
from bth.dressing import LaxOperator, consistent_pair, random_lax, random_poly_lax
from bth.hierarchy import (FlowIndex, TimeConfig, band_leak, build_A, field_distance, integrate, lax_rhs,
                           rhs_oracle_N1M2, rhs_oracle_N2M1, sato_rhs, toda_rhs, trace_functional,
                           zs_residual)


def test_flow_index_range_and_powers():
    assert FlowIndex(2, 1).validate(2, 1).power(2, 1) == 3
    assert FlowIndex(0, 1).power(2, 3) == 6
    assert FlowIndex(-1, 0).power(1, 2) == 1
    with pytest.raises(ValueError):
        FlowIndex(3, 0).validate(2, 1)
    with pytest.raises(ValueError):
        FlowIndex(-1, 0).validate(2, 1)


def test_time_config_drops_zeros_and_shifts():
    t = TimeConfig({(1, 0): 0.0, (0, 0): 0.5})
    assert t.support == [FlowIndex(0, 0)]
    assert t.shifted((1, 0), 0.25).get(1, 0) == 0.25
    with pytest.raises(ValueError):
        TimeConfig({(1, 0): float("inf")})


def test_generator_projection_is_finite(grid, rng):
    L = random_lax(grid, 2, 1, rng)
    A = build_A(L, (1, 1), 12)
    # power N(n+1) - gamma + 1 = 4 of the upper root
    assert A.support[0] >= 0 and A.support[1] == 4
    assert A.covers(*A.support)


def test_toda_flow_hand_expansion(grid, rng):
    L = random_lax(grid, 1, 1, rng)
    d = lax_rhs(L, (1, 0), 12)
    for j, v in toda_rhs(L.u(0), L.u(-1)).items():
        assert (d.coeffs[j] - v).norm() < 1e-12


@pytest.mark.parametrize("flow", [(1, 0), (-1, 0)])
def test_reference_three_field_system(grid, rng, flow):
    L = random_lax(grid, 1, 2, rng)
    d = lax_rhs(L, flow, 12)
    for j, v in rhs_oracle_N1M2(L.u(0), L.u(-1), L.u(-2), flow).items():
        assert (d.coeffs.get(j, v * 0) - v).norm() < 1e-9


@pytest.mark.parametrize("flow", [(2, 0), (1, 0)])
def test_reference_upper_system(grid, rng, flow):
    L = random_lax(grid, 2, 1, rng)
    d = lax_rhs(L, flow, 12)
    for j, v in rhs_oracle_N2M1(L.u(1), L.u(0), L.u(-1), flow).items():
        assert (d.coeffs.get(j, v * 0) - v).norm() < 1e-9


def test_lowest_upper_and_lower_flows_coincide(grid, rng):
    L = random_lax(grid, 2, 2, rng)
    assert op_distance(lax_rhs(L, (1, 0), 12), lax_rhs(L, (0, 0), 12)) < 1e-11


def test_flow_stays_in_the_lax_band(grid, rng):
    L = random_lax(grid, 2, 1, rng)
    assert band_leak(lax_rhs(L, (1, 1), 12), -1, 2) < 1e-11


def test_self_pair_zero_curvature_is_exact(grid, rng):
    L = random_lax(grid, 1, 1, rng)
    assert zs_residual(L, (1, 1), (1, 1), 12) == 0.0
    assert zs_residual(L, (1, 0), (0, 1), 12) < 1e-6


def test_sato_update_reproduces_lax_flow():
    L = random_poly_lax(PolyRing(1), 2, 1, np.random.default_rng(4))
    pair = consistent_pair(L, 12)
    dPL, dPR = sato_rhs(pair, L, (1, 0), 12, check=True)
    assert all(k < 0 for k in dPL.coeffs)


def test_zero_fields_are_stationary(grid):
    L = LaxOperator.from_fields(grid, 1, 1, {0: grid.zero(), -1: grid.one()})
    traj = integrate(L, [((1, 0), 0.5)], 0.1)
    assert field_distance(traj.states[-1], L) == 0.0


def test_rk4_fourth_order_and_conservation(grid, rng):
    L = random_lax(grid, 1, 1, rng)
    ends = [integrate(L, [((1, 0), 1.0)], dt).states[-1] for dt in (0.1, 0.05, 0.025)]
    ratio = field_distance(ends[0], ends[1]) / field_distance(ends[1], ends[2])
    assert 12 <= ratio <= 20
    for k in (1, 2, 3):
        assert abs(trace_functional(ends[2], k) - trace_functional(L, k)) < 1e-8


def test_trajectory_csv_columns(grid, rng):
    L = random_lax(grid, 1, 1, rng)
    buf = io.StringIO()
    integrate(L, [((1, 0), 0.2)], 0.1, samples_per_unit=10).to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "t,site,u_{-1},u_{0}"
    assert len(lines) == 1 + 3 * grid.size
