"""Flows of the hierarchy: generators, Lax and Sato right-hand sides, integration."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .coeff import LatticeFunction, invert_shift_sum
from .diffop import DiffOp, commutator, op_distance, op_norm, op_power, project
from .dressing import DressingPair, LaxOperator, root_lower, root_upper, series_inverse
from .errors import BandExhausted, Divergence, PostconditionError


@dataclass(frozen=True, order=True)
class FlowIndex:
    gamma: int
    n: int

    def validate(self, N: int, M: int) -> "FlowIndex":
        if not (-M + 1 <= self.gamma <= N) or self.n < 0:
            raise ValueError(f"flow ({self.gamma},{self.n}) outside the index set for (N,M)=({N},{M})")
        return self

    def power(self, N: int, M: int) -> int:
        """Power of the relevant root: N(n+1)-gamma+1 upper, M(n+1)+gamma lower."""
        if self.gamma >= 1:
            return N * (self.n + 1) - self.gamma + 1
        return M * (self.n + 1) + self.gamma

    def __str__(self):
        return f"({self.gamma},{self.n})"


def as_flow(f) -> FlowIndex:
    return f if isinstance(f, FlowIndex) else FlowIndex(*f)


@dataclass(frozen=True)
class TimeConfig:
    """Finitely many nonzero times ``t_{gamma,n}``."""

    values: Mapping[FlowIndex, float] = field(default_factory=dict)

    def __post_init__(self):
        vals = {as_flow(k): v for k, v in dict(self.values).items() if v != 0}
        for v in vals.values():
            if not math.isfinite(float(v)):
                raise ValueError("times must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def support(self):
        return sorted(self.values)

    def get(self, gamma: int, n: int):
        return self.values.get(FlowIndex(gamma, n), 0)

    def shifted(self, flow, dt) -> "TimeConfig":
        flow = as_flow(flow)
        vals = dict(self.values)
        vals[flow] = vals.get(flow, 0) + dt
        return TimeConfig(vals)


class Roots:
    """Lazily computed fractional roots of one Lax operator."""

    def __init__(self, L: LaxOperator, D: int):
        self.L, self.D = L, D
        self._upper = self._lower = None

    @property
    def upper(self) -> DiffOp:
        if self._upper is None:
            self._upper = root_upper(self.L, self.D)
        return self._upper

    @property
    def lower(self) -> DiffOp:
        if self._lower is None:
            self._lower = root_lower(self.L, self.D)
        return self._lower


def _roots(L, D, roots):
    return roots if roots is not None else Roots(L, D)


def build_B(L: LaxOperator, flow, D: int, roots: Roots | None = None) -> DiffOp:
    flow = as_flow(flow).validate(L.N, L.M)
    r = _roots(L, D, roots)
    base = r.upper if flow.gamma >= 1 else r.lower
    return op_power(base, flow.power(L.N, L.M))


def build_A(L: LaxOperator, flow, D: int, roots: Roots | None = None) -> DiffOp:
    flow = as_flow(flow)
    B = build_B(L, flow, D, roots)
    return project(B, "+") if flow.gamma >= 1 else -project(B, "-")


def lax_rhs(L: LaxOperator, flow, D: int, roots: Roots | None = None, tol: float = 1e-11) -> DiffOp:
    """``[A_{gamma,n}, L]`` restricted to ``[-M, N-1]``.

    Monicity and band preservation are checked: anything the commutator puts
    outside ``[-M, N-1]`` must vanish to ``tol`` (relative to the largest kept
    coefficient), otherwise :class:`PostconditionError` is raised.
    """
    C = commutator(build_A(L, flow, D, roots), L.op)
    C.require(-L.M, L.N, "lax_rhs")
    leak = band_leak(C, -L.M, L.N - 1)
    scale = max(1.0, op_norm(C))
    if leak > tol * scale:
        raise PostconditionError(f"flow {as_flow(flow)} leaves the Lax band (leak {leak:.3e})")
    return C.restrict(-L.M, L.N - 1)


def band_leak(C: DiffOp, lo: int, hi: int) -> float:
    """Largest reliable coefficient outside ``[lo, hi]``."""
    return max((c.norm() for k, c in C.coeffs.items() if k < lo or k > hi), default=0.0)


# ---------------------------------------------------------------------------
# hand-written systems
# ---------------------------------------------------------------------------


def toda_rhs(u0: LatticeFunction, um1: LatticeFunction) -> dict:
    """The (1,1) Toda lattice: rhs of ``u_0`` and ``u_{-1}`` under the (1,0) flow."""
    return {0: um1.shift(1) - um1, -1: um1 * (u0 - u0.shift(-1))}


def rhs_oracle_N1M2(u0, um1, um2, flow) -> dict:
    """Explicit (N,M) = (1,2) flows for ``flow`` in {(1,0), (-1,0)}."""
    flow = tuple(flow)
    if flow == (1, 0):
        return {0: um1.shift(1) - um1,
                -1: um2.shift(1) - um2 + um1 * (u0 - u0.shift(-1)),
                -2: um2 * (u0 - u0.shift(-2))}
    if flow == (-1, 0):
        b = invert_shift_sum([(1, 0), (1, -1)], um2.log()).exp()
        return {0: b.shift(1) - b,
                -1: b * (u0 - u0.shift(-1)),
                -2: um1 * b.shift(-1) - b * um1.shift(-1)}
    raise ValueError(f"no explicit (1,2) system for flow {flow}")


def rhs_oracle_N2M1(u1, u0, um1, flow) -> dict:
    """Explicit (N,M) = (2,1) flows for ``flow`` in {(2,0), (1,0)}.

    The (1,0) system is written for general M; with M = 1 there is no
    ``u_{-2}`` and those terms are zero.  In the first line of the (2,0)
    system the leading difference is ``u_0(x+eps) - u_0(x)``.
    """
    flow = tuple(flow)
    if flow == (2, 0):
        v = invert_shift_sum([(1, 0), (1, 1)], u1)
        return {1: u0.shift(1) - u0 + u1 * (v - v.shift(1)),
                0: um1.shift(1) - um1,
                -1: um1 * (v - v.shift(-1))}
    if flow == (1, 0):
        um2 = u0 * 0
        return {1: um1.shift(2) - um1,
                0: um2.shift(2) - um2 + u1 * um1.shift(1) - um1 * u1.shift(-1),
                -1: um1 * (u0 - u0.shift(-1))}
    raise ValueError(f"no explicit (2,1) system for flow {flow}")


def rhs_oracle_N2M1_forward_first_line(u1, u0, um1):
    """The (2,0) rhs of ``u_1`` with ``u_1(x+eps) - u_1(x)`` as leading difference."""
    v = invert_shift_sum([(1, 0), (1, 1)], u1)
    return u1.shift(1) - u1 + u1 * (v - v.shift(1))


# ---------------------------------------------------------------------------
# Sato equations
# ---------------------------------------------------------------------------


def sato_rhs(pair: DressingPair, L: LaxOperator, flow, D: int, roots: Roots | None = None,
             check: bool = True, tol: float = 1e-9):
    """``(-(B)_- P_L, (B)_+ P_R)`` with ``B = B_{gamma,n}`` built from the roots of ``L``.

    With ``check`` the left update is pushed through ``L = P_L Lambda^N P_L^{-1}``
    and compared with :func:`lax_rhs` on ``[-M, N]``.
    """
    B = build_B(L, flow, D, roots)
    dPL = -(project(B, "-") * pair.PL)
    dPR = project(B, "+") * pair.PR
    if check:
        induced = induced_lax_update(pair, L, dPL)
        ref = lax_rhs(L, flow, D, roots)
        err = op_distance(induced, ref, band=(-L.M, L.N)) / max(1.0, op_norm(ref))
        if err > tol:
            raise PostconditionError(f"Sato update inconsistent with the Lax flow ({err:.3e})")
    return dPL, dPR


def induced_lax_update(pair: DressingPair, L: LaxOperator, dPL: DiffOp) -> DiffOp:
    """Derivative of ``P_L Lambda^N P_L^{-1}`` along ``dPL``: ``[dPL P_L^{-1}, P_L Lambda^N P_L^{-1}]``."""
    ring = L.ring
    dressed = pair.PL * DiffOp.monomial(ring, L.N, limit=L.op.limit) * pair.PLinv
    return commutator(dPL * pair.PLinv, dressed)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    times: list
    states: list
    pairs: list | None = None

    def to_csv(self, path_or_stream):
        write_trajectory_csv(self, path_or_stream)


def _axpy(L: LaxOperator, delta: DiffOp, h) -> LaxOperator:
    return L.updated(delta.coeffs, h)


def _check_finite(L: LaxOperator, step: int):
    for c in L.op.coeffs.values():
        v = getattr(c, "values", None)
        if v is not None and (not np.all(np.isfinite(v)) or np.max(np.abs(v)) > 1e12):
            raise Divergence(f"integration diverged at step {step}", step=step)


def _pair_axpy(pair: DressingPair, dPL: DiffOp, h) -> DressingPair:
    PL = pair.PL + h * dPL
    return DressingPair(PL, pair.PR, series_inverse(PL, "lower", pair.depth), pair.PRinv, pair.depth)


def integrate(L: LaxOperator, flows: Sequence, dt: float, D: int = 12, pair: DressingPair | None = None,
              samples_per_unit: float | None = None) -> Trajectory:
    """Classical RK4 along each ``(flow, duration)`` in turn.

    With ``pair`` the left dressing operator is integrated alongside through
    the Sato equation; the right one is carried unchanged.  Nothing is
    re-projected between steps.
    """
    times, states, pairs = [0.0], [L], ([pair] if pair is not None else None)
    t, step = 0.0, 0
    sample_dt = None if not samples_per_unit else 1.0 / samples_per_unit
    next_sample = sample_dt

    def rhs(state, P):
        roots = Roots(state, D)
        dL = lax_rhs(state, flow, D, roots, tol=1e-8)
        dP = None
        if P is not None:
            B = build_B(state, flow, D, roots)
            dP = -(project(B, "-") * P.PL)
        return dL, dP

    for flow, duration in flows:
        flow = as_flow(flow)
        nsteps = max(1, int(round(duration / dt)))
        h = duration / nsteps
        for _ in range(nsteps):
            k1, p1 = rhs(L, pair)
            k2, p2 = rhs(_axpy(L, k1, h / 2), pair and _pair_axpy(pair, p1, h / 2))
            k3, p3 = rhs(_axpy(L, k2, h / 2), pair and _pair_axpy(pair, p2, h / 2))
            k4, p4 = rhs(_axpy(L, k3, h), pair and _pair_axpy(pair, p3, h))
            incr = k1 + 2 * k2 + 2 * k3 + k4
            L = _axpy(L, incr, h / 6)
            if pair is not None:
                pair = _pair_axpy(pair, p1 + 2 * p2 + 2 * p3 + p4, h / 6)
            step += 1
            t += h
            _check_finite(L, step)
            if sample_dt is not None and t >= next_sample - 1e-12:
                times.append(t)
                states.append(L)
                if pairs is not None:
                    pairs.append(pair)
                next_sample += sample_dt
    if times[-1] != t:
        times.append(t)
        states.append(L)
        if pairs is not None:
            pairs.append(pair)
    return Trajectory(times, states, pairs)


def trace_functional(L: LaxOperator, k: int) -> complex:
    """Lattice sum of the ``Lambda^0`` coefficient of ``L^k``."""
    Lk = op_power(L.op, k)
    c = Lk.coeffs.get(0)
    return 0j if c is None else complex(np.sum(c.values))


def field_distance(A: LaxOperator, B: LaxOperator) -> float:
    return op_distance(A.op, B.op)


# ---------------------------------------------------------------------------
# zero curvature
# ---------------------------------------------------------------------------


def _directional(L: LaxOperator, flow_dir, D: int, build, h: float):
    dL = lax_rhs(L, flow_dir, D)
    plus = build(_axpy(L, dL, h))
    minus = build(_axpy(L, dL, -h))
    return (plus - minus) * (1 / (2 * h))


def zs_residual(L: LaxOperator, flowA, flowB, D: int, h: float = 1e-6) -> float:
    """Sup-norm of ``d_B A_A - d_A A_B + [A_A, A_B]`` on the reliable band.

    ``d_B`` is a central difference of the generator along the Lax vector
    field of flow B.
    """
    flowA, flowB = as_flow(flowA), as_flow(flowB)
    if flowA == flowB:
        return 0.0
    roots = Roots(L, D)
    AA, AB = build_A(L, flowA, D, roots), build_A(L, flowB, D, roots)
    dB_AA = _directional(L, flowB, D, lambda s: build_A(s, flowA, D), h)
    dA_AB = _directional(L, flowA, D, lambda s: build_A(s, flowB, D), h)
    R = dB_AA - dA_AB + commutator(AA, AB)
    return op_norm(R)


def zs_split_residuals(L: LaxOperator, flowA, flowB, D: int, h: float = 1e-6):
    """Residuals of the two projected zero-curvature forms (minus and plus parts of B)."""
    flowA, flowB = as_flow(flowA), as_flow(flowB)
    roots = Roots(L, D)
    BA, BB = build_B(L, flowA, D, roots), build_B(L, flowB, D, roots)

    def part(flow, sign):
        return lambda s: project(build_B(s, flow, D), sign)

    minus = (_directional(L, flowB, D, part(flowA, "-"), h) - _directional(L, flowA, D, part(flowB, "-"), h)
             - commutator(project(BA, "-"), project(BB, "-")))
    plus = (-_directional(L, flowB, D, part(flowA, "+"), h) + _directional(L, flowA, D, part(flowB, "+"), h)
            - commutator(project(BA, "+"), project(BB, "+")))
    return op_norm(minus), op_norm(plus)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path_or_stream):
    L0 = traj.states[0]
    N, M = L0.N, L0.M
    header = ["t", "site"] + [f"u_{{{j}}}" for j in range(-M, N)]
    own = isinstance(path_or_stream, str)
    fh = open(path_or_stream, "w", newline="") if own else path_or_stream
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for t, L in zip(traj.times, traj.states):
            cols = [L.u(j).values.real for j in range(-M, N)]
            for s in range(L.ring.size):
                w.writerow([repr(float(t)), s] + [repr(float(c[s])) for c in cols])
    finally:
        if own:
            fh.close()


def residual_record(check: str, params: dict, residual: float, tolerance: float, seconds: float | None = None,
                    passed: bool | None = None) -> dict:
    ok = bool(residual <= tolerance) if passed is None else bool(passed)
    rec = {"check": check, "params": params, "residual": float(residual), "tolerance": float(tolerance),
           "pass": ok}
    if seconds is not None:
        rec["seconds"] = round(float(seconds), 4)
    return rec
