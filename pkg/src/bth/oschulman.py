"""Orlov-Schulman operators, their bracket identities, and wave functions."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .coeff import LatticeFunction, LatticeGrid, SymbolRing, XPoly, time_symbol
from .diffop import INF, DiffOp, apply, commutator, op_distance, op_norm
from .dressing import DressingPair, LaxOperator, dressed_lax, series_inverse
from .errors import BandExhausted, DomainError, PostconditionError
from .hierarchy import FlowIndex, Roots, TimeConfig, as_flow, build_A

NEAR_ORDER = 4


# ---------------------------------------------------------------------------
# Gamma operators
# ---------------------------------------------------------------------------


def _times_of(times) -> dict:
    if times is None:
        return {}
    if isinstance(times, TimeConfig):
        return dict(times.values)
    return {as_flow(k): v for k, v in dict(times).items()}


def _x_over(ring, denom):
    """``x / denom`` in ``ring``."""
    return ring.x() * (Fraction(1) / denom if isinstance(denom, Fraction) else 1 / denom)


def upper_weight(N: int, flow: FlowIndex) -> Fraction:
    """``n + 1 - (alpha - 1)/N``: the power of lambda carried by ``t_{alpha,n}``."""
    return flow.n + 1 - Fraction(flow.gamma - 1, N)


def lower_weight(M: int, flow: FlowIndex) -> Fraction:
    """``n + 1 + beta/M``."""
    return flow.n + 1 + Fraction(flow.gamma, M)


def _time_coeff(ring, weight: Fraction, t):
    if isinstance(t, (int, float, Fraction)):
        c = weight * t if isinstance(t, (int, Fraction)) else float(weight) * t
        return ring.const(c)
    return t * weight


def gamma_L(ring, N: int, M: int, times=None, limit: int = 256) -> DiffOp:
    """``(x/(N eps)) Lambda^{-N} + sum_{alpha,n} weight * t_{alpha,n} Lambda^{Nn-alpha+1}``."""
    eps = ring.epsilon
    cs = {-N: _x_over(ring, N * eps)}
    for flow, t in _times_of(times).items():
        flow.validate(N, M)
        if flow.gamma < 1:
            continue
        k = N * flow.n - flow.gamma + 1
        cs[k] = cs[k] + _time_coeff(ring, upper_weight(N, flow), t) if k in cs else \
            _time_coeff(ring, upper_weight(N, flow), t)
    return DiffOp(ring, cs, limit=limit)


def gamma_R(ring, N: int, M: int, times=None, limit: int = 256) -> DiffOp:
    """``-(x/(M eps)) Lambda^M - sum_{beta,n} weight * t_{beta,n} Lambda^{-(Mn+beta)}``."""
    eps = ring.epsilon
    cs = {M: -_x_over(ring, M * eps)}
    for flow, t in _times_of(times).items():
        flow.validate(N, M)
        if flow.gamma >= 1:
            continue
        k = -(M * flow.n + flow.gamma)
        c = -_time_coeff(ring, lower_weight(M, flow), t)
        cs[k] = cs[k] + c if k in cs else c
    return DiffOp(ring, cs, limit=limit)


def symbolic_times(ring: SymbolRing, N: int, M: int, n_max: int) -> dict:
    """Every time ``t_{gamma,n}`` with ``n <= n_max`` as an indeterminate."""
    return {FlowIndex(g, n): ring.t(g, n) for g in range(-M + 1, N + 1) for n in range(n_max + 1)}


def _is_exact_zero(op: DiffOp) -> bool:
    return all(c.is_zero() for c in op.coeffs.values())


def verify_gamma_identities(N: int, M: int, n_max: int = 2, epsilon=1) -> dict:
    """Exact check of the four bracket families on symbolic times.

    Returns a map from identity name to ``True``/``False``; time-bracket
    entries are keyed by flow.
    """
    ring = SymbolRing(epsilon)
    times = symbolic_times(ring, N, M, n_max)
    GL, GR = gamma_L(ring, N, M, times), gamma_R(ring, N, M, times)
    one = DiffOp.identity(ring)
    out = {
        "[Lambda^N, Gamma_L] = 1": _is_exact_zero(commutator(DiffOp.monomial(ring, N), GL) - one),
        "[Lambda^-M, Gamma_R] = 1": _is_exact_zero(commutator(DiffOp.monomial(ring, -M), GR) - one),
    }
    for flow in sorted(times):
        name = time_symbol(flow.gamma, flow.n)
        if flow.gamma >= 1:
            p = N * (flow.n + 1) - flow.gamma + 1
            lhs = GL.map_coeffs(lambda c: c.dt(name)) - commutator(DiffOp.monomial(ring, p), GL)
            out[f"time bracket L {flow}"] = _is_exact_zero(lhs)
        else:
            q = M * (flow.n + 1) + flow.gamma
            lhs = GR.map_coeffs(lambda c: c.dt(name)) + commutator(DiffOp.monomial(ring, -q), GR)
            out[f"time bracket R {flow}"] = _is_exact_zero(lhs)
    return out


# ---------------------------------------------------------------------------
# M operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OSContext:
    L: LaxOperator
    pair: DressingPair
    tcfg: TimeConfig
    gammaL: DiffOp
    gammaR: DiffOp
    ML: DiffOp
    MR: DiffOp

    @property
    def N(self):
        return self.L.N

    @property
    def M(self):
        return self.L.M

    @property
    def X(self) -> DiffOp:
        """``M_L - M_R``."""
        return self.ML - self.MR


def dressed_M(pair: DressingPair, GL: DiffOp, GR: DiffOp):
    return pair.PL * GL * pair.PLinv, pair.PR * GR * pair.PRinv


def build_M(L: LaxOperator, pair: DressingPair, tcfg: TimeConfig | None = None, check: bool = True,
            tol: float = 1e-9) -> OSContext:
    tcfg = tcfg if tcfg is not None else TimeConfig()
    ring, lim = L.ring, L.op.limit
    GL = gamma_L(ring, L.N, L.M, tcfg, lim)
    GR = gamma_R(ring, L.N, L.M, tcfg, lim)
    ML, MR = dressed_M(pair, GL, GR)
    ctx = OSContext(L, pair, tcfg, GL, GR, ML, MR)
    if check:
        res = os_residuals(ctx)
        bad = {k: v for k, v in res.items() if v > tol}
        if bad:
            raise PostconditionError(f"Orlov-Schulman identities fail: {bad}")
    return ctx


def _relative(A: DiffOp, B: DiffOp, scale: float) -> float:
    if A.starved or B.starved:
        raise BandExhausted("bracket has an empty reliable band")
    return op_distance(A, B) / max(1.0, scale)


def os_residuals(ctx: OSContext) -> dict:
    """``[L, M_L] - 1``, ``[L, M_R] - 1`` and ``[M_L - M_R, L]`` relative to ``|L| |M|``.

    Each commutator is only compared where its reliable band reaches; that
    band always contains exponent 0 or an error is raised.
    """
    L, ring = ctx.L.op, ctx.L.ring
    one = DiffOp.identity(ring, L.limit)
    nL = op_norm(L)
    out = {}
    for name, Mop in (("[L,M_L]-1", ctx.ML), ("[L,M_R]-1", ctx.MR)):
        C = commutator(L, Mop)
        C.require(0, 0, name)
        out[name] = _relative(C, one, nL * op_norm(Mop))
    X = ctx.X
    C = commutator(X, L)
    C.require(0, 0, "[M_L-M_R,L]")
    out["[M_L-M_R,L]"] = _relative(C, DiffOp.zero(ring, L.limit), nL * op_norm(X))
    return out


# ---------------------------------------------------------------------------
# evolving the dressing pair
# ---------------------------------------------------------------------------


def refresh_pair(PL: DiffOp, PR: DiffOp, depth: int) -> DressingPair:
    """Pair with recomputed inverses; ``w~_0`` may have drifted off a constant."""
    return DressingPair(PL, PR, series_inverse(PL, "lower", depth),
                        series_inverse(PR, "upper", depth, near_order=NEAR_ORDER), depth)


def rk4_pair(pair: DressingPair, field: Callable, h: float, steps: int = 1) -> DressingPair:
    """Classical RK4 on ``(P_L, P_R)`` for ``field(pair, s) -> (dPL, dPR)``."""
    s = 0.0
    for _ in range(steps):
        def at(a, k):
            return refresh_pair(pair.PL + a * k[0], pair.PR + a * k[1], pair.depth)
        k1 = field(pair, s)
        k2 = field(at(h / 2, k1), s + h / 2)
        k3 = field(at(h / 2, k2), s + h / 2)
        k4 = field(at(h, k3), s + h)
        dPL = k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]
        dPR = k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]
        pair = refresh_pair(pair.PL + (h / 6) * dPL, pair.PR + (h / 6) * dPR, pair.depth)
        s += h
    return pair


def dressed_B(pair: DressingPair, N: int, M: int, flow) -> DiffOp:
    """``P_L Lambda^p P_L^{-1}`` (upper flows) or ``P_R Lambda^{-q} P_R^{-1}`` (lower flows)."""
    flow = as_flow(flow).validate(N, M)
    ring, lim = pair.PL.ring, pair.PL.limit
    p = flow.power(N, M)
    if flow.gamma >= 1:
        return pair.PL * DiffOp.monomial(ring, p, limit=lim) * pair.PLinv
    return pair.PR * DiffOp.monomial(ring, -p, limit=lim) * pair.PRinv


def sato_field(N: int, M: int, flow) -> Callable:
    """Sato equations with the generator read off the current dressing pair."""
    def field(pair, s):
        B = dressed_B(pair, N, M, flow)
        return -(B.minus() * pair.PL), B.plus() * pair.PR
    return field


def context_at(pair: DressingPair, N: int, M: int, tcfg: TimeConfig) -> OSContext:
    """M operators of a (possibly evolved) pair, ``L`` taken from the left dressing."""
    left = dressed_lax(pair, N, M, "left")
    L = LaxOperator(left.restrict(-M, N), N, M, tol=1e-6)
    ring, lim = pair.PL.ring, pair.PL.limit
    GL, GR = gamma_L(ring, N, M, tcfg, lim), gamma_R(ring, N, M, tcfg, lim)
    ML, MR = dressed_M(pair, GL, GR)
    return OSContext(L, pair, tcfg, GL, GR, ML, MR)


def m_flow_residual(ctx: OSContext, flow, h: float = 1e-5, D: int | None = None) -> dict:
    """Central difference of ``M_L``, ``M_R`` and ``M_L L`` along a hierarchy flow.

    The pair is moved by ``+-h`` with one RK4 step of the Sato equations and
    the times are shifted by the same amount; the difference quotient is
    compared with ``[A, .]`` at the base point.  Residuals are relative to the
    size of the commutator.
    """
    flow = as_flow(flow).validate(ctx.N, ctx.M)
    N, M = ctx.N, ctx.M
    D = D if D is not None else ctx.pair.depth
    A = build_A(ctx.L, flow, D, Roots(ctx.L, D))
    field = sato_field(N, M, flow)
    plus = context_at(rk4_pair(ctx.pair, field, h), N, M, ctx.tcfg.shifted(flow, h))
    minus = context_at(rk4_pair(ctx.pair, field, -h), N, M, ctx.tcfg.shifted(flow, -h))

    def check(get):
        fd = (get(plus) - get(minus)) * (1 / (2 * h))
        ref = commutator(A, get(ctx))
        if fd.starved or ref.starved or max(fd.reliable[0], ref.reliable[0]) > min(fd.reliable[1], ref.reliable[1]):
            raise BandExhausted(f"flow {flow}: finite difference has no reliable overlap; raise D")
        return op_distance(fd, ref) / max(1.0, op_norm(ref))

    return {
        "M_L": check(lambda c: c.ML),
        "M_R": check(lambda c: c.MR),
        "M_L L": check(lambda c: c.ML * c.L.op),
    }


# ---------------------------------------------------------------------------
# wave functions
# ---------------------------------------------------------------------------


def _finite_copy(op: DiffOp) -> DiffOp:
    """The stored coefficients taken as an exact finite operator."""
    return DiffOp(op.ring, op.coeffs, None, None, op.limit)


def _sample(op: DiffOp, grid: LatticeGrid) -> DiffOp:
    cs = {k: c.sample(grid) for k, c in op.coeffs.items()}
    return DiffOp(grid, cs, None, None, op.limit)


def _side_data(ctx: OSContext, side: str):
    """(dressing, Gamma, bare operator, mu-power of Lambda) for one side."""
    ring, lim = ctx.L.ring, ctx.L.op.limit
    if side == "L":
        return (_finite_copy(ctx.pair.PL), ctx.gammaL, DiffOp.monomial(ring, ctx.N, limit=lim),
                Fraction(1, ctx.N))
    if side == "R":
        return (_finite_copy(ctx.pair.PR), ctx.gammaR, DiffOp.monomial(ring, -ctx.M, limit=lim),
                Fraction(-1, ctx.M))
    raise ValueError("side must be 'L' or 'R'")


@dataclass(frozen=True)
class WaveProbe:
    """``w = P e^xi`` sampled on a window for one value of the spectral parameter.

    On the right side the spectral variable is ``mu = 1/lambda``: ``L w = mu w``
    and ``M_R w = dw/dmu``.  ``rate`` is the power of ``mu`` produced by one
    shift acting on ``e^xi``.
    """

    lam: complex
    side: str
    grid: LatticeGrid
    spectral: complex
    rate: Fraction
    phase: LatticeFunction
    wave: LatticeFunction
    d1: LatticeFunction
    d2: LatticeFunction
    dressing: DiffOp
    gamma: DiffOp
    bare: DiffOp
    region: tuple


def _phase_parts(ctx: OSContext, side: str, mu: complex, xs: np.ndarray):
    """``xi`` and its first two ``mu``-derivatives.

    Left (``mu = lambda``): ``xi = sum t mu^s + (x/(N eps)) log mu``.
    Right (``mu = 1/lambda``): ``xi = -sum t mu^s - (x/(M eps)) log mu``.
    """
    eps = float(ctx.L.ring.epsilon)
    if side == "L":
        a, sign = 1 / (ctx.N * eps), 1.0
        terms = [(float(upper_weight(ctx.N, f)), float(t)) for f, t in ctx.tcfg.values.items() if f.gamma >= 1]
    else:
        a, sign = -1 / (ctx.M * eps), -1.0
        terms = [(float(lower_weight(ctx.M, f)), float(t)) for f, t in ctx.tcfg.values.items() if f.gamma < 1]
    log_mu = cmath.log(mu)
    xi = a * xs * log_mu + 0j
    d1 = a * xs / mu + 0j
    d2 = -a * xs / mu ** 2 + 0j
    for s, t in terms:
        xi = xi + sign * t * cmath.exp(s * log_mu)
        d1 = d1 + sign * t * s * cmath.exp((s - 1) * log_mu)
        d2 = d2 + sign * t * s * (s - 1) * cmath.exp((s - 2) * log_mu)
    return xi, d1, d2


def wave_grid(ctx: OSContext, side: str, interior=(-4, 4)) -> LatticeGrid:
    """Smallest window whose interior after ``M^2 L`` covers ``interior`` (in sites)."""
    Mop = ctx.ML if side == "L" else ctx.MR
    keys_L, keys_M = list(ctx.L.op.coeffs), list(Mop.coeffs)
    below = -min(keys_L) - 2 * min(min(keys_M), 0)
    above = max(keys_L) + 2 * max(max(keys_M), 0)
    lo, hi = interior[0] - below, interior[1] + above
    eps = ctx.L.ring.epsilon
    return LatticeGrid(eps, hi - lo + 1, "windowed", lo * eps)


def build_wave(ctx: OSContext, lam: complex, side: str, grid: LatticeGrid | None = None,
               region=(-4, 4)) -> WaveProbe:
    """Wave function and its first two spectral derivatives, all analytic.

    ``region`` is the site range (in units of ``eps`` from ``x = 0``) where
    residuals are reported; by default the window is sized around it.
    ``Lambda^j e^xi = mu^{rate j} e^xi``, so ``P e^xi = sum_j p_j mu^{rate j} e^xi``
    and each term is differentiated in closed form.
    """
    if grid is None:
        grid = wave_grid(ctx, side, region)
    if grid.periodic:
        raise DomainError("wave functions need a windowed grid")
    lam = complex(lam)
    if lam == 0:
        raise DomainError("spectral parameter must be nonzero")
    if abs(abs(lam) - 1) < 1e-12:
        raise DomainError("spectral parameter on the unit circle: the tail does not decay")
    if (side == "L") != (abs(lam) > 1):
        raise DomainError("tail grows for this spectral parameter; use |lambda|>1 (L) or <1 (R)")
    mu = lam if side == "L" else 1 / lam
    P, G, bare, rate = _side_data(ctx, side)
    xs = grid.coordinates()
    xi, x1, x2 = _phase_parts(ctx, side, mu, xs)
    log_mu = cmath.log(mu)
    e = np.exp(xi)
    w, w1, w2 = (np.zeros_like(e) for _ in range(3))
    for j, c in P.coeffs.items():
        s = float(rate * j)
        base = c.evaluate(xs) * cmath.exp(s * log_mu) * e
        f1 = s / mu + x1
        w = w + base
        w1 = w1 + base * f1
        w2 = w2 + base * (-s / mu ** 2 + x2 + f1 * f1)
    fn = grid.function
    origin = int(grid.origin / grid.epsilon)
    sites = (region[0] - origin, region[1] - origin)
    return WaveProbe(lam, side, grid, mu, rate, fn(xi), fn(w), fn(w1), fn(w2), P, G, bare, sites)


def wave_residuals(probe: WaveProbe, ctx: OSContext) -> dict:
    """Eigenvalue, ``M``-equation and mixed residuals with their truncation-tail bounds.

    Every residual is ``(R e^xi)(x)`` for an exact finite operator ``R``: the
    chain applied to the truncated dressing minus the dressing times its bare
    counterpart.  The bound is ``sum_k |R_k| |mu|^{rate k} |e^xi|`` plus a
    rounding allowance, and is also reported as ``C |mu|^{-(D+1)/deg}``.
    """
    grid, mu, rate = probe.grid, probe.spectral, probe.rate
    P, G, bare = probe.dressing, probe.gamma, probe.bare
    Lop = _finite_copy(ctx.L.op)
    Mop = _finite_copy(ctx.ML if probe.side == "L" else ctx.MR)
    sL, sM = _sample(Lop, grid), _sample(Mop, grid)
    w = probe.wave
    Lw = apply(sL, w)
    MLw = apply(sM, Lw)
    cases = {
        "L w = mu w": (Lop * P - P * bare, Lw, mu * w),
        "M w = dw": (Mop * P - P * G, apply(sM, w), probe.d1),
        "M L w = mu dw": (Mop * Lop * P - P * G * bare, MLw, mu * probe.d1),
        "M^2 L w = mu d2w": (Mop * Mop * Lop * P - P * G * G * bare, apply(sM, MLw), mu * probe.d2),
    }
    deg = abs(1 / rate)
    D = ctx.pair.depth
    out = {}
    for name, (R, lhs, rhs) in cases.items():
        res = lhs - rhs
        lo, hi = max(res.valid[0], probe.region[0]), min(res.valid[1], probe.region[1])
        if lo > hi:
            raise BandExhausted(f"{name}: no interior sites left in the requested region")
        xs = grid.coordinates()[lo:hi + 1]
        ex = np.abs(np.exp(probe.phase.values[lo:hi + 1]))
        acc = np.zeros_like(xs)
        for k, c in R.coeffs.items():
            acc = acc + np.abs(c.evaluate(xs)) * abs(mu) ** float(rate * k)
        size = max(1.0, float(np.max(np.abs(lhs.values[lo:hi + 1]))), float(np.max(np.abs(rhs.values[lo:hi + 1]))))
        bound = float(np.max(acc * ex)) + 1e-11 * size
        out[name] = {
            "residual": float(np.max(np.abs(res.values[lo:hi + 1]))),
            "bound": bound,
            "C": bound * abs(mu) ** float((D + 1) / deg),
            "interior": (lo, hi),
        }
    return out
