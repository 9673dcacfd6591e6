"""Lax operators, fractional roots and dressing operators.

Roots are computed by triangular recursion on the operator itself; dressing
operators are recovered stage by stage from the intertwining relations
``L P_L = P_L Lambda^N`` and ``L P_R = P_R Lambda^-M``.  The two routes are
independent, which is what :func:`verify_frac` exploits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .coeff import LatticeFunction, LatticeGrid, PolyRing, XPoly, solve_shift_sum
from .diffop import INF, DiffOp, op_distance, op_norm, op_power
from .errors import BandExhausted, CompatibilityError, DomainError, PostconditionError, SingularOperator


class LaxOperator:
    """``Lambda^N + u_{N-1} Lambda^{N-1} + ... + u_{-M} Lambda^{-M}``."""

    __slots__ = ("op", "N", "M")

    def __init__(self, op: DiffOp, N: int, M: int, tol: float = 1e-11):
        if N < 1 or M < 1:
            raise ValueError("N and M must be positive")
        if op.support[0] < -M or op.support[1] > N:
            raise ValueError(f"Lax operator support {op.support} exceeds [-{M}, {N}]")
        if not op.covers(-M, N):
            raise BandExhausted("Lax operator must be exact on its whole band")
        top = op.coeffs.get(N)
        if top is None or (top - op.ring.one()).norm() > tol:
            raise ValueError("Lax operator must be monic")
        coeffs = {k: c for k, c in op.coeffs.items()}
        coeffs[N] = op.ring.one()
        self.op = DiffOp(op.ring, coeffs, (-M, N), (-INF, INF), op.limit)
        self.N = N
        self.M = M

    @classmethod
    def from_fields(cls, ring, N: int, M: int, fields: Mapping[int, object]):
        cs = {N: ring.one()}
        for j, u in fields.items():
            if not -M <= j <= N - 1:
                raise ValueError(f"field index {j} outside [-{M}, {N - 1}]")
            cs[j] = ring.const(u) if isinstance(u, (int, float, complex, Fraction)) else u
        return cls(DiffOp(ring, cs, (-M, N)), N, M)

    @property
    def ring(self):
        return self.op.ring

    def u(self, j: int):
        return self.op.coeffs.get(j, self.ring.zero())

    def fields(self) -> dict:
        return {j: self.u(j) for j in range(-self.M, self.N)}

    def updated(self, delta: Mapping[int, object], scale=1) -> "LaxOperator":
        cs = dict(self.op.coeffs)
        for j, d in delta.items():
            cs[j] = cs.get(j, self.ring.zero()) + d * scale
        return LaxOperator(DiffOp(self.ring, cs, (-self.M, self.N)), self.N, self.M)


@dataclass(frozen=True)
class DressingPair:
    PL: DiffOp
    PR: DiffOp
    PLinv: DiffOp
    PRinv: DiffOp
    depth: int

    @property
    def w(self):
        return {j: self.PL.coeffs.get(-j) for j in range(1, self.depth + 1)}

    @property
    def w_tilde(self):
        return {j: self.PR.coeffs.get(j) for j in range(0, self.depth + 1)}


@dataclass(frozen=True)
class DressResult:
    pair: DressingPair
    lax: LaxOperator
    lax_right: DiffOp
    mismatch: float
    leading_field_residual: float
    leak: float


def _ring_of(f):
    return f.grid if isinstance(f, LatticeFunction) else f.ring


def _is_constant_one(c) -> bool:
    return c.is_constant() and abs(complex(c.constant_value()) - 1) < 1e-14


def series_inverse(P: DiffOp, side: str, depth: int, near_order: int | None = None) -> DiffOp:
    """Inverse of ``sum_{i>=0} p_i Lambda^{-i}`` (``side='lower'``) or of
    ``sum_{i>=0} p_i Lambda^{i}`` (``side='upper'``), to ``depth`` terms.

    A non-constant polynomial leading coefficient has no polynomial inverse;
    ``near_order`` then selects a truncated Neumann series for it.
    """
    sgn = -1 if side == "lower" else 1
    ring = P.ring
    p0 = P.coeffs.get(0)
    if p0 is None:
        raise DomainError("leading dressing coefficient vanishes")
    if _is_constant_one(p0):
        inv0 = ring.one()
    elif near_order is not None and isinstance(p0, XPoly) and not p0.is_constant():
        inv0 = p0.near_reciprocal(near_order)
    else:
        inv0 = p0.reciprocal()
    q = [inv0]
    # exact input coefficients reach depth d; the inverse is exact to the same depth
    known = depth
    if side == "lower" and P.reliable[0] > -INF:
        known = min(depth, -P.reliable[0])
    if side == "upper" and P.reliable[1] < INF:
        known = min(depth, P.reliable[1])
    for k in range(1, known + 1):
        acc = None
        for i in range(1, k + 1):
            pi = P.coeffs.get(sgn * i)
            if pi is None:
                continue
            t = pi * q[k - i].shift(sgn * i)
            acc = t if acc is None else acc + t
        q.append(ring.zero() if acc is None else -(inv0 * acc))
    coeffs = {sgn * k: c for k, c in enumerate(q)}
    if side == "lower":
        return DiffOp(ring, coeffs, (-INF, 0), (-known, INF), P.limit)
    return DiffOp(ring, coeffs, (0, INF), (-INF, known), P.limit)


def _lower_dressing(ring, ws: Sequence, D: int, limit) -> DiffOp:
    cs = {0: ring.one()}
    for j, w in enumerate(ws[:D], start=1):
        if w is not None:
            cs[-j] = w
    return DiffOp(ring, cs, (-INF, 0), (-D, INF), limit)


def _upper_dressing(ring, ws: Sequence, D: int, limit) -> DiffOp:
    cs = {j: w for j, w in enumerate(ws[:D + 1]) if w is not None}
    return DiffOp(ring, cs, (0, INF), (-INF, D), limit)


def make_pair(PL: DiffOp, PR: DiffOp, D: int) -> DressingPair:
    return DressingPair(PL, PR, series_inverse(PL, "lower", D), series_inverse(PR, "upper", D), D)


def dress_from_w(wlist, N: int, M: int, wtlist, D: int, limit: int = 256) -> DressResult:
    """Build the dressing pair from coefficient lists and the Lax operators it induces.

    ``wlist[i-1]`` is ``w_i`` and ``wtlist[j]`` is ``w~_j``.  Nothing assumes
    the two lists are compatible: both ``L`` (left route, returned as a
    :class:`LaxOperator`) and ``L'`` (right route) are formed and their
    distance is reported as ``mismatch``.
    """
    if D < 1:
        raise ValueError("depth must be at least 1")
    if len(wlist) < D or len(wtlist) < 1:
        raise ValueError("coefficient lists shorter than the requested depth")
    ring = _ring_of(wtlist[0])
    wt0 = wtlist[0]
    if (isinstance(wt0, LatticeFunction) and np.min(np.abs(wt0._view())) < 1e-300) or wt0.norm() == 0:
        raise DomainError("w~_0 must not vanish")
    wt = list(wtlist) + [None] * max(0, D + 1 - len(wtlist))
    PL = _lower_dressing(ring, list(wlist), D, limit)
    PR = _upper_dressing(ring, wt, D, limit)
    pair = make_pair(PL, PR, D)
    left = PL * DiffOp.monomial(ring, N, limit=limit) * pair.PLinv
    right = PR * DiffOp.monomial(ring, -M, limit=limit) * pair.PRinv
    if not left.covers(-M, N):
        raise BandExhausted(f"depth {D} too small: need at least {N + M}", required=N + M)
    lax = LaxOperator(left.restrict(-M, N), N, M, tol=1e-9)
    leak = max((c.norm() for k, c in left.coeffs.items() if k < -M), default=0.0)
    mismatch = op_distance(lax.op, right, band=(-M, N)) if right.reliable[0] <= right.reliable[1] else INF
    w1 = wlist[0] if wlist[0] is not None else ring.zero()
    leading = (lax.u(N - 1) - (w1 - w1.shift(N))).norm()
    return DressResult(pair, lax, right, mismatch, leading, leak)


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------


def _finite(ring, coeffs, limit):
    return DiffOp(ring, coeffs, None, None, limit)


def _rel_residual(A: DiffOp, L: LaxOperator) -> float:
    return op_distance(A, L.op) / max(op_norm(L.op), 1e-300)


def root_upper(L: LaxOperator, D: int, tol: float = 1e-8) -> DiffOp:
    """``L^{1/N} = Lambda + sum_{k=-D}^{0} a_k Lambda^k`` by descending recursion."""
    if D < 1:
        raise ValueError("depth must be at least 1")
    N, ring, limit = L.N, L.ring, L.op.limit
    if N == 1:
        return L.op
    known = {1: ring.one()}
    shifts = [(1, j) for j in range(N)]
    for s in range(D + 1):
        target = N - 1 - s
        partial = op_power(_finite(ring, known, limit), N)
        rhs = L.op.coeffs.get(target, ring.zero()) - partial.coeffs.get(target, ring.zero())
        known[-s] = solve_shift_sum(shifts, rhs)
    R = DiffOp(ring, known, (-INF, 1), (-D, INF), limit)
    res = _rel_residual(op_power(R, N), L)
    if res > tol:
        raise PostconditionError(f"upper root residual {res:.3e} exceeds {tol:.1e}")
    return R


def _positive_root(c, M: int, ring):
    """``M``-th root of a positive constant, exact when it is an exact power."""
    if isinstance(c, Fraction):
        if c <= 0:
            raise DomainError("u_{-M} must be positive")
        num, den = round(c.numerator ** (1 / M)), round(c.denominator ** (1 / M))
        if num ** M == c.numerator and den ** M == c.denominator:
            return Fraction(num, den)
        raise DomainError("exact backend needs u_{-M} to be an exact M-th power")
    v = complex(c)
    if abs(v.imag) > 1e-14 or v.real <= 0:
        raise DomainError("u_{-M} must be positive")
    return v.real ** (1.0 / M)


def _lowest_root_coefficient(L: LaxOperator):
    M, ring = L.M, L.ring
    u = L.u(-M)
    if isinstance(u, LatticeFunction):
        logb = solve_shift_sum([(1, -j) for j in range(M)], u.log())
        return logb.exp()
    if not u.is_constant():
        raise DomainError("polynomial backend needs a constant u_{-M}")
    return ring.const(_positive_root(u.constant_value(), M, ring))


def root_lower(L: LaxOperator, D: int, tol: float = 1e-8) -> DiffOp:
    """``L^{1/M} = sum_{k=-1}^{D} b_k Lambda^k`` by ascending recursion."""
    if D < 1:
        raise ValueError("depth must be at least 1")
    M, ring, limit = L.M, L.ring, L.op.limit
    if M == 1:
        return L.op
    b = _lowest_root_coefficient(L)
    # beta[q](x) = prod_{r<q} b(x - r eps)
    beta = [ring.one()]
    for q in range(1, M):
        beta.append(beta[-1] * b.shift(-(q - 1)))
    known = {-1: b}
    for s in range(1, D + 2):
        target = s - M
        partial = op_power(_finite(ring, known, limit), M)
        rhs = L.op.coeffs.get(target, ring.zero()) - partial.coeffs.get(target, ring.zero())
        terms = [(beta[p] * beta[M - 1 - p].shift(s - 1 - p), -p) for p in range(M)]
        known[s - 1] = solve_shift_sum(terms, rhs)
    S = DiffOp(ring, known, (-1, INF), (-INF, D), limit)
    res = _rel_residual(op_power(S, M), L)
    if res > tol:
        raise PostconditionError(f"lower root residual {res:.3e} exceeds {tol:.1e}")
    return S


# ---------------------------------------------------------------------------
# dressing recovery
# ---------------------------------------------------------------------------


def _gauge_constant(gauge, stage):
    if gauge in (None, "mean-zero"):
        return 0
    return gauge[stage - 1] if stage - 1 < len(gauge) else 0


def solve_PL_from_L(L: LaxOperator, D: int, gauge="mean-zero") -> DiffOp:
    """Recover ``P_L = 1 + sum w_j Lambda^{-j}`` with ``L P_L = P_L Lambda^N``.

    Stage ``j`` solves ``w_j(x + N eps) - w_j(x) = -sum_{i<N} u_i w_{j-N+i}(x + i eps)``.
    The kernel (constants) is fixed by ``gauge``: ``'mean-zero'`` (zero mean on
    a periodic grid, zero constant term for polynomials) or a sequence of
    constants added to each stage's gauge-fixed solution.
    """
    N, M, ring = L.N, L.M, L.ring
    w = {0: ring.one()}
    for j in range(1, D + 1):
        rhs = ring.zero()
        for i in range(-M, N):
            idx = j - N + i
            if idx >= 0 and idx in w:
                rhs = rhs + L.u(i) * w[idx].shift(i)
        try:
            sol = solve_shift_sum([(1, N), (-1, 0)], -rhs, singular="gauge")
        except CompatibilityError as exc:
            raise CompatibilityError(f"left dressing stage {j}: {exc}", stage=j, defect=exc.defect) from None
        w[j] = sol + _gauge_constant(gauge, j)
    return _lower_dressing(ring, [w[j] for j in range(1, D + 1)], D, L.op.limit)


def solve_PR_from_L(L: LaxOperator, D: int, gauge="mean-zero") -> DiffOp:
    """Recover ``P_R = sum_{j>=0} w~_j Lambda^j`` with ``L P_R = P_R Lambda^{-M}``.

    Stage 0 solves ``w~_0(x) = u_{-M}(x) w~_0(x - M eps)`` with zero-mean
    logarithm; later stages solve
    ``w~_j(x) - u_{-M} w~_j(x - M eps) = sum_{i>-M} u_i w~_{j-M-i}(x + i eps)``.
    """
    N, M, ring = L.N, L.M, L.ring
    u_low = L.u(-M)
    if isinstance(u_low, LatticeFunction):
        try:
            logw = solve_shift_sum([(1, 0), (-1, -M)], u_low.log(), singular="gauge")
        except CompatibilityError as exc:
            raise CompatibilityError(f"right dressing stage 0: {exc}", stage=0, defect=exc.defect) from None
        wt = {0: logw.exp()}
    else:
        if not u_low.is_constant():
            raise CompatibilityError("polynomial right dressing needs a constant u_{-M}", stage=0)
        # w~_0 = u_{-M}^(x/(M eps)), a pure exponential
        wt = {0: XPoly(ring, [1], _positive_root(u_low.constant_value(), M, ring))}
    for j in range(1, D + 1):
        rhs = ring.zero()
        for i in range(-M + 1, N + 1):
            idx = j - M - i
            if 0 <= idx < j:
                rhs = rhs + L.op.coeffs.get(i, ring.zero()) * wt[idx].shift(i)
        try:
            sol = solve_shift_sum([(1, 0), (-u_low, -M)], rhs, singular="gauge")
        except CompatibilityError as exc:
            raise CompatibilityError(f"right dressing stage {j}: {exc}", stage=j, defect=exc.defect) from None
        # the kernel is spanned by w~_0 times M-periodic functions
        wt[j] = sol + _gauge_constant(gauge, j) * wt[0]
    return _upper_dressing(ring, [wt[j] for j in range(D + 1)], D, L.op.limit)


def consistent_pair(L: LaxOperator, D: int, gauge_left="mean-zero", gauge_right="mean-zero") -> DressingPair:
    """Dressing pair of ``L`` recovered independently on both sides."""
    return make_pair(solve_PL_from_L(L, D, gauge_left), solve_PR_from_L(L, D, gauge_right), D)


def dressed_lax(pair: DressingPair, N: int, M: int, side: str) -> DiffOp:
    ring, lim = pair.PL.ring, pair.PL.limit
    if side == "left":
        return pair.PL * DiffOp.monomial(ring, N, limit=lim) * pair.PLinv
    return pair.PR * DiffOp.monomial(ring, -M, limit=lim) * pair.PRinv


@dataclass(frozen=True)
class FracReport:
    upper_difference: float
    lower_difference: float
    roots_difference: float
    consistency: float

    def as_dict(self):
        return dict(upper_difference=self.upper_difference, lower_difference=self.lower_difference,
                    roots_difference=self.roots_difference, consistency=self.consistency)


def pair_consistency(L: LaxOperator, pair: DressingPair) -> float:
    scale = max(op_norm(L.op), 1e-300)
    left = dressed_lax(pair, L.N, L.M, "left")
    right = dressed_lax(pair, L.N, L.M, "right")
    return max(op_distance(left, L.op), op_distance(right, L.op)) / scale


def verify_frac(L: LaxOperator, pair: DressingPair, tol: float = 1e-8) -> FracReport:
    """Compare dressed roots with the recursive roots, and the two roots with each other."""
    cons = pair_consistency(L, pair)
    if cons > tol:
        raise CompatibilityError(f"dressing pair is inconsistent with L (defect {cons:.3e})", defect=cons)
    ring, lim, D = L.ring, L.op.limit, pair.depth
    up_dressed = pair.PL * DiffOp.monomial(ring, 1, limit=lim) * pair.PLinv
    lo_dressed = pair.PR * DiffOp.monomial(ring, -1, limit=lim) * pair.PRinv
    up = root_upper(L, D)
    lo = root_lower(L, D)
    scale = max(op_norm(L.op), 1e-300)
    return FracReport(op_distance(up_dressed, up) / scale, op_distance(lo_dressed, lo) / scale,
                      op_distance(up, lo) / scale, cons)


# ---------------------------------------------------------------------------
# random data
# ---------------------------------------------------------------------------


def random_lax(grid: LatticeGrid, N: int, M: int, rng: np.random.Generator, modes: int = 3,
               amplitude: float = 0.2) -> LaxOperator:
    """Smooth real fields on a periodic grid with ``u_{-M} = exp(small field)``."""
    fields = {j: grid.random_smooth(rng, modes, amplitude) for j in range(-M + 1, N)}
    fields[-M] = grid.random_smooth(rng, modes, amplitude).exp()
    return LaxOperator.from_fields(grid, N, M, fields)


def random_poly_lax(ring: PolyRing, N: int, M: int, rng: np.random.Generator, degree: int = 1,
                    scale: int = 4, amplitude=Fraction(1, 2), lowest=1) -> LaxOperator:
    """Lax operator with small random rational polynomial fields and constant ``u_{-M}``.

    Constant terms lie in ``[-amplitude, amplitude]`` on a grid of spacing
    ``amplitude/scale``; higher terms are damped further.  ``u_{-M}`` is the
    constant ``lowest``: 1 keeps both dressing operators polynomial, other
    values give the right one an exponential factor.  Small ``lowest`` pulls
    the branch points of the spectral curve towards the origin.
    """
    amplitude = Fraction(amplitude)
    fields = {}
    for j in range(-M + 1, N):
        cs = [Fraction(int(rng.integers(-scale, scale + 1)), scale) * amplitude for _ in range(degree + 1)]
        if degree >= 1:
            cs[1:] = [c / (4 * (d + 1)) for d, c in enumerate(cs[1:])]
        fields[j] = XPoly(ring, cs if ring.exact else [float(c) for c in cs])
    fields[-M] = ring.const(Fraction(lowest) if ring.exact else float(lowest))
    return LaxOperator.from_fields(ring, N, M, fields)
