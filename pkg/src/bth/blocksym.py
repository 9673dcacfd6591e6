"""Additional symmetries of the hierarchy and their Lie algebra.

The additional flow with index ``(m, l)`` moves the dressing pair by

    dP_L = -(K)_- P_L,     dP_R = (K)_+ P_R,      K = (M_L - M_R)^m L^l.

``M_L - M_R`` is a lower series minus an upper series, so it has infinite
tails on both sides.  A product of two such operators has coefficients that
are infinite sums, which a truncated series cannot represent: generators with
``m >= 2`` are therefore reported as :class:`BandExhausted` rather than
approximated.  Everything with ``m <= 1`` is exact up to truncation.

Brackets of flows are evaluated two ways: by the chain rule on closed-form
directional derivatives, and by composing integrated flows.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .coeff import XPoly
from .diffop import INF, DiffOp, commutator, glue, op_distance, op_norm
from .dressing import DressingPair, LaxOperator, consistent_pair
from .errors import BandExhausted, PostconditionError
from .hierarchy import FlowIndex, TimeConfig, as_flow, residual_record
from .oschulman import (OSContext, build_M, context_at, dressed_B, lower_weight, rk4_pair,
                        upper_weight)


@dataclass(frozen=True, order=True)
class AddFlowIndex:
    """Index ``(m, l)`` of the flow generated by ``(M_L - M_R)^m L^l``."""

    m: int
    l: int

    def __post_init__(self):
        if self.m < 0 or self.l < 0:
            raise ValueError(f"additional flow index ({self.m},{self.l}) must be nonnegative")

    @property
    def block(self):
        """Label in the shifted basis ``d_{m-1, l-1}``."""
        return (self.m - 1, self.l - 1)

    @classmethod
    def from_block(cls, a: int, b: int) -> "AddFlowIndex":
        return cls(a + 1, b + 1)

    def __str__(self):
        return f"({self.m},{self.l})"


def as_index(idx) -> AddFlowIndex:
    return idx if isinstance(idx, AddFlowIndex) else AddFlowIndex(*idx)


GENERATORS = tuple(AddFlowIndex(*p) for p in ((0, 1), (1, 0), (1, 1), (2, 1), (1, 2)))


def structure_constant(a, b) -> int:
    """``km - nl`` for ``a = (m, l)``, ``b = (n, k)``."""
    a, b = as_index(a), as_index(b)
    return b.l * a.m - b.m * a.l


def bracket_target(a, b):
    """Index ``(m+n-1, k+l-1)`` of the bracket, or ``None`` when it leaves the index set."""
    a, b = as_index(a), as_index(b)
    m, l = a.m + b.m - 1, a.l + b.l - 1
    if m < 0 or l < 0:
        return None
    return AddFlowIndex(m, l)


def required_margin(N: int, M: int, *idxs) -> int:
    """Truncation margin demanded before a bracket or field is evaluated."""
    idxs = [as_index(i) for i in idxs]
    return (sum(i.m for i in idxs) * max(N, M) + sum(i.l for i in idxs) * N + N + M)


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AddState:
    """A dressing pair with its Lax operator and Orlov-Schulman operators."""

    pair: DressingPair
    L: LaxOperator
    ctx: OSContext
    tcfg: TimeConfig
    depth: int
    consistent: bool = True
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def N(self):
        return self.L.N

    @property
    def M(self):
        return self.L.M

    @classmethod
    def from_lax(cls, L: LaxOperator, D: int, tcfg: TimeConfig | None = None, check: bool = True,
                 tol: float = 1e-9) -> "AddState":
        tcfg = tcfg if tcfg is not None else TimeConfig()
        pair = consistent_pair(L, D)
        ctx = build_M(L, pair, tcfg, check=check, tol=tol)
        return cls(pair, L, ctx, tcfg, D)

    @classmethod
    def from_pair(cls, pair: DressingPair, N: int, M: int, tcfg: TimeConfig | None = None) -> "AddState":
        tcfg = tcfg if tcfg is not None else TimeConfig()
        ctx = context_at(pair, N, M, tcfg)
        return cls(pair, ctx.L, ctx, tcfg, pair.depth)

    @classmethod
    def trivial(cls, ring, N: int, M: int, D: int, tcfg: TimeConfig | None = None,
                limit: int = 256) -> "AddState":
        """``L = Lambda^N`` dressed by the identity on both sides.

        The right dressing then gives ``Lambda^-M`` instead of ``L``, so the
        state is not a solution of the reduction and ``dL`` is not formed.
        """
        one = DiffOp.identity(ring, limit)
        pair = DressingPair(one, one, one, one, D)
        tcfg = tcfg if tcfg is not None else TimeConfig()
        L = LaxOperator(DiffOp.monomial(ring, N, limit=limit), N, M)
        return cls(pair, L, build_M(L, pair, tcfg, check=False), tcfg, D, consistent=False)

    def check_margin(self, *idxs):
        need = required_margin(self.N, self.M, *idxs)
        if self.depth < need:
            raise BandExhausted(f"depth {self.depth} below the margin {need} for {', '.join(map(str, idxs))}",
                                required=need)


def _starved(op: DiffOp, what: str) -> DiffOp:
    if op.starved:
        raise BandExhausted(f"{what}: product of operators with infinite tails on both sides "
                            "has no finite coefficients")
    return op


def _power(op: DiffOp, n: int, what: str) -> DiffOp:
    out = DiffOp.identity(op.ring, op.limit)
    for i in range(n):
        out = op if i == 0 else _starved(out * op, what)
    return out


def generator(state: AddState, idx) -> DiffOp:
    """``K = (M_L - M_R)^m L^l``."""
    idx = as_index(idx)
    key = ("K", idx)
    if key not in state._cache:
        X = _power(state.ctx.X, idx.m, f"generator {idx}")
        K = X * _power(state.L.op, idx.l, "L power")
        state._cache[key] = _starved(K, f"generator {idx}")
    return state._cache[key]


def _combo(idx) -> dict:
    """A single index or ``{index: coefficient}`` as a coefficient map."""
    if isinstance(idx, Mapping):
        return {as_index(k): v for k, v in idx.items() if v != 0}
    return {as_index(idx): 1}


def _envelope(combo) -> AddFlowIndex:
    """Largest ``m`` and ``l`` occurring in a combination (sets its truncation margin)."""
    c = _combo(combo)
    return AddFlowIndex(max((i.m for i in c), default=0), max((i.l for i in c), default=0))


def combo_generator(state: AddState, combo) -> DiffOp:
    out = None
    for idx, c in _combo(combo).items():
        term = c * generator(state, idx)
        out = term if out is None else out + term
    if out is None:
        return DiffOp.zero(state.L.ring, state.L.op.limit)
    return out


# ---------------------------------------------------------------------------
# vector field
# ---------------------------------------------------------------------------


def _glue_lax(left: DiffOp, right: DiffOp, N: int, M: int, tol: float, what: str) -> DiffOp:
    """Merge ``[-(K)_-, L]`` and ``[(K)_+, L]``: they agree and live on ``[-M, N-1]``."""
    left.require(-M, N, f"{what} (lower form)")
    right.require(-M, N, f"{what} (upper form)")
    scale = max(1.0, op_norm(left.restrict(-M, N)), op_norm(right.restrict(-M, N)))
    gap = op_distance(left, right, band=(-M, N)) / scale
    leak = max((c.norm() for k, c in left.coeffs.items() if k < -M or k >= N), default=0.0)
    leak = max(leak, max((c.norm() for k, c in right.coeffs.items() if k < -M or k >= N), default=0.0))
    if gap > tol or leak / scale > tol:
        raise PostconditionError(f"{what}: reduction not preserved (mismatch {gap:.3e}, "
                                 f"band leak {leak / scale:.3e})")
    return glue(left, right).restrict(-M, N - 1)


@dataclass(frozen=True)
class AddField:
    dPL: DiffOp
    dPR: DiffOp
    dL_left: DiffOp
    dL_right: DiffOp
    dL: DiffOp | None

    def __iter__(self):
        return iter((self.dPL, self.dPR, self.dL_left, self.dL_right))


def add_field(state: AddState, idx, tol: float = 1e-8) -> AddField:
    """Velocity of the pair and of ``L`` along one additional flow (or a combination)."""
    combo = _combo(idx)
    state.check_margin(_envelope(combo))
    key = ("field", tuple(sorted(combo.items())))
    if key in state._cache:
        return state._cache[key]
    K = combo_generator(state, combo)
    Km, Kp = K.minus(), K.plus()
    L = state.L.op
    left = commutator(-Km, L)
    right = commutator(Kp, L)
    dL = _glue_lax(left, right, state.N, state.M, tol, f"additional flow {idx}") if state.consistent else None
    out = AddField(-(Km * state.pair.PL), Kp * state.pair.PR, left, right, dL)
    state._cache[key] = out
    return out


# ---------------------------------------------------------------------------
# closed-form directional derivatives
# ---------------------------------------------------------------------------


def _leibniz_power(base: DiffOp, d_base: DiffOp, n: int) -> DiffOp:
    """Derivative of ``base^n`` given the derivative of ``base``."""
    ring, lim = base.ring, base.limit
    if n == 0:
        return DiffOp.zero(ring, lim)
    out = None
    for p in range(n):
        term = _power(base, p, "Leibniz") * d_base * _power(base, n - p - 1, "Leibniz")
        out = term if out is None else out + term
    return _starved(out, "Leibniz expansion")


def _d_generator(X: DiffOp, L: DiffOp, dX: DiffOp, dL: DiffOp, m: int, l: int) -> DiffOp:
    """Leibniz rule for ``X^m L^l``."""
    first = _leibniz_power(X, dX, m) * _power(L, l, "L power")
    second = _power(X, m, "X power") * _leibniz_power(L, dL, l)
    return _starved(first + second, "Leibniz expansion")


def directional_derivative(state: AddState, idx, target: str, flow=None, power=None) -> DiffOp:
    """Derivative of ``target`` along the additional flow ``idx`` (index or combination).

    ``target`` is one of ``"ML"``, ``"MR"``, ``"X"``, ``"L"``, ``"PL"``, ``"PR"``,
    ``"B"`` (needs ``flow``) or ``"K"`` (needs ``power = (n, k)``).
    """
    f = add_field(state, idx)
    K = combo_generator(state, idx)
    Km, Kp = K.minus(), K.plus()
    ctx = state.ctx
    if target == "PL":
        return f.dPL
    if target == "PR":
        return f.dPR
    if target == "L":
        return f.dL
    if target == "ML":
        return commutator(-Km, ctx.ML)
    if target == "MR":
        return commutator(Kp, ctx.MR)
    if target == "X":
        return commutator(-Km, ctx.ML) - commutator(Kp, ctx.MR)
    if target == "B":
        flow = as_flow(flow).validate(state.N, state.M)
        B = dressed_B(state.pair, state.N, state.M, flow)
        return commutator(-Km, B) if flow.gamma >= 1 else commutator(Kp, B)
    if target == "K":
        n, k = power
        dX = directional_derivative(state, idx, "X")
        return _d_generator(ctx.X, state.L.op, dX, f.dL, n, k)
    raise ValueError(f"unknown target {target!r}")


# ---------------------------------------------------------------------------
# brackets by the chain rule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BracketVector:
    """``[d_A, d_B]`` evaluated on ``P_L``, ``P_R`` and ``L`` with a size for normalisation."""

    PL: DiffOp
    PR: DiffOp
    L: DiffOp
    scale: dict


def _single_indices(combo) -> list:
    return list(_combo(combo))


def chain_bracket(state: AddState, A, B) -> BracketVector:
    """``d_A(F_B) - d_B(F_A)`` with every derivative in closed form."""
    cA, cB = _combo(A), _combo(B)
    state.check_margin(_envelope(cA), _envelope(cB))
    ctx, pair, L = state.ctx, state.pair, state.L.op
    N, M = state.N, state.M
    fA, fB = add_field(state, cA), add_field(state, cB)
    KA, KB = combo_generator(state, cA), combo_generator(state, cB)

    def dK(along, combo):
        out = None
        for idx, c in combo.items():
            t = c * directional_derivative(state, along, "K", power=(idx.m, idx.l))
            out = t if out is None else out + t
        return out

    dA_KB, dB_KA = dK(cA, cB), dK(cB, cA)
    # P_L
    tA = -(dA_KB.minus() * pair.PL) - KB.minus() * fA.dPL
    tB = -(dB_KA.minus() * pair.PL) - KA.minus() * fB.dPL
    PL = tA - tB
    sPL = max(1.0, op_norm(tA), op_norm(tB))
    # P_R
    uA = dA_KB.plus() * pair.PR + KB.plus() * fA.dPR
    uB = dB_KA.plus() * pair.PR + KA.plus() * fB.dPR
    PR = uA - uB
    sPR = max(1.0, op_norm(uA), op_norm(uB))
    # L, from both projections
    vA_right = commutator(dA_KB.plus(), L) + commutator(KB.plus(), fA.dL)
    vB_right = commutator(dB_KA.plus(), L) + commutator(KA.plus(), fB.dL)
    vA_left = commutator(-dA_KB.minus(), L) + commutator(-KB.minus(), fA.dL)
    vB_left = commutator(-dB_KA.minus(), L) + commutator(-KA.minus(), fB.dL)
    right = vA_right - vB_right
    left = vA_left - vB_left
    sL = max(1.0, *(op_norm(v.restrict(-M, N)) for v in (vA_right, vB_right, vA_left, vB_left)))
    dL = _glue_lax(left, right, N, M, 1e-7, f"bracket {A},{B} on L")
    return BracketVector(PL, PR, dL, {"PL": sPL, "PR": sPR, "L": sL})


def _expected(state: AddState, A, B):
    """``(km - nl) * field(m+n-1, k+l-1)``, summed over combinations."""
    total = {}
    for a, ca in _combo(A).items():
        for b, cb in _combo(B).items():
            c = structure_constant(a, b)
            if c == 0:
                continue
            tgt = bracket_target(a, b)
            if tgt is None:
                raise ValueError(f"bracket of {a} and {b} has structure constant {c} but target "
                                 f"({a.m + b.m - 1},{a.l + b.l - 1}) lies outside the flows")
            total[tgt] = total.get(tgt, 0) + c * ca * cb
    return {k: v for k, v in total.items() if v != 0}


def _vector_distance(state, vec: BracketVector, expected: dict) -> dict:
    ring, lim = state.L.ring, state.L.op.limit
    zero = DiffOp.zero(ring, lim)
    if expected:
        f = add_field(state, expected)
        ePL, ePR, eL = f.dPL, f.dPR, f.dL
    else:
        ePL = ePR = eL = zero
    N, M = state.N, state.M
    return {
        "PL": op_distance(vec.PL, ePL) / vec.scale["PL"],
        "PR": op_distance(vec.PR, ePR) / vec.scale["PR"],
        "L": op_distance(vec.L, eL, band=(-M, N - 1)) / vec.scale["L"],
    }


def block_bracket_residual(state: AddState, idxA, idxB, parts: bool = False):
    """Residual of ``[d_A, d_B] = (km - nl) d_{m+n-1, k+l-1}`` by the chain rule.

    Returns the largest of the residuals on ``P_L``, ``P_R`` and ``L`` (each
    relative to the size of the terms being subtracted), or all three with
    ``parts``.
    """
    expected = _expected(state, idxA, idxB)
    vec = chain_bracket(state, idxA, idxB)
    res = _vector_distance(state, vec, expected)
    return res if parts else max(res.values())


def antisymmetry_residual(state: AddState, A, B) -> float:
    v1, v2 = chain_bracket(state, A, B), chain_bracket(state, B, A)
    return max(op_distance(v1.PL, -v2.PL) / v1.scale["PL"],
               op_distance(v1.PR, -v2.PR) / v1.scale["PR"],
               op_distance(v1.L, -v2.L) / v1.scale["L"])


def bilinearity_residual(state: AddState, A, B1, B2, c: float = 0.5) -> float:
    """``[A, B1 + c B2] - [A, B1] - c [A, B2]``."""
    A, B1, B2 = as_index(A), as_index(B1), as_index(B2)
    combo = {B1: 1, B2: c} if B1 != B2 else {B1: 1 + c}
    v = chain_bracket(state, A, combo)
    v1, v2 = chain_bracket(state, A, B1), chain_bracket(state, A, B2)
    out = 0.0
    for part in ("PL", "PR", "L"):
        lhs = getattr(v, part)
        rhs = getattr(v1, part) + c * getattr(v2, part)
        out = max(out, op_distance(lhs, rhs) / max(v1.scale[part], v2.scale[part]))
    return out


# ---------------------------------------------------------------------------
# brackets by composing flows
# ---------------------------------------------------------------------------


def _flow_field(N: int, M: int, tcfg: TimeConfig, idx):
    def field_(pair, s):
        st = AddState.from_pair(pair, N, M, tcfg)
        K = combo_generator(st, idx)
        return -(K.minus() * pair.PL), K.plus() * pair.PR
    return field_


def flow_map(state: AddState, idx, h: float, steps: int = 1) -> DressingPair:
    """The pair moved by time ``h`` along an additional flow (RK4)."""
    return rk4_pair(state.pair, _flow_field(state.N, state.M, state.tcfg, idx), h / steps, steps)


def fd_derivative(state: AddState, idx, target: str, h: float = 1e-4) -> DiffOp:
    """Central difference of ``L``, ``ML`` or ``MR`` along an integrated additional flow."""
    N, M, t = state.N, state.M, state.tcfg
    plus = AddState.from_pair(flow_map(state, idx, h), N, M, t)
    minus = AddState.from_pair(flow_map(state, idx, -h), N, M, t)

    def get(s):
        return {"L": s.L.op, "ML": s.ctx.ML, "MR": s.ctx.MR}[target]

    return (get(plus) - get(minus)) * (1 / (2 * h))


def _compose(state: AddState, A, B, h: float) -> DressingPair:
    N, M, t = state.N, state.M, state.tcfg
    fa, fb = _flow_field(N, M, t, A), _flow_field(N, M, t, B)
    p = rk4_pair(state.pair, fa, h)
    p = rk4_pair(p, fb, h)
    p = rk4_pair(p, fa, -h)
    return rk4_pair(p, fb, -h)


def fd_bracket(state: AddState, A, B, h: float):
    """``(Phi^B_{-h} Phi^A_{-h} Phi^B_h Phi^A_h (P) - P) / h^2`` for ``P_L`` and ``P_R``."""
    p = _compose(state, A, B, h)
    return (p.PL - state.pair.PL) * (1 / h ** 2), (p.PR - state.pair.PR) * (1 / h ** 2)


def block_bracket_fd(state: AddState, idxA, idxB, h: float = 1e-3, parts: bool = False):
    """Composed-flow estimate of the bracket against its closed form on ``P_L`` and ``P_R``."""
    expected = _expected(state, idxA, idxB)
    ring, lim = state.L.ring, state.L.op.limit
    if expected:
        f = add_field(state, expected)
        ePL, ePR = f.dPL, f.dPR
    else:
        ePL = ePR = DiffOp.zero(ring, lim)
    PL, PR = fd_bracket(state, idxA, idxB, h)
    fa, fb = add_field(state, idxA), add_field(state, idxB)
    scale = max(1.0, op_norm(fa.dPL), op_norm(fb.dPL), op_norm(fa.dPR), op_norm(fb.dPR))
    res = {"PL": op_distance(PL, ePL) / scale, "PR": op_distance(PR, ePR) / scale}
    return res if parts else max(res.values())


def richardson(state: AddState, idxA, idxB, h: float = 1e-3) -> dict:
    """FD residuals at ``h`` and ``h/2`` and their ratio (about 2 for a first-order error)."""
    r1 = block_bracket_fd(state, idxA, idxB, h)
    r2 = block_bracket_fd(state, idxA, idxB, h / 2)
    return {"h": h, "residual_h": r1, "residual_h2": r2, "ratio": r1 / r2 if r2 else INF}


# ---------------------------------------------------------------------------
# commutativity with the hierarchy
# ---------------------------------------------------------------------------


def _A_of(B: DiffOp, flow: FlowIndex) -> DiffOp:
    return B.plus() if flow.gamma >= 1 else -B.minus()


def hierarchy_commutativity_residual(state: AddState, idx, flow, parts: bool = False):
    """Chain-rule value of ``[d*_{m,l}, d_{gamma,n}]`` on ``P_L``, ``P_R`` and ``L``.

    The hierarchy derivatives use ``d M = [A, M]`` and ``d L = [A, L]``; the
    additional ones use the closed forms above.  Zero is expected.
    """
    idx = as_index(idx)
    flow = as_flow(flow).validate(state.N, state.M)
    state.check_margin(idx)
    ctx, pair, L = state.ctx, state.pair, state.L.op
    N, M = state.N, state.M
    f = add_field(state, idx)
    K = generator(state, idx)
    B = dressed_B(pair, N, M, flow)
    A = _A_of(B, flow)
    dB = directional_derivative(state, idx, "B", flow=flow)
    # derivatives along the hierarchy flow
    dPL_h, dPR_h = -(B.minus() * pair.PL), B.plus() * pair.PR
    dX_h = commutator(A, ctx.ML) - commutator(A, ctx.MR)
    dL_h = commutator(A, L).restrict(-M, N - 1)
    dK_h = _d_generator(ctx.X, L, dX_h, dL_h, idx.m, idx.l)
    # P_L
    a1 = -(dB.minus() * pair.PL) - B.minus() * f.dPL
    a2 = -(dK_h.minus() * pair.PL) - K.minus() * dPL_h
    # P_R
    b1 = dB.plus() * pair.PR + B.plus() * f.dPR
    b2 = dK_h.plus() * pair.PR + K.plus() * dPR_h
    # L: d*(dL_h) - d_h(dL*)
    dA = dB.plus() if flow.gamma >= 1 else -dB.minus()
    c1 = commutator(dA, L) + commutator(A, f.dL)
    c2 = commutator(dK_h.plus(), L) + commutator(K.plus(), dL_h)
    res = {
        "PL": op_distance(a1, a2) / max(1.0, op_norm(a1), op_norm(a2)),
        "PR": op_distance(b1, b2) / max(1.0, op_norm(b1), op_norm(b2)),
        "L": op_distance(c1, c2, band=(-M, N - 1)) / max(1.0, op_norm(c1.restrict(-M, N - 1)),
                                                            op_norm(c2.restrict(-M, N - 1))),
    }
    return res if parts else max(res.values())


def hierarchy_commutativity_fd(state: AddState, idx, flow, h: float = 1e-3) -> float:
    """Composed-flow estimate of ``[d*, d_flow]`` on ``P_L`` and ``P_R`` (zero expected)."""
    from .oschulman import sato_field
    N, M = state.N, state.M
    fa = _flow_field(N, M, state.tcfg, idx)
    fb = sato_field(N, M, flow)
    p = rk4_pair(state.pair, fa, h)
    p = rk4_pair(p, fb, h)
    p = rk4_pair(p, fa, -h)
    p = rk4_pair(p, fb, -h)
    f = add_field(state, idx)
    scale = max(1.0, op_norm(f.dPL), op_norm(f.dPR))
    return max(op_distance(p.PL, state.pair.PL), op_distance(p.PR, state.pair.PR)) / h ** 2 / scale


# ---------------------------------------------------------------------------
# flows of the symbols
# ---------------------------------------------------------------------------

SYMBOL_FLOWS = ("L0,1", "L1,0", "L1,1", "R0,1", "R1,0", "R1,1")


def _x_over(ring, d: int) -> XPoly:
    """``x / (d epsilon)`` as a coefficient."""
    return ring.x() * (Fraction(1, d) / ring.epsilon)


def _sato(state: AddState, flow):
    B = dressed_B(state.pair, state.N, state.M, flow)
    return -(B.minus() * state.pair.PL), B.plus() * state.pair.PR


def _time_terms(state: AddState, side: str, shift: int, skip_alpha0: bool = False) -> DiffOp:
    """``sum c t_{gamma,n} d_{gamma, n+shift} P`` over the supported times."""
    ring, lim = state.L.ring, state.L.op.limit
    out = DiffOp.zero(ring, lim)
    N, M = state.N, state.M
    for flow, t in state.tcfg.values.items():
        n = flow.n + shift
        if n < 0:
            continue
        w = upper_weight(N, flow) if flow.gamma >= 1 else lower_weight(M, flow)
        d = _sato(state, FlowIndex(flow.gamma, n))
        out = out + (d[0] if side == "L" else d[1]) * (float(w) * float(t))
    return out


def _z_derivative(P: DiffOp, power: int, coeff, side: str) -> DiffOp:
    """Operator whose symbol is ``coeff * z^power * dP/dz``.

    On the left the symbol is ``sum w_j z^{-j}``, on the right ``sum w~_j z^j``;
    exponent ``e`` of ``Lambda`` corresponds to ``z^e`` in both.
    """
    out = {}
    for e, c in P.coeffs.items():
        if e == 0:
            continue
        out[e + power - 1] = c * (coeff * e)
    lo, hi = P.reliable
    sup = P.support
    return DiffOp(P.ring, out, (sup[0] + power - 1, sup[1] + power - 1),
                  (lo + power - 1, hi + power - 1), P.limit)


def _times_z(P: DiffOp, power: int, coeff) -> DiffOp:
    """Symbol multiplied by ``coeff * z^power`` (``coeff`` a scalar or a function of x)."""
    return (P * DiffOp.monomial(P.ring, power, limit=P.limit)) * coeff


def symbol_rhs(state: AddState, which: str) -> DiffOp:
    """Closed-form right-hand side ``A* P`` as an operator (coefficients = symbol coefficients)."""
    ring, lim = state.L.ring, state.L.op.limit
    N, M = state.N, state.M
    PL, PR = state.pair.PL, state.pair.PR
    tc = state.tcfg
    if which == "L0,1":
        return _sato(state, FlowIndex(0, 0))[0]
    if which == "R0,1":
        return _sato(state, FlowIndex(1, 0))[1]
    if which == "L1,0":
        out = _z_derivative(PL, 1 - N, Fraction(-1, N), "L")
        out = out - _times_z(PL, -N, _x_over(ring, N))
        for a in range(2, N + 1):
            t = tc.get(a, 0)
            if t:
                out = out - _times_z(PL, 1 - a, float(t) * float(1 - Fraction(a - 1, N)))
        return out + _time_terms(state, "L", -1)
    if which == "L1,1":
        return _z_derivative(PL, 1, Fraction(-1, N), "L") + _time_terms(state, "L", 0)
    if which == "R1,0":
        out = _z_derivative(PR, M + 1, Fraction(1, M), "R")
        out = out + _times_z(PR, M, _x_over(ring, M))
        t10 = tc.get(1, 0)
        if t10:
            out = out + float(t10) * PR
        for b in range(-M + 1, 1):
            t = tc.get(b, 0)
            if t:
                out = out + _times_z(PR, -b, float(t) * float(1 + Fraction(b, M)))
        return out + _time_terms(state, "R", -1)
    if which == "R1,1":
        out = _z_derivative(PR, 1, Fraction(1, M), "R")
        out = out + _times_z(PR, 0, _x_over(ring, M) + _x_over(ring, N))
        return out + _time_terms(state, "R", 0)
    raise ValueError(f"unsupported symbol flow {which!r}; choose from {SYMBOL_FLOWS}")


def symbol_flow_check(state: AddState, which: str) -> float:
    """Operator-level additional flow of ``P_L`` or ``P_R`` against its closed symbol formula."""
    if which not in SYMBOL_FLOWS:
        raise ValueError(f"unsupported symbol flow {which!r}; choose from {SYMBOL_FLOWS}")
    idx = AddFlowIndex(int(which[1]), int(which[3]))
    f = add_field(state, idx)
    lhs = f.dPL if which[0] == "L" else f.dPR
    rhs = symbol_rhs(state, which)
    return op_distance(lhs, rhs) / max(1.0, op_norm(lhs))


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def witt_residuals(state: AddState, labels=(-1, 0, 1), family: str = "m") -> dict:
    """``[d_{a,0}, d_{b,0}] = (a - b) d_{a+b,0}`` (family ``"m"``) or the ``d_{0,a}`` analogue.

    The second family obeys ``[d_{0,a}, d_{0,b}] = (b - a) d_{0,a+b}``.  Pairs
    whose evaluation is impossible are reported with their error message.
    """
    out = {}
    for a in labels:
        for b in labels:
            if a >= b:
                continue
            A = AddFlowIndex.from_block(a, 0) if family == "m" else AddFlowIndex.from_block(0, a)
            B = AddFlowIndex.from_block(b, 0) if family == "m" else AddFlowIndex.from_block(0, b)
            try:
                out[(a, b)] = block_bracket_residual(state, A, B)
            except (BandExhausted, ValueError) as e:
                out[(a, b)] = str(e)
    return out


def bracket_scan(state: AddState, generators=GENERATORS, tol: float = 1e-7) -> list:
    """One record per ordered generator pair: structure constant, residual and status."""
    rows = []
    for a in generators:
        for b in generators:
            t0 = time.perf_counter()
            row = {"A": str(a), "B": str(b), "constant": structure_constant(a, b),
                   "target": str(bracket_target(a, b))}
            try:
                r = block_bracket_residual(state, a, b)
                row.update(residual=r, status="pass" if r <= tol else "fail")
            except BandExhausted as e:
                row.update(residual=None, status="band-exhausted", detail=str(e))
            except ValueError as e:
                row.update(residual=None, status="out-of-range", detail=str(e))
            row["seconds"] = time.perf_counter() - t0
            rows.append(row)
    return rows


def summary_table(rows: list) -> str:
    lines = [f"{'A':>6} {'B':>6} {'km-nl':>6} {'residual':>10}  status"]
    for r in rows:
        res = "-" if r["residual"] is None else f"{r['residual']:.2e}"
        lines.append(f"{r['A']:>6} {r['B']:>6} {r['constant']:>6} {res:>10}  {r['status']}")
    return "\n".join(lines) + "\n"


def scan_records(rows: list, params: dict, tol: float = 1e-7) -> list:
    out = []
    for r in rows:
        p = dict(params, A=r["A"], B=r["B"], constant=r["constant"])
        res = r["residual"] if r["residual"] is not None else float("nan")
        out.append(residual_record("block-bracket", p, res, tol, r["seconds"]))
    return out
