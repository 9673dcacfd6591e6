"""Truncated Laurent series in the shift operator with reliable-band tracking.

An operator ``A = sum_k a_k Lambda^k`` is stored as a sparse map of
coefficients together with

``support``
    bounds on the exponents of the *untruncated* operator (``-inf``/``+inf``
    for infinite tails);
``reliable``
    the exponent range on which the stored coefficients equal the
    untruncated ones.  A side on which the support is finite and fully
    known is recorded as infinite.

Only reliable coefficients are stored: anything outside the band is
meaningless and never read, so it is not computed in the first place.

The band of a product follows from one observation: ``(AB)_k`` is a sum over
``i + j = k`` and is exact when every pair contributing to it uses only exact
coefficients.  An unreliable coefficient of ``A`` below ``rA_lo`` can meet a
coefficient of ``B`` no higher than ``sB_hi``, so the product is safe from
below once ``k >= rA_lo + sB_hi``; the other three sides are symmetric.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import BandExhausted, GridMismatch

INF = math.inf
DEFAULT_LIMIT = 256


def _clean(v):
    if isinstance(v, float) and math.isfinite(v):
        return int(v)
    return v


def _scalar_like(c) -> bool:
    return isinstance(c, (int, float, complex, np.number)) or type(c).__name__ == "Fraction"


class DiffOp:
    """An immutable truncated difference operator."""

    __slots__ = ("coeffs", "ring", "support", "reliable", "limit")

    def __init__(self, ring, coeffs: Mapping[int, object], support=None, reliable=None,
                 limit: int = DEFAULT_LIMIT):
        coeffs = dict(coeffs)
        if support is None:
            support = (min(coeffs), max(coeffs)) if coeffs else (INF, -INF)
        s_lo, s_hi = support
        if reliable is None:
            reliable = (-INF, INF)
        r_lo, r_hi = reliable
        if s_lo > s_hi:
            coeffs, r_lo, r_hi = {}, -INF, INF
        else:
            if s_lo < -limit:
                r_lo = max(r_lo, -limit)
            if s_hi > limit:
                r_hi = min(r_hi, limit)
            if r_lo <= s_lo:
                r_lo = -INF
            if r_hi >= s_hi:
                r_hi = INF
            lo, hi = max(s_lo, r_lo), min(s_hi, r_hi)
            coeffs = {k: c for k, c in coeffs.items() if lo <= k <= hi}
        self.ring = ring
        self.coeffs = coeffs
        self.support = (_clean(s_lo), _clean(s_hi))
        self.reliable = (_clean(r_lo), _clean(r_hi))
        self.limit = limit

    # construction ---------------------------------------------------------
    @classmethod
    def identity(cls, ring, limit=DEFAULT_LIMIT):
        return cls(ring, {0: ring.one()}, limit=limit)

    @classmethod
    def zero(cls, ring, limit=DEFAULT_LIMIT):
        return cls(ring, {}, limit=limit)

    @classmethod
    def monomial(cls, ring, k: int, coeff=None, limit=DEFAULT_LIMIT):
        """``coeff * Lambda^k`` (coefficient defaults to 1)."""
        c = ring.one() if coeff is None else (ring.const(coeff) if _scalar_like(coeff) else coeff)
        return cls(ring, {k: c}, limit=limit)

    @classmethod
    def banded(cls, ring, coeffs: Mapping[int, object], limit=DEFAULT_LIMIT):
        """Exact operator with finitely many terms, scalars promoted to constants."""
        cs = {k: (ring.const(c) if _scalar_like(c) else c) for k, c in coeffs.items()}
        return cls(ring, cs, limit=limit)

    # properties -----------------------------------------------------------
    @property
    def window(self):
        s_lo, s_hi = self.support
        return (max(s_lo, -self.limit), min(s_hi, self.limit))

    @property
    def band(self):
        """Reliable band intersected with the support (the trustworthy exponents)."""
        return (max(self.reliable[0], self.support[0]), min(self.reliable[1], self.support[1]))

    @property
    def starved(self) -> bool:
        lo, hi = self.reliable
        return lo > hi

    @property
    def is_zero_op(self) -> bool:
        return self.support[0] > self.support[1]

    def covers(self, lo, hi) -> bool:
        return self.reliable[0] <= lo and hi <= self.reliable[1]

    def require(self, lo, hi, what="operator"):
        if not self.covers(lo, hi):
            raise BandExhausted(f"{what}: reliable band {self.reliable} does not cover [{lo}, {hi}]",
                                required=(lo, hi))
        return self

    def coeff(self, k: int):
        """Coefficient of ``Lambda^k``; raises outside the reliable band."""
        if not self.reliable[0] <= k <= self.reliable[1]:
            raise BandExhausted(f"exponent {k} outside reliable band {self.reliable}")
        c = self.coeffs.get(k)
        return self.ring.zero() if c is None else c

    def __repr__(self):
        return (f"DiffOp(terms={sorted(self.coeffs)}, support={self.support}, "
                f"reliable={self.reliable})")

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "DiffOp"):
        if other.ring != self.ring:
            raise GridMismatch("operators over different coefficient rings")

    def __add__(self, other):
        return op_add(self, other)

    def __sub__(self, other):
        return op_add(self, -other)

    def __neg__(self):
        return op_scale(self, -1)

    def __mul__(self, other):
        if isinstance(other, DiffOp):
            return op_mul(self, other)
        return op_scale(self, other)

    def __rmul__(self, other):
        return op_scale(self, other)

    def __pow__(self, n: int):
        return op_power(self, n)

    def plus(self):
        return project(self, "+")

    def minus(self):
        return project(self, "-")

    def restrict(self, lo, hi) -> "DiffOp":
        """The exact operator obtained by discarding exponents outside ``[lo, hi]``."""
        s_lo, s_hi = max(self.support[0], lo), min(self.support[1], hi)
        return DiffOp(self.ring, {k: c for k, c in self.coeffs.items() if lo <= k <= hi},
                      (s_lo, s_hi), self.reliable, self.limit)

    def with_limit(self, limit: int) -> "DiffOp":
        return DiffOp(self.ring, self.coeffs, self.support, self.reliable, limit)

    def map_coeffs(self, fn: Callable) -> "DiffOp":
        return DiffOp(self.ring, {k: fn(c) for k, c in self.coeffs.items()}, self.support,
                      self.reliable, self.limit)


def op_add(A: DiffOp, B: DiffOp) -> DiffOp:
    A._check(B)
    out = dict(A.coeffs)
    for k, c in B.coeffs.items():
        out[k] = out[k] + c if k in out else c
    if A.is_zero_op:
        support = B.support
    elif B.is_zero_op:
        support = A.support
    else:
        support = (min(A.support[0], B.support[0]), max(A.support[1], B.support[1]))
    reliable = (max(A.reliable[0], B.reliable[0]), min(A.reliable[1], B.reliable[1]))
    return DiffOp(A.ring, out, support, reliable, min(A.limit, B.limit))


def op_scale(A: DiffOp, c) -> DiffOp:
    """Left multiplication by a scalar or by a coefficient function."""
    if _scalar_like(c):
        if c == 0:
            return DiffOp.zero(A.ring, A.limit)
        return DiffOp(A.ring, {k: v * c for k, v in A.coeffs.items()}, A.support, A.reliable, A.limit)
    return DiffOp(A.ring, {k: c * v for k, v in A.coeffs.items()}, A.support, A.reliable, A.limit)


def product_band(sA, rA, sB, rB):
    """Reliable exponent range of ``AB`` from supports and reliable bands."""
    lo = max(-INF if sA[0] >= rA[0] else rA[0] + sB[1],
             -INF if sB[0] >= rB[0] else rB[0] + sA[1])
    hi = min(INF if sA[1] <= rA[1] else rA[1] + sB[0],
             INF if sB[1] <= rB[1] else rB[1] + sA[0])
    # inf - inf can only arise from an already-starved side
    if isinstance(lo, float) and math.isnan(lo):
        lo = INF
    if isinstance(hi, float) and math.isnan(hi):
        hi = -INF
    return lo, hi


def op_mul(A: DiffOp, B: DiffOp) -> DiffOp:
    """``(AB)_k = sum_{i+j=k} a_i * shift(b_j, i)`` on the reliable band."""
    A._check(B)
    limit = min(A.limit, B.limit)
    if A.is_zero_op or B.is_zero_op:
        return DiffOp.zero(A.ring, limit)
    support = (A.support[0] + B.support[0], A.support[1] + B.support[1])
    rel = product_band(A.support, A.reliable, B.support, B.reliable)
    lo = max(rel[0], support[0], -limit)
    hi = min(rel[1], support[1], limit)
    out: dict = {}
    if lo <= hi:
        bkeys = sorted(B.coeffs)
        for i in sorted(A.coeffs):
            a = A.coeffs[i]
            for j in bkeys:
                k = i + j
                if k < lo:
                    continue
                if k > hi:
                    break
                term = a * B.coeffs[j].shift(i)
                out[k] = out[k] + term if k in out else term
    return DiffOp(A.ring, out, support, rel, limit)


def commutator(A: DiffOp, B: DiffOp) -> DiffOp:
    return op_mul(A, B) - op_mul(B, A)


def project(A: DiffOp, sign: str) -> DiffOp:
    """``A_+`` (exponents >= 0) or ``A_-`` (exponents < 0)."""
    if sign == "+":
        lo, hi = 0, INF
    elif sign == "-":
        lo, hi = -INF, -1
    else:
        raise ValueError("sign must be '+' or '-'")
    return A.restrict(lo, hi)


def op_power(A: DiffOp, n: int) -> DiffOp:
    if n < 0:
        raise ValueError("negative powers are not defined for truncated operators")
    result = DiffOp.identity(A.ring, A.limit)
    base = A
    first = True
    while n:
        if n & 1:
            result = base if first else op_mul(result, base)
            first = False
        n >>= 1
        if n:
            base = op_mul(base, base)
    return result


def op_norm(A: DiffOp) -> float:
    """Largest coefficient norm over the reliable band."""
    return max((c.norm() for c in A.coeffs.values()), default=0.0)


def _common_band(A: DiffOp, B: DiffOp):
    lo = max(A.reliable[0], B.reliable[0])
    hi = min(A.reliable[1], B.reliable[1])
    if lo > hi:
        raise BandExhausted(f"reliable bands {A.reliable} and {B.reliable} are disjoint")
    return lo, hi


def op_distance(A: DiffOp, B: DiffOp, band=None) -> float:
    """Largest coefficient difference on the common reliable band (optionally narrowed)."""
    lo, hi = _common_band(A, B)
    if band is not None:
        lo, hi = max(lo, band[0]), min(hi, band[1])
    zero = A.ring.zero()
    worst = 0.0
    for k in set(A.coeffs) | set(B.coeffs):
        if lo <= k <= hi:
            d = (A.coeffs.get(k, zero) - B.coeffs.get(k, zero)).norm()
            worst = max(worst, d)
    return worst


def op_equal(A: DiffOp, B: DiffOp, tol: float = 0.0, strict: bool = False) -> bool:
    """Compare on the common reliable band; ``strict`` also requires equal bands."""
    if strict and (A.reliable != B.reliable or A.support != B.support):
        return False
    return op_distance(A, B) <= tol


def glue(lower_exact: DiffOp, upper_exact: DiffOp, tol: float = INF) -> DiffOp:
    """Merge two truncations of one exact operator.

    Each argument must represent the same untruncated operator; the result is
    reliable wherever either one is, and its support is the intersection of
    the declared supports.  ``tol`` bounds the disagreement on the overlap.
    """
    lower_exact._check(upper_exact)
    s = (max(lower_exact.support[0], upper_exact.support[0]),
         min(lower_exact.support[1], upper_exact.support[1]))
    ra, rb = lower_exact.reliable, upper_exact.reliable
    if max(ra[0], rb[0]) <= min(ra[1], rb[1]) and math.isfinite(tol):
        d = op_distance(lower_exact, upper_exact)
        if d > tol:
            raise ValueError(f"glued operators disagree by {d:.3e} on their overlap")
    rel_lo, rel_hi = min(ra[0], rb[0]), max(ra[1], rb[1])
    if ra[1] + 1 < rb[0] or rb[1] + 1 < ra[0]:
        # a gap between the two bands: only the band containing more is kept
        rel_lo, rel_hi = ra if ra[1] - ra[0] >= rb[1] - rb[0] else rb
    out = {}
    for src, r in ((upper_exact, rb), (lower_exact, ra)):
        for k, c in src.coeffs.items():
            if r[0] <= k <= r[1] and rel_lo <= k <= rel_hi:
                out[k] = c
    return DiffOp(lower_exact.ring, out, s, (rel_lo, rel_hi), min(lower_exact.limit, upper_exact.limit))


def apply(A: DiffOp, f):
    """``(Af)(x) = sum_k a_k(x) f(x + k epsilon)`` over the stored coefficients."""
    out = None
    for k in sorted(A.coeffs):
        t = A.coeffs[k] * f.shift(k)
        out = t if out is None else out + t
    if out is None:
        return f * 0
    if getattr(out, "empty", False):
        raise BandExhausted("operator application leaves no valid sites")
    return out


def dump(A: DiffOp, stream=None) -> str:
    """Plain-text table: a header line per exponent followed by its values."""
    lines = [f"# support {A.support} reliable {A.reliable}"]
    for k in sorted(A.coeffs):
        c = A.coeffs[k]
        lines.append(f"k={k}")
        vals = getattr(c, "values", None)
        if vals is not None:
            lo, hi = c.valid
            for s in range(lo, hi + 1):
                v = vals[s]
                lines.append(f"  {s} {v.real:.17g} {v.imag:.17g}")
        else:
            lines.append(f"  {c!r}")
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text
