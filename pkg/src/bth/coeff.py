"""Coefficient rings for difference operators.

Three families of coefficients are provided, all sharing one small protocol
(``shift``, ``+``, ``-``, ``*``, ``norm``, ``ring``):

* :class:`LatticeFunction` -- complex samples on a :class:`LatticeGrid`, either
  periodic or windowed (windowed functions carry the interval of sites where
  they are known).
* :class:`XPoly` -- a dense polynomial in ``x`` alone, with either exact
  rational or floating coefficients.  Used for dressing data that grows
  polynomially in ``x`` and therefore has no periodic realization.
* :class:`PolySymbol` -- an exact sparse polynomial in ``x`` and any number of
  time symbols.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import CompatibilityError, DomainError, GridMismatch, SingularOperator

ZERO_DIVISION_THRESHOLD = 1e-300
CANCEL_ULPS = 64

Scalar = (int, float, complex, Fraction, np.number)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(value).limit_denominator(10**12)


# ---------------------------------------------------------------------------
# lattice backend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeGrid:
    """A one-dimensional lattice of ``size`` sites with spacing ``epsilon``.

    Site ``s`` sits at ``x = origin + s * epsilon``.  In periodic mode the
    site index is taken modulo ``size``.
    """

    epsilon: Fraction = Fraction(1)
    size: int = 31
    mode: str = "periodic"
    origin: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _as_fraction(self.epsilon))
        object.__setattr__(self, "origin", _as_fraction(self.origin))
        if self.size < 1:
            raise ValueError("lattice needs at least one site")
        if self.epsilon == 0:
            raise ValueError("lattice spacing must be nonzero")
        if self.mode not in ("periodic", "windowed"):
            raise ValueError(f"unknown lattice mode {self.mode!r}")

    @property
    def periodic(self) -> bool:
        return self.mode == "periodic"

    @property
    def full(self) -> tuple[int, int]:
        return (0, self.size - 1)

    def coordinates(self) -> np.ndarray:
        return float(self.origin) + float(self.epsilon) * np.arange(self.size)

    def x(self) -> "LatticeFunction":
        return LatticeFunction(self, self.coordinates())

    def const(self, value) -> "LatticeFunction":
        return LatticeFunction(self, np.full(self.size, complex(value)))

    def zero(self) -> "LatticeFunction":
        return self.const(0)

    def one(self) -> "LatticeFunction":
        return self.const(1)

    def function(self, values, valid=None) -> "LatticeFunction":
        return LatticeFunction(self, values, valid)

    def delta(self, site: int) -> "LatticeFunction":
        v = np.zeros(self.size)
        v[site % self.size] = 1.0
        return LatticeFunction(self, v)

    def random_smooth(self, rng: np.random.Generator, modes: int = 3, amplitude: float = 0.2,
                      mean: float = 0.0) -> "LatticeFunction":
        """Real trigonometric polynomial with ``modes`` harmonics and zero-mean fluctuation."""
        theta = 2 * np.pi * np.arange(self.size) / self.size
        v = np.full(self.size, float(mean))
        for k in range(1, modes + 1):
            a, b = rng.uniform(-1, 1, size=2)
            v += amplitude * (a * np.cos(k * theta) + b * np.sin(k * theta)) / k
        return LatticeFunction(self, v)


class LatticeFunction:
    """Complex samples of a function of ``x`` on a lattice.

    ``valid`` is the inclusive site interval on which the samples are
    meaningful; it is always the whole grid for periodic lattices.  An empty
    interval is represented by ``lo > hi``.
    """

    __slots__ = ("grid", "values", "valid")

    def __init__(self, grid: LatticeGrid, values, valid=None):
        arr = np.array(values, dtype=complex).reshape(-1)
        if arr.shape[0] != grid.size:
            raise ValueError(f"expected {grid.size} samples, got {arr.shape[0]}")
        if grid.periodic or valid is None:
            valid = grid.full
        lo, hi = int(valid[0]), int(valid[1])
        lo, hi = max(lo, 0), min(hi, grid.size - 1)
        if lo <= hi and not np.all(np.isfinite(arr[lo:hi + 1])):
            raise DomainError("lattice function has non-finite samples")
        if lo <= hi:
            # samples outside the valid interval are never read; keep them finite
            arr[:lo] = 0
            arr[hi + 1:] = 0
        else:
            arr[:] = 0
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr
        self.valid = (lo, hi)

    # protocol -----------------------------------------------------------
    @property
    def ring(self) -> LatticeGrid:
        return self.grid

    @property
    def empty(self) -> bool:
        return self.valid[0] > self.valid[1]

    def _view(self) -> np.ndarray:
        lo, hi = self.valid
        return self.values[lo:hi + 1]

    def __repr__(self):
        return f"LatticeFunction(P={self.grid.size}, valid={self.valid})"

    def at(self, site: int) -> complex:
        if self.grid.periodic:
            return complex(self.values[site % self.grid.size])
        lo, hi = self.valid
        if not lo <= site <= hi:
            raise IndexError(f"site {site} outside valid interval {self.valid}")
        return complex(self.values[site])

    def shift(self, k: int) -> "LatticeFunction":
        return shift(self, k)

    def norm(self) -> float:
        v = self._view()
        return float(np.max(np.abs(v))) if v.size else 0.0

    def is_constant(self, tol: float = 0.0) -> bool:
        v = self._view()
        return v.size == 0 or float(np.max(np.abs(v - v[0]))) <= tol

    def constant_value(self) -> complex:
        return complex(self._view()[0]) if not self.empty else 0j

    def real(self) -> np.ndarray:
        return self._view().real.copy()

    def _coerce(self, other):
        if isinstance(other, LatticeFunction):
            if other.grid != self.grid:
                raise GridMismatch("lattice functions live on different grids")
            return other
        if isinstance(other, Scalar):
            return LatticeFunction(self.grid, np.full(self.grid.size, complex(other)))
        return NotImplemented

    def __add__(self, other):
        return pointwise(self, other, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return pointwise(self, other, "sub")

    def __rsub__(self, other):
        return pointwise(self._coerce(other), self, "sub")

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return LatticeFunction(self.grid, self.values * complex(other), self.valid)
        return pointwise(self, other, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return pointwise(self, other, "div")

    def __rtruediv__(self, other):
        return pointwise(self._coerce(other), self, "div")

    def __neg__(self):
        return LatticeFunction(self.grid, -self.values, self.valid)

    def conj(self):
        return LatticeFunction(self.grid, np.conj(self.values), self.valid)

    def exp(self):
        return exp_log(self, "exp")

    def log(self):
        return exp_log(self, "log")

    def reciprocal(self):
        return pointwise(1, self, "div")

    def mean(self) -> complex:
        return complex(np.mean(self._view()))


def _intersect(a, b):
    return (max(a[0], b[0]), min(a[1], b[1]))


def shift(f, k: int):
    """Return ``x -> f(x + k*epsilon)``."""
    if isinstance(f, (XPoly, PolySymbol)):
        return f.shift(k)
    g = f.grid
    if k == 0:
        return f
    vals = np.roll(f.values, -k)
    if g.periodic:
        return LatticeFunction(g, vals)
    lo, hi = f.valid
    return LatticeFunction(g, vals, (max(lo - k, 0), min(hi - k, g.size - 1)))


def pointwise(f, g, op: str, threshold: float = ZERO_DIVISION_THRESHOLD) -> LatticeFunction:
    """Sitewise ``add``, ``sub``, ``mul`` or ``div``; windowed validity intersects."""
    if not isinstance(f, LatticeFunction):
        f = g._coerce(f)
    g = f._coerce(g)
    if g is NotImplemented:
        raise TypeError("unsupported operand")
    valid = _intersect(f.valid, g.valid)
    a, b = f.values, g.values
    if op == "add":
        out = a + b
    elif op == "sub":
        out = a - b
    elif op == "mul":
        out = a * b
    elif op == "div":
        lo, hi = valid
        if lo <= hi and np.any(np.abs(b[lo:hi + 1]) < threshold):
            raise DomainError("division by a vanishing lattice function")
        safe = np.where(np.abs(b) < threshold, 1.0, b)
        out = a / safe
    else:
        raise ValueError(f"unknown pointwise op {op!r}")
    return LatticeFunction(f.grid, out, valid)


def exp_log(f: LatticeFunction, which: str) -> LatticeFunction:
    """Sitewise exponential or (real, positive-branch) logarithm."""
    if which == "exp":
        return LatticeFunction(f.grid, np.exp(f.values), f.valid)
    if which == "log":
        v = f._view()
        if v.size and (np.any(np.abs(v.imag) > 1e-14 * np.maximum(1, np.abs(v.real)))
                       or np.any(v.real <= 0)):
            raise DomainError("log needs strictly positive real values")
        out = np.zeros(f.grid.size, dtype=complex)
        lo, hi = f.valid
        out[lo:hi + 1] = np.log(v.real)
        return LatticeFunction(f.grid, out, f.valid)
    raise ValueError(f"unknown elementwise function {which!r}")


def shift_sum_eigenvalues(terms: Sequence[tuple[complex, int]], size: int) -> np.ndarray:
    """Fourier eigenvalues sum_j c_j w^(s_j k) of a constant-coefficient shift sum."""
    k = np.arange(size)
    lam = np.zeros(size, dtype=complex)
    for c, s in terms:
        lam += complex(c) * np.exp(2j * np.pi * s * k / size)
    return lam


def _apply_shift_sum(terms, g):
    out = None
    for c, s in terms:
        t = shift(g, s) * c
        out = t if out is None else out + t
    return out


def invert_shift_sum(terms: Sequence[tuple[complex, int]], f: LatticeFunction,
                     tol: float = 1e-12) -> LatticeFunction:
    """Solve ``sum_j c_j shift(g, s_j) = f`` for ``g`` on a periodic grid.

    Every Fourier eigenvalue is scanned before solving; a vanishing one raises
    :class:`SingularOperator` naming the mode.
    """
    grid = f.grid
    if not grid.periodic:
        raise SingularOperator("shift-sum inversion is only available on periodic grids")
    lam = shift_sum_eigenvalues(terms, grid.size)
    scale = max(1.0, sum(abs(complex(c)) for c, _ in terms))
    bad = np.flatnonzero(np.abs(lam) <= tol * scale)
    if bad.size:
        raise SingularOperator(f"shift sum is singular at Fourier mode k={int(bad[0])}", int(bad[0]))
    ghat = np.fft.fft(f.values) / lam
    return LatticeFunction(grid, np.fft.ifft(ghat))


def solve_shift_sum(terms, f, singular: str = "error", tol: float = 1e-9):
    """Solve ``sum_j c_j(x) shift(g, s_j) = f`` on the backend of ``f``.

    ``terms`` holds ``(coefficient, shift)`` pairs; coefficients may be
    scalars or coefficient-ring elements.  With ``singular='gauge'`` a
    singular operator is accepted when ``f`` lies in its range; the returned
    solution then has no component along the kernel (zero lattice mean for
    constant-coefficient periodic operators, zero constant term for
    polynomials).  Otherwise a solvability failure raises.
    """
    if isinstance(f, XPoly):
        return _poly_solve_shift_sum(terms, f, singular)
    grid = f.grid
    if not grid.periodic:
        raise SingularOperator("shift-sum solves are only available on periodic grids")
    consts = []
    for c, s in terms:
        if isinstance(c, LatticeFunction):
            if not c.is_constant(1e-15 * max(1.0, c.norm())):
                consts = None
                break
            c = c.constant_value()
        consts.append((complex(c), s))
    if consts is not None:
        lam = shift_sum_eigenvalues(consts, grid.size)
        scale = max(1.0, sum(abs(c) for c, _ in consts))
        bad = np.abs(lam) <= 1e-12 * scale
        if not bad.any():
            return LatticeFunction(grid, np.fft.ifft(np.fft.fft(f.values) / lam))
        if singular != "gauge":
            k = int(np.flatnonzero(bad)[0])
            raise SingularOperator(f"shift sum is singular at Fourier mode k={k}", k)
        fhat = np.fft.fft(f.values)
        defect = np.max(np.abs(fhat[bad])) / grid.size
        if defect > tol * max(1.0, f.norm()):
            raise CompatibilityError(f"right-hand side has a component {defect:.3e} along a singular mode",
                                     defect=float(defect))
        ghat = np.where(bad, 0, fhat / np.where(bad, 1, lam))
        return LatticeFunction(grid, np.fft.ifft(ghat))
    # variable coefficients: dense solve
    P = grid.size
    A = np.zeros((P, P), dtype=complex)
    rows = np.arange(P)
    for c, s in terms:
        cv = c.values if isinstance(c, LatticeFunction) else np.full(P, complex(c))
        A[rows, (rows + s) % P] += cv
    if singular != "gauge":
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularOperator(f"variable shift sum is singular (condition {cond:.2e})")
        return LatticeFunction(grid, np.linalg.solve(A, f.values))
    g, *_ = np.linalg.lstsq(A, f.values, rcond=1e-10)
    defect = float(np.max(np.abs(A @ g - f.values)))
    if defect > tol * max(1.0, f.norm()):
        raise CompatibilityError(f"right-hand side is outside the range (defect {defect:.3e})",
                                 defect=defect)
    return LatticeFunction(grid, g)


# ---------------------------------------------------------------------------
# dense univariate polynomials in x
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyRing:
    """Ring of polynomials in ``x`` with shift spacing ``epsilon``.

    ``exact=True`` stores rational coefficients; otherwise float64.
    """

    epsilon: Fraction = Fraction(1)
    exact: bool = False

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _as_fraction(self.epsilon))

    @property
    def dtype(self):
        return object if self.exact else float

    def coerce_scalar(self, c):
        if self.exact:
            return _as_fraction(c)
        if isinstance(c, complex):
            if c.imag:
                raise TypeError("float polynomial ring is real")
            c = c.real
        return float(c)

    def const(self, c) -> "XPoly":
        return XPoly(self, [self.coerce_scalar(c)])

    def zero(self) -> "XPoly":
        return XPoly(self, [])

    def one(self) -> "XPoly":
        return self.const(1)

    def x(self) -> "XPoly":
        return XPoly(self, [0, 1])

    def poly(self, coeffs) -> "XPoly":
        return XPoly(self, coeffs)

    def to_float(self) -> "PolyRing":
        return PolyRing(self.epsilon, False)


@lru_cache(maxsize=4096)
def _taylor_matrix(n: int, step, exact: bool):
    """Matrix T with (c @ T) the coefficients of p(x + step) for deg p < n."""
    if exact:
        T = np.empty((n, n), dtype=object)
        T[:] = Fraction(0)
        for d in range(n):
            for j in range(d + 1):
                T[d, j] = math.comb(d, j) * step ** (d - j)
        return T
    T = np.zeros((n, n))
    s = float(step)
    for d in range(n):
        for j in range(d + 1):
            T[d, j] = math.comb(d, j) * s ** (d - j)
    T.setflags(write=False)
    return T


class XPoly:
    """``base^(x/eps) * sum_d c[d] x^d`` in the lattice coordinate.

    ``base`` is 1 for plain polynomials.  A constant ``u_{-M} = c`` forces the
    right dressing to carry ``c^(x/(M eps))``; since every operator built from
    both dressings pairs that factor with its inverse, the class stays closed
    under the products that occur.  Sums of terms with different bases are
    rejected.
    """

    __slots__ = ("ring", "c", "base")

    def __init__(self, ring: PolyRing, coeffs, base=1):
        if ring.exact:
            arr = np.array([_as_fraction(v) for v in coeffs], dtype=object)
        else:
            arr = np.asarray(coeffs, dtype=float).copy()
            if arr.size and not np.all(np.isfinite(arr)):
                raise DomainError("polynomial has non-finite coefficients")
        n = arr.shape[0]
        while n and arr[n - 1] == 0:
            n -= 1
        self.ring = ring
        self.c = arr[:n]
        self.base = ring.coerce_scalar(base) if n else ring.coerce_scalar(1)
        if self.base == 0:
            raise DomainError("exponential base must be nonzero")

    @property
    def degree(self) -> int:
        return self.c.shape[0] - 1

    def __repr__(self):
        tail = "" if self.base == 1 else f", base={self.base}"
        return f"XPoly({list(self.c)}{tail})"

    def _wrap(self, arr, base=None):
        return XPoly(self.ring, arr, self.base if base is None else base)

    def shift(self, k: int) -> "XPoly":
        n = self.c.shape[0]
        if k == 0 or n == 0:
            return self
        c = self.c if self.base == 1 else self.c * self.base ** k
        if n == 1:
            return self._wrap(c)
        step = k * self.ring.epsilon
        return self._wrap(c @ _taylor_matrix(n, step if self.ring.exact else float(step),
                                             self.ring.exact))

    def _coerce(self, other):
        if isinstance(other, XPoly):
            if other.ring != self.ring:
                raise GridMismatch("polynomials over different rings")
            return other
        if isinstance(other, Scalar):
            return self.ring.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not other.c.shape[0]:
            return self
        if not self.c.shape[0]:
            return other
        if other.base != self.base:
            raise DomainError("cannot add terms with different exponential bases")
        a, b = self.c, other.c
        if a.shape[0] < b.shape[0]:
            a, b = b, a
        out = a.copy()
        m = b.shape[0]
        out[:m] = out[:m] + b
        if not self.ring.exact and m == a.shape[0]:
            # a cancelled leading term is rounding noise; left in place it
            # inflates the degree and is amplified by every later shift
            noise = CANCEL_ULPS * np.finfo(float).eps * (np.abs(a[:m]) + np.abs(b))
            n = m
            while n and abs(out[n - 1]) <= noise[n - 1]:
                n -= 1
            out = out[:n]
        return self._wrap(out)

    __radd__ = __add__

    def __neg__(self):
        return self._wrap(-self.c)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return self._wrap(self.c * self.ring.coerce_scalar(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not self.c.shape[0] or not other.c.shape[0]:
            return self.ring.zero()
        return self._wrap(np.convolve(self.c, other.c), self.base * other.base)

    __rmul__ = __mul__

    def is_constant(self, tol: float = 0.0) -> bool:
        return self.degree <= 0 and self.base == 1

    def constant_value(self):
        return self.c[0] if self.c.shape[0] else self.ring.coerce_scalar(0)

    def reciprocal(self) -> "XPoly":
        if self.degree != 0:
            raise DomainError("only nonzero constant polynomials are invertible")
        return XPoly(self.ring, [1 / self.c[0]], 1 / self.base)

    def near_reciprocal(self, order: int) -> "XPoly":
        """Truncated Neumann series for ``1/p`` with ``p = c (1 + delta)``.

        Meant for ``p`` that differs from the constant ``c = p(0)`` by a small
        perturbation (flows of a few small steps); the error is
        ``O(|delta|^(order+1))``.
        """
        c = self.constant_value()
        if c == 0:
            raise DomainError("polynomial vanishes at the origin")
        delta = XPoly(self.ring, self.c * (1 / c)) - 1
        term, acc = self.ring.one(), self.ring.one()
        for _ in range(order):
            term = -(term * delta)
            acc = acc + term
        return XPoly(self.ring, acc.c * (1 / c), 1 / self.base)

    def __truediv__(self, other):
        other = self._coerce(other)
        return self * other.reciprocal()

    def norm(self) -> float:
        return float(max(abs(v) for v in self.c)) if self.c.shape[0] else 0.0

    def __eq__(self, other):
        if not isinstance(other, XPoly):
            return NotImplemented
        return (self.ring == other.ring and self.base == other.base and self.c.shape == other.c.shape
                and bool(np.all(self.c == other.c)))

    __hash__ = None

    def evaluate(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.zeros_like(xs, dtype=float)
        for v in self.c[::-1]:
            out = out * xs + float(v)
        if self.base != 1:
            out = out * float(self.base) ** (xs / float(self.ring.epsilon))
        return out

    def sample(self, grid: LatticeGrid, valid=None) -> LatticeFunction:
        if grid.epsilon != self.ring.epsilon:
            raise GridMismatch("lattice spacing differs from the polynomial ring")
        return LatticeFunction(grid, self.evaluate(grid.coordinates()), valid)

    def to_float(self) -> "XPoly":
        return XPoly(self.ring.to_float(), [float(v) for v in self.c], float(self.base))


def _poly_solve_shift_sum(terms, f: XPoly, singular: str) -> XPoly:
    ring = f.ring
    consts = []
    for c, s in terms:
        if isinstance(c, XPoly):
            if not c.is_constant():
                raise SingularOperator("polynomial shift-sum solves need constant coefficients")
            c = c.constant_value()
        consts.append((ring.coerce_scalar(c), s))
    n = f.degree
    if n < 0:
        return ring.zero()
    if f.base != 1:
        # sum_s c_s b^(x/eps + s) q(x + s eps) = b^(x/eps) f  ->  plain solve for q
        q = _poly_solve_shift_sum([(c * f.base ** s, s) for c, s in consts], XPoly(ring, f.c), singular)
        return XPoly(ring, q.c, f.base)
    eps = ring.epsilon if ring.exact else float(ring.epsilon)
    zero = ring.coerce_scalar(0)
    # mu[r] = sum_j c_j (s_j eps)^r; operator maps x^d -> sum_i C(d,i) mu[d-i] x^i
    mu = [sum((c * (s * eps) ** r for c, s in consts), zero) for r in range(n + 2)]
    tol = 0 if ring.exact else 1e-13 * max(1.0, max(abs(c) for c, _ in consts))
    nu = next((r for r in range(2) if abs(mu[r]) > tol), None)
    if nu is None:
        raise SingularOperator("shift sum annihilates polynomials of degree <= 1")
    if nu > 0 and singular != "gauge":
        raise SingularOperator("shift sum is singular on constants")
    g = [zero] * (n + nu + 1)
    fc = list(f.c)
    for i in range(n, -1, -1):
        acc = fc[i]
        for d in range(i + nu + 1, n + nu + 1):
            acc = acc - math.comb(d, i) * mu[d - i] * g[d]
        g[i + nu] = acc / (math.comb(i + nu, i) * mu[nu])
    return XPoly(ring, g)


# ---------------------------------------------------------------------------
# exact multivariate symbols
# ---------------------------------------------------------------------------


def time_symbol(gamma: int, n: int) -> str:
    """Name of the time indeterminate t_{gamma,n}."""
    return f"t[{gamma},{n}]"


@dataclass(frozen=True)
class SymbolRing:
    epsilon: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _as_fraction(self.epsilon))

    def const(self, c) -> "PolySymbol":
        return PolySymbol(self, {(): _as_fraction(c)})

    def zero(self) -> "PolySymbol":
        return PolySymbol(self, {})

    def one(self) -> "PolySymbol":
        return self.const(1)

    def var(self, name: str) -> "PolySymbol":
        return PolySymbol(self, {((name, 1),): Fraction(1)})

    def x(self) -> "PolySymbol":
        return self.var("x")

    def t(self, gamma: int, n: int) -> "PolySymbol":
        return self.var(time_symbol(gamma, n))


def _mono_mul(a, b):
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


class PolySymbol:
    """Exact polynomial over the rationals in ``x`` and named time symbols.

    Monomials are sorted tuples of ``(name, exponent)``; zero terms are
    dropped, so equality is equality of canonical forms.
    """

    __slots__ = ("ring", "terms")

    def __init__(self, ring: SymbolRing, terms: dict):
        self.ring = ring
        self.terms = {m: Fraction(c) for m, c in terms.items() if c != 0}

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for mono, c in sorted(self.terms.items()):
            name = "*".join(v if e == 1 else f"{v}^{e}" for v, e in mono)
            parts.append(f"{c}" + (f"*{name}" if name else ""))
        return " + ".join(parts)

    def _coerce(self, other):
        if isinstance(other, PolySymbol):
            if other.ring != self.ring:
                raise GridMismatch("symbols over different rings")
            return other
        if isinstance(other, Scalar):
            return self.ring.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return PolySymbol(self.ring, out)

    __radd__ = __add__

    def __neg__(self):
        return PolySymbol(self.ring, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Scalar):
            f = _as_fraction(other)
            return PolySymbol(self.ring, {m: c * f for m, c in self.terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = _mono_mul(ma, mb)
                out[m] = out.get(m, 0) + ca * cb
        return PolySymbol(self.ring, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, Scalar):
            other = self.ring.const(other)
        if not isinstance(other, PolySymbol):
            return NotImplemented
        return self.ring == other.ring and self.terms == other.terms

    __hash__ = None

    def is_zero(self) -> bool:
        return not self.terms

    def norm(self) -> float:
        return float(max(abs(c) for c in self.terms.values())) if self.terms else 0.0

    def is_constant(self, tol: float = 0.0) -> bool:
        return all(m == () for m in self.terms)

    def constant_value(self):
        return self.terms.get((), Fraction(0))

    def reciprocal(self):
        if not self.is_constant() or not self.terms:
            raise DomainError("only nonzero constant symbols are invertible")
        return self.ring.const(1 / self.terms[()])

    def shift(self, k: int) -> "PolySymbol":
        """Substitute ``x -> x + k*epsilon`` exactly."""
        if k == 0:
            return self
        step = k * self.ring.epsilon
        out: dict = {}
        for mono, c in self.terms.items():
            rest = tuple((v, e) for v, e in mono if v != "x")
            p = dict(mono).get("x", 0)
            for j in range(p + 1):
                m = _mono_mul(rest, (("x", j),)) if j else rest
                out[m] = out.get(m, 0) + c * math.comb(p, j) * step ** (p - j)
        return PolySymbol(self.ring, out)

    def dt(self, name: str) -> "PolySymbol":
        """Formal partial derivative with respect to the indeterminate ``name``."""
        out: dict = {}
        for mono, c in self.terms.items():
            d = dict(mono)
            e = d.get(name, 0)
            if not e:
                continue
            if e == 1:
                del d[name]
            else:
                d[name] = e - 1
            m = tuple(sorted(d.items()))
            out[m] = out.get(m, 0) + c * e
        return PolySymbol(self.ring, out)


def poly_arith(p, q, op: str):
    """Exact ``add``, ``mul`` or ``scalar`` (``q`` a rational) on symbols."""
    if op == "add":
        return p + q
    if op == "mul":
        return p * q
    if op == "scalar":
        return p * _as_fraction(q)
    raise ValueError(f"unknown op {op!r}")


def poly_dt(p: PolySymbol, symbol) -> PolySymbol:
    if isinstance(symbol, tuple):
        symbol = time_symbol(*symbol)
    return p.dt(symbol)
