"""Exact sparse multivariate polynomials over the rationals.

Monomials are keyed by exponent tuples (multi-indices). Terms are kept in
ascending colex order so equal polynomials print and hash identically.
Axes are numbered from 1, matching the variable names z1..zd.
"""

from __future__ import annotations

import re
from enum import IntEnum
from fractions import Fraction
from itertools import product
from math import comb
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DimensionError, DomainError, ParseError

MultiIndex = tuple  # tuple[int, ...]


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def colex_key(a: Sequence[int]) -> tuple:
    """Sort key realising colex order: compare the last coordinate first."""
    return tuple(reversed(a))


def colex_compare(a: Sequence[int], b: Sequence[int]) -> Ordering:
    if len(a) != len(b):
        raise DimensionError(f"multi-index lengths differ: {len(a)} vs {len(b)}")
    for x, y in zip(reversed(a), reversed(b)):
        if x < y:
            return Ordering.LESS
        if x > y:
            return Ordering.GREATER
    return Ordering.EQUAL


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, np.integer)):
        return Fraction(int(c))
    if isinstance(c, str):
        return Fraction(c)
    if isinstance(c, float):
        return Fraction(c)
    raise TypeError(f"cannot use {type(c).__name__} as an exact coefficient")


class Polynomial:
    """Immutable sparse polynomial in ``dimension`` variables."""

    __slots__ = ("_dim", "_terms", "_map", "_hash")

    def __init__(self, dimension: int, terms: Mapping | Iterable = ()):
        if int(dimension) < 1:
            raise DimensionError("dimension must be positive")
        self._dim = int(dimension)
        acc: dict = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for exps, c in items:
            e = tuple(int(v) for v in exps)
            if len(e) != self._dim:
                raise DimensionError(f"monomial {e} has length {len(e)}, expected {self._dim}")
            if any(v < 0 for v in e):
                raise DomainError(f"negative exponent in {e}")
            acc[e] = acc.get(e, Fraction(0)) + _as_fraction(c)
        keys = sorted((e for e, c in acc.items() if c != 0), key=colex_key)
        self._terms = tuple((e, acc[e]) for e in keys)
        self._map = dict(self._terms)
        self._hash = None

    # construction helpers
    @classmethod
    def zero(cls, dimension: int) -> "Polynomial":
        return cls(dimension)

    @classmethod
    def constant(cls, dimension: int, c) -> "Polynomial":
        return cls(dimension, {(0,) * dimension: c})

    @classmethod
    def monomial(cls, exponents: Sequence[int], c=1) -> "Polynomial":
        return cls(len(exponents), {tuple(exponents): c})

    @classmethod
    def variable(cls, dimension: int, axis: int) -> "Polynomial":
        _check_axis(axis, dimension)
        e = [0] * dimension
        e[axis - 1] = 1
        return cls(dimension, {tuple(e): 1})

    # basic accessors
    @property
    def dimension(self) -> int:
        return self._dim

    @property
    def terms(self) -> tuple:
        """Tuple of (exponents, coefficient) pairs in ascending colex order."""
        return self._terms

    def coefficient(self, exponents: Sequence[int]) -> Fraction:
        return self._map.get(tuple(exponents), Fraction(0))

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator:
        return iter(self._terms)

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e, _ in self._terms), default=-1)

    def is_homogeneous(self) -> bool:
        degs = {sum(e) for e, _ in self._terms}
        return len(degs) <= 1

    def leading_monomial(self) -> tuple | None:
        return self._terms[-1][0] if self._terms else None

    def leading_coefficient(self) -> Fraction:
        return self._terms[-1][1] if self._terms else Fraction(0)

    def has_integer_coefficients(self) -> bool:
        return all(c.denominator == 1 for _, c in self._terms)

    def max_exponents(self) -> tuple:
        m = [0] * self._dim
        for e, _ in self._terms:
            for i, v in enumerate(e):
                if v > m[i]:
                    m[i] = v
        return tuple(m)

    # arithmetic
    def _check_same(self, other: "Polynomial"):
        if other._dim != self._dim:
            raise DimensionError(f"dimensions differ: {self._dim} vs {other._dim}")

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self._dim, other)
        self._check_same(other)
        return Polynomial(self._dim, list(self._terms) + list(other._terms))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._dim, [(e, -c) for e, c in self._terms])

    def __sub__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self._dim, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = _as_fraction(other)
            return Polynomial(self._dim, [(e, c * v) for e, v in self._terms])
        self._check_same(other)
        acc: dict = {}
        for e1, c1 in self._terms:
            for e2, c2 in other._terms:
                e = tuple(a + b for a, b in zip(e1, e2))
                acc[e] = acc.get(e, 0) + c1 * c2
        return Polynomial(self._dim, acc)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise DomainError("negative power")
        out = Polynomial.constant(self._dim, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self._dim == other._dim and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == Polynomial.constant(self._dim, other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._dim, self._terms))
        return self._hash

    def __repr__(self):
        return f"Polynomial({self._dim}, {format_polynomial(self)!r})"

    def __str__(self):
        return format_polynomial(self)

    # calculus and substitutions
    def derivative(self, axis: int) -> "Polynomial":
        return partial_derivative(self, axis)

    def translate(self, xi: Sequence) -> "Polynomial":
        return translate(self, xi)

    def dilate(self, lam) -> "Polynomial":
        return dilate(self, lam)

    def evaluate(self, point: Sequence):
        return evaluate(self, point)

    def restrict(self, indices: Sequence[int]) -> "Polynomial":
        """Set every variable outside ``indices`` (1-based) to zero.

        The result lives in len(indices) variables, renumbered in order.
        """
        idx = [int(i) for i in indices]
        for i in idx:
            _check_axis(i, self._dim)
        keep = set(idx)
        out = []
        for e, c in self._terms:
            if any(e[j] for j in range(self._dim) if (j + 1) not in keep):
                continue
            out.append((tuple(e[i - 1] for i in idx), c))
        return Polynomial(len(idx), out)

    def primitive(self) -> "Polynomial":
        """Scale to integer coefficients with content 1 and positive leading coefficient."""
        if not self._terms:
            return self
        from math import gcd, lcm

        den = 1
        for _, c in self._terms:
            den = lcm(den, c.denominator)
        nums = [int(c * den) for _, c in self._terms]
        g = 0
        for v in nums:
            g = gcd(g, v)
        if nums[-1] < 0:
            g = -g
        return Polynomial(self._dim, [(e, Fraction(v // g)) for (e, _), v in zip(self._terms, nums)])

    def integer_terms(self) -> list:
        """(exponents, int coefficient) pairs; raises if a coefficient is not integral."""
        out = []
        for e, c in self._terms:
            if c.denominator != 1:
                raise DomainError("polynomial has non-integral coefficients")
            out.append((e, int(c)))
        return out

    def evaluate_array(self, points, modulus: int | None = None) -> np.ndarray:
        """Evaluate an integer-coefficient polynomial at many integer points.

        ``points`` has shape (n, d). With a modulus the result is reduced to
        0..modulus-1 using int64 arithmetic; otherwise int64 is used when a
        magnitude bound proves it safe and Python ints (object dtype) if not.
        """
        pts = np.asarray(points)
        if pts.ndim != 2 or pts.shape[1] != self._dim:
            raise DimensionError(f"points must have shape (n, {self._dim})")
        terms = self.integer_terms()
        n = pts.shape[0]
        maxe = self.max_exponents()
        if modulus is not None:
            m = int(modulus)
            if m < 1 or m >= 3_000_000_000:
                raise DomainError("modulus out of supported range")
            base = np.mod(pts.astype(np.int64), m)
            pows = _axis_powers(base, maxe, m)
            out = np.zeros(n, dtype=np.int64)
            for e, c in terms:
                t = np.full(n, c % m, dtype=np.int64)
                for j, v in enumerate(e):
                    if v:
                        t = (t * pows[j][v]) % m
                out = (out + t) % m
            return out
        bound = 0
        xmax = int(np.abs(pts).max()) if n else 0
        for e, c in terms:
            bound += abs(c) * xmax ** sum(e)
        if bound < 2**62 and pts.dtype != object:
            base = pts.astype(np.int64)
            pows = _axis_powers(base, maxe, None)
            out = np.zeros(n, dtype=np.int64)
        else:
            base = pts.astype(object)
            pows = _axis_powers(base, maxe, None)
            out = np.zeros(n, dtype=object)
        for e, c in terms:
            t = None
            for j, v in enumerate(e):
                if v:
                    t = pows[j][v] if t is None else t * pows[j][v]
            out = out + (c if t is None else c * t)
        return out

    def evaluate_float(self, points) -> np.ndarray:
        """Floating point evaluation at real points of shape (n, d)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self._dim:
            raise DimensionError(f"points must have shape (n, {self._dim})")
        out = np.zeros(pts.shape[0])
        for e, c in self._terms:
            t = np.full(pts.shape[0], float(c))
            for j, v in enumerate(e):
                if v:
                    t = t * pts[:, j] ** v
            out += t
        return out


def _axis_powers(base: np.ndarray, maxe: Sequence[int], m: int | None):
    pows = []
    for j, top in enumerate(maxe):
        col = base[:, j]
        ps = [None, col]
        for _ in range(2, top + 1):
            nxt = ps[-1] * col
            if m is not None:
                nxt = nxt % m
            ps.append(nxt)
        pows.append(ps)
    return pows


def _check_axis(axis: int, dim: int):
    if not (1 <= int(axis) <= dim):
        raise DimensionError(f"axis {axis} outside 1..{dim}")


def partial_derivative(p: Polynomial, axis: int) -> Polynomial:
    _check_axis(axis, p.dimension)
    j = axis - 1
    out = []
    for e, c in p.terms:
        if e[j]:
            ne = list(e)
            ne[j] -= 1
            out.append((tuple(ne), c * e[j]))
    return Polynomial(p.dimension, out)


def translate(p: Polynomial, xi: Sequence) -> Polynomial:
    """Return p(x + xi) by binomial expansion."""
    if len(xi) != p.dimension:
        raise DimensionError(f"shift has length {len(xi)}, expected {p.dimension}")
    shift = [_as_fraction(v) for v in xi]
    acc: dict = {}
    for e, c in p.terms:
        ranges = [range(a + 1) for a in e]
        for b in product(*ranges):
            coef = c
            for a_i, b_i, s_i in zip(e, b, shift):
                if a_i != b_i:
                    coef *= comb(a_i, b_i) * s_i ** (a_i - b_i)
            if coef:
                acc[b] = acc.get(b, 0) + coef
    return Polynomial(p.dimension, acc)


def dilate(p: Polynomial, lam) -> Polynomial:
    """Return p(lam * x)."""
    lam = _as_fraction(lam)
    if lam == 0:
        raise DomainError("dilation factor must be non-zero")
    return Polynomial(p.dimension, [(e, c * lam ** sum(e)) for e, c in p.terms])


def evaluate(p: Polynomial, point: Sequence) -> Fraction:
    if len(point) != p.dimension:
        raise DimensionError(f"point has length {len(point)}, expected {p.dimension}")
    pt = [_as_fraction(v) for v in point]
    total = Fraction(0)
    for e, c in p.terms:
        t = c
        for v, a in zip(pt, e):
            if a:
                t *= v**a
        total += t
    return total


# text format

def _format_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _format_monomial(e: tuple) -> str:
    parts = []
    for i, a in enumerate(e, start=1):
        if a == 1:
            parts.append(f"z{i}")
        elif a > 1:
            parts.append(f"z{i}^{a}")
    return " ".join(parts)


def format_polynomial(p: Polynomial) -> str:
    """Canonical text: terms in descending colex order, ``c * z1^a1 z2^a2`` style."""
    if p.is_zero():
        return "0"
    chunks = []
    for e, c in reversed(p.terms):
        mono = _format_monomial(e)
        mag = abs(c)
        if not mono:
            body = _format_coeff(mag)
        elif mag == 1:
            body = mono
        else:
            body = f"{_format_coeff(mag)} * {mono}"
        if not chunks:
            chunks.append(("-" if c < 0 else "") + body)
        else:
            chunks.append(("- " if c < 0 else "+ ") + body)
    return " ".join(chunks)


_TOKEN = re.compile(
    r"(?P<ws>\s+)|(?P<num>\d+)|(?P<var>[zx](?P<idx>\d*))|(?P<pow>\*\*|\^)"
    r"|(?P<op>[+\-*/])"
)


def _line_col(text: str, pos: int) -> tuple:
    line = text.count("\n", 0, pos) + 1
    start = text.rfind("\n", 0, pos) + 1
    return line, pos - start + 1


def _tokenize(text: str, line_offset: int = 0):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            ln, col = _line_col(text, pos)
            raise ParseError(f"unexpected character {text[pos]!r}", ln + line_offset, col)
        kind = m.lastgroup
        if kind == "idx":
            kind = "var"
        if m.group("var") is not None:
            kind = "var"
        if kind != "ws":
            toks.append((kind, m.group(0), pos))
        pos = m.end()
    return toks


def parse_polynomial(text: str, dimension: int | None = None, line: int = 1) -> Polynomial:
    """Parse the text format produced by :func:`format_polynomial`.

    Lenient about spacing, accepts ``^`` or ``**``, optional ``*`` between
    factors and ``z`` as shorthand for ``z1``. ``line`` offsets reported
    error positions when the text comes from a larger file.
    """
    toks = _tokenize(text, line - 1)
    pos = 0

    def where(i):
        p_ = toks[i][2] if i < len(toks) else len(text)
        ln, col = _line_col(text, p_)
        return ln + line - 1, col

    def fail(msg, i):
        ln, col = where(i)
        raise ParseError(msg, ln, col)

    if not toks:
        fail("empty polynomial", 0)

    terms = []  # (coef, {axis: exp})
    max_axis = 0
    first = True
    while pos < len(toks):
        sign = 1
        if toks[pos][0] == "op" and toks[pos][1] in "+-":
            sign = -1 if toks[pos][1] == "-" else 1
            pos += 1
        elif not first:
            fail("expected '+' or '-'", pos)
        first = False
        coef = Fraction(sign)
        exps: dict = {}
        nfactors = 0
        while pos < len(toks):
            kind, val, _ = toks[pos]
            if kind == "op" and val in "+-":
                break
            if kind == "op" and val == "*":
                if nfactors == 0:
                    fail("unexpected '*'", pos)
                pos += 1
                if pos >= len(toks) or toks[pos][0] not in ("num", "var"):
                    fail("expected a factor after '*'", pos)
                continue
            if kind == "num":
                num = int(val)
                pos += 1
                if pos < len(toks) and toks[pos][1] == "/":
                    pos += 1
                    if pos >= len(toks) or toks[pos][0] != "num":
                        fail("expected denominator", pos)
                    den = int(toks[pos][1])
                    if den == 0:
                        fail("zero denominator", pos)
                    pos += 1
                    coef *= Fraction(num, den)
                else:
                    coef *= num
                nfactors += 1
                continue
            if kind == "var":
                digits = val[1:]
                if digits == "":
                    if dimension not in (None, 1):
                        fail("bare variable name needs an index when dimension > 1", pos)
                    axis = 1
                else:
                    axis = int(digits)
                    if axis < 1:
                        fail("variable indices start at 1", pos)
                pos += 1
                e = 1
                if pos < len(toks) and toks[pos][0] == "pow":
                    pos += 1
                    if pos >= len(toks) or toks[pos][0] != "num":
                        fail("expected integer exponent", pos)
                    e = int(toks[pos][1])
                    pos += 1
                exps[axis] = exps.get(axis, 0) + e
                max_axis = max(max_axis, axis)
                nfactors += 1
                continue
            fail(f"unexpected token {val!r}", pos)
        if nfactors == 0:
            fail("empty term", pos)
        terms.append((coef, exps))

    dim = dimension if dimension is not None else max(max_axis, 1)
    if max_axis > dim:
        raise ParseError(f"variable z{max_axis} exceeds dimension {dim}", line, 1)
    out = []
    for coef, exps in terms:
        e = [0] * dim
        for a, v in exps.items():
            e[a - 1] = v
        out.append((tuple(e), coef))
    return Polynomial(dim, out)


# exact linear algebra

class RationalMatrix:
    """Dense matrix of Fractions. Treated as immutable."""

    __slots__ = ("rows", "cols", "_data")

    def __init__(self, data: Sequence[Sequence], cols: int | None = None):
        rows = [[_as_fraction(v) for v in row] for row in data]
        if cols is None:
            if not rows:
                raise DimensionError("cannot infer column count of an empty matrix")
            cols = len(rows[0])
        for row in rows:
            if len(row) != cols:
                raise DimensionError("ragged matrix rows")
        self.rows = len(rows)
        self.cols = cols
        self._data = tuple(tuple(r) for r in rows)

    @classmethod
    def identity(cls, n: int) -> "RationalMatrix":
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RationalMatrix":
        return cls([[0] * cols for _ in range(rows)], cols)

    def __getitem__(self, ij):
        i, j = ij
        return self._data[i][j]

    def row(self, i: int) -> tuple:
        return self._data[i]

    def to_lists(self) -> list:
        return [list(r) for r in self._data]

    def transpose(self) -> "RationalMatrix":
        return RationalMatrix([[self._data[i][j] for i in range(self.rows)] for j in range(self.cols)], self.rows)

    def __eq__(self, other):
        if isinstance(other, RationalMatrix):
            return self.cols == other.cols and self._data == other._data
        return NotImplemented

    def __hash__(self):
        return hash((self.cols, self._data))

    def __repr__(self):
        body = "; ".join(" ".join(_format_coeff(v) for v in r) for r in self._data)
        return f"RationalMatrix[{self.rows}x{self.cols}]({body})"

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.cols != other.rows:
            raise DimensionError("inner dimensions differ")
        ot = other.transpose()._data
        return RationalMatrix(
            [[sum((a * b for a, b in zip(r, c)), Fraction(0)) for c in ot] for r in self._data],
            other.cols,
        )

    def apply(self, vec: Sequence) -> list:
        if len(vec) != self.cols:
            raise DimensionError("vector length differs from column count")
        v = [_as_fraction(x) for x in vec]
        return [sum((a * b for a, b in zip(r, v)), Fraction(0)) for r in self._data]

    def rref(self) -> "RationalMatrix":
        """Conventional reduced row-echelon form; zero rows end up at the bottom."""
        m = [list(r) for r in self._data]
        lead = 0
        for c in range(self.cols):
            if lead >= self.rows:
                break
            piv = next((i for i in range(lead, self.rows) if m[i][c] != 0), None)
            if piv is None:
                continue
            m[lead], m[piv] = m[piv], m[lead]
            inv = 1 / m[lead][c]
            m[lead] = [v * inv for v in m[lead]]
            for i in range(self.rows):
                if i != lead and m[i][c] != 0:
                    f = m[i][c]
                    m[i] = [a - f * b for a, b in zip(m[i], m[lead])]
            lead += 1
        return RationalMatrix(m, self.cols)

    def reversed(self) -> "RationalMatrix":
        return RationalMatrix([list(reversed(r)) for r in reversed(self._data)], self.cols)

    def rref_inverted(self) -> "RationalMatrix":
        """Row reduction with pivots taken from the last column downward.

        Reversing both rows and columns of the result gives a conventional
        reduced row-echelon matrix. Zero rows come first.
        """
        return self.reversed().rref().reversed()

    def rank(self) -> int:
        red = self.rref()
        return sum(1 for r in red._data if any(v != 0 for v in r))

    def det(self) -> Fraction:
        if self.rows != self.cols:
            raise DimensionError("determinant of a non-square matrix")
        m = [list(r) for r in self._data]
        n = self.rows
        sign = 1
        total = Fraction(1)
        for c in range(n):
            piv = next((i for i in range(c, n) if m[i][c] != 0), None)
            if piv is None:
                return Fraction(0)
            if piv != c:
                m[c], m[piv] = m[piv], m[c]
                sign = -sign
            pv = m[c][c]
            total *= pv
            for i in range(c + 1, n):
                if m[i][c] != 0:
                    f = m[i][c] / pv
                    m[i] = [a - f * b for a, b in zip(m[i], m[c])]
        return total * sign

    def is_lower_unitriangular(self) -> bool:
        if self.rows != self.cols:
            return False
        for i in range(self.rows):
            for j in range(self.cols):
                v = self._data[i][j]
                if (i == j and v != 1) or (j > i and v != 0):
                    return False
        return True


def rref_inverted(m: RationalMatrix) -> RationalMatrix:
    return m.rref_inverted()


def is_rref(m: RationalMatrix) -> bool:
    """Check the conventional reduced row-echelon conditions."""
    last = -1
    seen_zero = False
    for i in range(m.rows):
        row = m.row(i)
        nz = next((j for j, v in enumerate(row) if v != 0), None)
        if nz is None:
            seen_zero = True
            continue
        if seen_zero or nz <= last or row[nz] != 1:
            return False
        if any(m[k, nz] != 0 for k in range(m.rows) if k != i):
            return False
        last = nz
    return True
