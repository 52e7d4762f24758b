"""Translation-dilation invariant systems: construction, projection, sigma and Delta.

A system is stored as an ordered tuple of homogeneous integer forms sorted
by degree, ties broken by colex order of leading monomials. Indices for
axes, projections and sigma values are 1-based.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement, product
from math import comb, prod
from typing import Iterable, Sequence

import numpy as np

from ._linalg import det_exact
from .errors import (
    CertificationError,
    DegenerateInputError,
    DimensionError,
    InputError,
    NotTdiError,
    ParseError,
)
from .polycore import (
    Polynomial,
    RationalMatrix,
    colex_key,
    format_polynomial,
    parse_polynomial,
    partial_derivative,
    translate,
)


def _monomials_of(polys: Iterable[Polynomial]) -> list:
    mons = set()
    for p in polys:
        mons.update(e for e, _ in p.terms)
    return sorted(mons, key=colex_key)


def coefficient_matrix(polys: Sequence[Polynomial], monomials: Sequence[tuple] | None = None):
    """Rows are polynomials, columns are monomials in ascending colex order."""
    if monomials is None:
        monomials = _monomials_of(polys)
    col = {m: i for i, m in enumerate(monomials)}
    rows = []
    for p in polys:
        row = [Fraction(0)] * len(monomials)
        for e, c in p.terms:
            row[col[e]] = c
        rows.append(row)
    return RationalMatrix(rows, len(monomials)), list(monomials)


def _form_sort_key(p: Polynomial):
    return (p.degree(), colex_key(p.leading_monomial()))


def reduce_forms(polys: Sequence[Polynomial], dimension: int) -> tuple:
    """Canonical linearly independent basis of the span of the non-constant parts.

    Constant terms are discarded, the span is row reduced with pivots taken
    from the colex-highest monomial downward, and each basis row is scaled
    to a primitive integer form.
    """
    cleaned = []
    for p in polys:
        if p.dimension != dimension:
            raise DimensionError("polynomials of mixed dimension")
        q = Polynomial(dimension, [(e, c) for e, c in p.terms if sum(e) > 0])
        if not q.is_zero():
            cleaned.append(q)
    if not cleaned:
        return ()
    mat, mons = coefficient_matrix(cleaned)
    red = mat.rref_inverted()
    out = []
    for i in range(red.rows):
        row = red.row(i)
        if any(v != 0 for v in row):
            out.append(Polynomial(dimension, [(mons[j], v) for j, v in enumerate(row) if v != 0]).primitive())
    out.sort(key=_form_sort_key)
    return tuple(out)


@dataclass(frozen=True)
class SigmaMap:
    """Assignment i -> sigma(i) in 1..d, optionally with a certified witness.

    ``witness`` holds r points (one per row of the Jacobian) at which the
    determinant was evaluated exactly, ``witness_delta`` that value.
    """

    assignment: tuple
    witness: tuple | None = field(default=None, compare=False)
    witness_delta: int | Fraction | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(v) for v in self.assignment))

    def __len__(self):
        return len(self.assignment)

    def __getitem__(self, i):
        return self.assignment[i]

    def validate(self, r: int, d: int):
        if len(self.assignment) != r:
            raise DimensionError(f"sigma has {len(self.assignment)} entries, system rank is {r}")
        if any(not (1 <= v <= d) for v in self.assignment):
            raise DimensionError(f"sigma values must lie in 1..{d}")


class TdiSystem:
    """Reduced system of homogeneous forms in ``dimension`` variables."""

    def __init__(self, forms: Sequence[Polynomial], dimension: int | None = None, label: str | None = None):
        forms = tuple(forms)
        if dimension is None:
            if not forms:
                raise DegenerateInputError("a system needs at least one form")
            dimension = forms[0].dimension
        if not forms:
            raise DegenerateInputError("a system needs at least one form")
        for f in forms:
            if f.dimension != dimension:
                raise DimensionError("forms of mixed dimension")
            if f.is_zero() or f.degree() < 1:
                raise InputError("forms must have positive degree")
            if not f.is_homogeneous():
                raise InputError(f"form {f} is not homogeneous")
        degs = [f.degree() for f in forms]
        if any(a > b for a, b in zip(degs, degs[1:])):
            raise InputError("form degrees must be non-decreasing")
        mat, _ = coefficient_matrix(forms)
        if mat.rank() != len(forms):
            raise InputError("forms are linearly dependent")
        self.dimension = int(dimension)
        self.forms = forms
        self.degrees = tuple(degs)
        self.label = label
        self._derivs = None
        self._int_forms = all(f.has_integer_coefficients() for f in forms)

    @property
    def rank(self) -> int:
        return len(self.forms)

    r = rank

    @property
    def degree(self) -> int:
        return max(self.degrees)

    k = degree

    @property
    def weight(self) -> int:
        return sum(self.degrees)

    K = weight

    @property
    def integral(self) -> bool:
        return self._int_forms

    def __eq__(self, other):
        if not isinstance(other, TdiSystem):
            return NotImplemented
        return self.dimension == other.dimension and self.forms == other.forms

    def __hash__(self):
        return hash((self.dimension, self.forms))

    def __repr__(self):
        name = f" {self.label}" if self.label else ""
        return f"<TdiSystem{name} d={self.dimension} r={self.rank} k={self.degree} K={self.weight}>"

    def stats(self) -> dict:
        return {"d": self.dimension, "r": self.rank, "k": self.degree, "K": self.weight}

    def derivative_table(self) -> tuple:
        """table[h-1][j] = partial derivative of form j along axis h."""
        if self._derivs is None:
            self._derivs = tuple(
                tuple(partial_derivative(f, h) for f in self.forms) for h in range(1, self.dimension + 1)
            )
        return self._derivs

    def values(self, points) -> np.ndarray:
        """Integer matrix (n, r) of form values at integer points (n, d)."""
        pts = np.asarray(points)
        cols = [f.evaluate_array(pts) for f in self.forms]
        dtype = object if any(c.dtype == object for c in cols) else np.int64
        return np.stack([c.astype(dtype) for c in cols], axis=1) if cols else np.zeros((len(pts), 0), dtype=np.int64)

    def truncate(self, max_degree: int) -> "TdiSystem":
        """Subsystem of forms with degree at most ``max_degree``."""
        keep = [f for f in self.forms if f.degree() <= max_degree]
        return TdiSystem(keep, self.dimension)


# families

@dataclass(frozen=True)
class Family:
    name: str
    params: tuple  # sorted (key, value) pairs

    @classmethod
    def make(cls, name: str, **params) -> "Family":
        name = name.lower()
        required = FAMILY_PARAMS.get(name)
        if required is None:
            raise InputError(f"unknown family {name!r}")
        missing = [p for p in required if p not in params]
        extra = [p for p in params if p not in required]
        if missing or extra:
            raise InputError(f"family {name} needs parameters {', '.join(required)}")
        vals = {}
        for p in required:
            v = int(params[p])
            if v < 1:
                raise InputError(f"parameter {p} must be positive")
            vals[p] = v
        return cls(name, tuple((p, vals[p]) for p in required))

    @classmethod
    def parse(cls, text: str) -> "Family":
        parts = text.split()
        if not parts:
            raise InputError("empty family description")
        params = {}
        for tok in parts[1:]:
            m = re.fullmatch(r"(\w+)=(-?\d+)", tok)
            if not m:
                raise InputError(f"bad family parameter {tok!r}")
            params[m.group(1)] = int(m.group(2))
        return cls.make(parts[0], **params)

    def __getitem__(self, key):
        return dict(self.params)[key]

    def __str__(self):
        return " ".join([self.name] + [f"{k}={v}" for k, v in self.params])

    @property
    def dimension(self) -> int:
        p = dict(self.params)
        return {"vinogradov": 1, "parsell": p.get("d"), "akc": p.get("d"), "binary": 2}[self.name]

    def seeds(self) -> list:
        p = dict(self.params)
        if self.name == "vinogradov":
            return [Polynomial.monomial((p["k"],))]
        if self.name == "parsell":
            d, k = p["d"], p["k"]
            return [Polynomial.monomial(e) for e in _exponents_of_degree(d, k)]
        if self.name == "akc":
            return [Polynomial.monomial((p["l"],) * p["d"])]
        if self.name == "binary":
            return [Polynomial.monomial((p["k1"], p["k2"]))]
        raise InputError(f"unknown family {self.name!r}")

    def build(self) -> TdiSystem:
        sys = generate_from_seeds(self.seeds())
        sys.label = str(self)
        return sys


FAMILY_PARAMS = {"vinogradov": ("k",), "parsell": ("d", "k"), "akc": ("d", "l"), "binary": ("k1", "k2")}


def _exponents_of_degree(d: int, k: int) -> list:
    out = []
    for combo in combinations_with_replacement(range(d), k):
        e = [0] * d
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    return sorted(out, key=colex_key)


def family(name: str, **params) -> Family:
    return Family.make(name, **params)


def build_family(name: str, **params) -> TdiSystem:
    return Family.make(name, **params).build()


def closed_form_stats(fam: Family | str, **params) -> tuple:
    """(r, K) from the closed formulas of each family."""
    if isinstance(fam, str):
        fam = Family.parse(fam) if not params else Family.make(fam, **params)
    p = dict(fam.params)
    if fam.name == "vinogradov":
        k = p["k"]
        return k, k * (k + 1) // 2
    if fam.name == "parsell":
        d, k = p["d"], p["k"]
        r = comb(k + d, d) - 1
        num = d * (r + 1) * k
        if num % (d + 1):
            raise ArithmeticError("non-integral weight formula")
        K = num // (d + 1)
        if K != sum(l * comb(l + d - 1, l) for l in range(1, k + 1)):
            raise ArithmeticError("weight formulas disagree")
        return r, K
    if fam.name == "akc":
        d, l = p["d"], p["l"]
        num = d * l * (l + 1) ** d
        return (l + 1) ** d - 1, num // 2
    if fam.name == "binary":
        k1, k2 = p["k1"], p["k2"]
        return (k1 + 1) * (k2 + 1) - 1, (k1 + k2) * (k1 + 1) * (k2 + 1) // 2
    raise InputError(f"unknown family {fam.name!r}")


def parsell_weight(delta: int, k: int) -> int:
    """Weight of the degree-k Parsell system in delta variables."""
    return sum(l * comb(l + delta - 1, l) for l in range(1, k + 1))


# construction

def derivative_closure(seeds: Sequence[Polynomial]) -> list:
    """All non-zero partial derivatives of the seeds (including the seeds)."""
    seen = set()
    frontier = [s for s in seeds if not s.is_zero()]
    out = []
    while frontier:
        nxt = []
        for p in frontier:
            if p in seen:
                continue
            seen.add(p)
            out.append(p)
            for h in range(1, p.dimension + 1):
                q = partial_derivative(p, h)
                if not q.is_zero() and q not in seen:
                    nxt.append(q)
        frontier = nxt
    return out


def generate_from_seeds(seeds: Sequence[Polynomial]) -> TdiSystem:
    seeds = list(seeds)
    if not seeds:
        raise InputError("at least one seed polynomial is required")
    d = seeds[0].dimension
    for s in seeds:
        if s.dimension != d:
            raise DimensionError("seeds of mixed dimension")
        if not s.is_homogeneous():
            raise InputError(f"seed {s} is not homogeneous")
    closure = derivative_closure(seeds)
    forms = reduce_forms(closure, d)
    if not forms:
        raise DegenerateInputError("no positive-degree derivatives: the seeds are constant")
    return TdiSystem(forms, d)


def _solve_columns(a: RationalMatrix, rhs: Sequence[Sequence[Fraction]]):
    """Solve a x = b for each column b; a has full column rank. None if inconsistent."""
    n = a.cols
    aug = RationalMatrix([list(a.row(i)) + [b[i] for b in rhs] for i in range(a.rows)], n + len(rhs))
    red = aug.rref()
    for i in range(red.rows):
        row = red.row(i)
        lead = next((j for j, v in enumerate(row) if v != 0), None)
        if lead is None:
            continue
        if lead >= n:
            return None
    if any(red[i, i] != 1 for i in range(n)):
        return None
    return [[red[i, n + c] for i in range(n)] for c in range(len(rhs))]


def verify_translation_invariance(sys: TdiSystem, xi: Sequence) -> tuple:
    """Return (C, c0) with F(x + xi) = C F(x) + c0 identically in x.

    Raises NotTdiError if no such decomposition exists or C is not lower
    unitriangular.
    """
    if len(xi) != sys.dimension:
        raise DimensionError(f"shift has length {len(xi)}, expected {sys.dimension}")
    shifted = [translate(f, xi) for f in sys.forms]
    zero = (0,) * sys.dimension
    c0 = [s.coefficient(zero) for s in shifted]
    tails = [Polynomial(sys.dimension, [(e, c) for e, c in s.terms if e != zero]) for s in shifted]
    mons = _monomials_of(list(sys.forms) + tails)
    fm, _ = coefficient_matrix(sys.forms, mons)
    tm, _ = coefficient_matrix(tails, mons)
    sol = _solve_columns(fm.transpose(), [tm.row(j) for j in range(sys.rank)])
    if sol is None:
        raise NotTdiError(f"translate by {tuple(xi)} leaves the span of the forms")
    C = RationalMatrix(sol, sys.rank)
    if not C.is_lower_unitriangular():
        raise NotTdiError(f"translation matrix for {tuple(xi)} is not lower unitriangular")
    return C, c0


def orthogonal_projection(sys: TdiSystem, indices: Sequence[int]) -> TdiSystem:
    """Keep only the variables in ``indices`` (others set to zero) and re-reduce."""
    idx = [int(i) for i in indices]
    if not idx or len(idx) >= sys.dimension:
        raise InputError("projection needs between 1 and d-1 indices")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise InputError("projection indices must be strictly increasing")
    if idx[0] < 1 or idx[-1] > sys.dimension:
        raise InputError(f"projection indices must lie in 1..{sys.dimension}")
    restricted = [f.restrict(idx) for f in sys.forms]
    forms = reduce_forms(restricted, len(idx))
    if not forms:
        raise DegenerateInputError("projection leaves no forms")
    return TdiSystem(forms, len(idx))


def one_step_projections(sys: TdiSystem) -> list:
    """All projections that drop exactly one coordinate, as (indices, system)."""
    d = sys.dimension
    out = []
    for drop in range(d, 0, -1):
        idx = tuple(i for i in range(1, d + 1) if i != drop)
        if idx:
            out.append((idx, orthogonal_projection(sys, idx)))
    return out


# sigma and the Jacobian determinant

def sigma_from_forms(sys: TdiSystem) -> tuple:
    """Sigma read off the colex-leading monomials of the inverted-RREF basis."""
    mat, mons = coefficient_matrix(sys.forms)
    red = mat.rref_inverted()
    sigma = []
    for i in range(red.rows):
        row = red.row(i)
        last = max(j for j, v in enumerate(row) if v != 0)
        b = mons[last]
        sigma.append(next(h for h, v in enumerate(b, start=1) if v > 0))
    return tuple(sigma)


def jacobian_matrix(sys: TdiSystem, sigma: SigmaMap | Sequence[int], points) -> list:
    """Rows are points x_i, columns forms F_j, entry dF_j/dz_{sigma(i)} at x_i."""
    sig = sigma if isinstance(sigma, SigmaMap) else SigmaMap(tuple(sigma))
    sig.validate(sys.rank, sys.dimension)
    pts = [list(p) for p in points]
    if len(pts) != sys.rank or any(len(p) != sys.dimension for p in pts):
        raise DimensionError(f"need {sys.rank} points of dimension {sys.dimension}")
    table = sys.derivative_table()
    return [[table[sig[i] - 1][j].evaluate(pts[i]) for j in range(sys.rank)] for i in range(sys.rank)]


def jacobian_delta(sys: TdiSystem, sigma: SigmaMap | Sequence[int], points):
    """Exact value of det(d F_j / d z_{sigma(i)} (x_i))."""
    val = det_exact(jacobian_matrix(sys, sigma, points))
    return Fraction(val)


def _candidate_points(r: int, d: int, G: int, rng, cap: int):
    n = r * d
    if G**n <= cap:
        for flat in product(range(1, G + 1), repeat=n):
            yield [flat[i * d:(i + 1) * d] for i in range(r)]
    else:
        for _ in range(cap):
            flat = rng.integers(1, G + 1, size=n)
            yield [tuple(int(v) for v in flat[i * d:(i + 1) * d]) for i in range(r)]


def find_sigma(sys: TdiSystem, max_grid: int = 64, tries_per_grid: int = 4096, seed: int = 0) -> SigmaMap:
    """Sigma making the Jacobian determinant a non-zero polynomial, with a witness.

    The witness search walks grids [1, G]^{rd} for G = 2, 4, ..., max_grid:
    exhaustively in lexicographic order when the grid has at most
    ``tries_per_grid`` points, otherwise through a fixed-seed sample of that
    many points. The result is deterministic.
    """
    sig = SigmaMap(sigma_from_forms(sys))
    rng = np.random.Generator(np.random.PCG64(seed))
    G = 2
    while G <= max_grid:
        for pts in _candidate_points(sys.rank, sys.dimension, G, rng, tries_per_grid):
            val = jacobian_delta(sys, sig, pts)
            if val != 0:
                return SigmaMap(sig.assignment, tuple(tuple(p) for p in pts), val)
        G *= 2
    raise CertificationError(f"no point with non-zero Jacobian found for {sys!r}")


# system file format

@dataclass
class SystemSpec:
    dimension: int | None = None
    family: Family | None = None
    seeds: list = field(default_factory=list)
    forms: list = field(default_factory=list)


def parse_system_spec(text: str) -> SystemSpec:
    """Parse ``key: value`` lines (dimension, family, seed, form); '#' starts a comment."""
    spec = SystemSpec()
    pending = []  # (kind, text, line, column)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if ":" not in line:
            raise ParseError("expected 'key: value'", lineno, len(line) - len(line.lstrip()) + 1)
        key, _, value = line.partition(":")
        key = key.strip().lower()
        col = len(key) + 2 + (len(value) - len(value.lstrip()))
        value = value.strip()
        if key == "dimension":
            if not value.isdigit() or int(value) < 1:
                raise ParseError("dimension must be a positive integer", lineno, col)
            spec.dimension = int(value)
        elif key == "family":
            try:
                spec.family = Family.parse(value)
            except InputError as exc:
                raise ParseError(str(exc), lineno, col) from None
        elif key in ("seed", "form"):
            pending.append((key, value, lineno, col))
        else:
            raise ParseError(f"unknown key {key!r}", lineno, 1)
    if spec.dimension is None and spec.family is not None:
        spec.dimension = spec.family.dimension
    for key, value, lineno, col in pending:
        try:
            poly = parse_polynomial(value, spec.dimension)
        except ParseError as exc:
            raise ParseError(exc.reason, lineno, col + exc.column - 1) from None
        (spec.seeds if key == "seed" else spec.forms).append(poly)
    if spec.dimension is None:
        polys = spec.seeds + spec.forms
        if not polys:
            raise ParseError("spec gives neither a family nor any polynomials", 1, 1)
        spec.dimension = max(p.dimension for p in polys)
        spec.seeds = [_lift(p, spec.dimension) for p in spec.seeds]
        spec.forms = [_lift(p, spec.dimension) for p in spec.forms]
    if spec.family is not None and spec.family.dimension != spec.dimension:
        raise ParseError("dimension disagrees with the family", 1, 1)
    if spec.family is None and not spec.seeds and not spec.forms:
        raise ParseError("spec gives neither a family nor any polynomials", 1, 1)
    return spec


def _lift(p: Polynomial, dim: int) -> Polynomial:
    if p.dimension == dim:
        return p
    return Polynomial(dim, [(e + (0,) * (dim - p.dimension), c) for e, c in p.terms])


def system_from_spec(spec: SystemSpec) -> TdiSystem:
    if spec.seeds:
        sys = generate_from_seeds(spec.seeds)
    elif spec.forms:
        sys = TdiSystem(spec.forms, spec.dimension)
    else:
        sys = spec.family.build()
    if spec.family is not None:
        sys.label = str(spec.family)
    return sys


def load_system(text: str) -> TdiSystem:
    return system_from_spec(parse_system_spec(text))


def format_system(sys: TdiSystem, fam: Family | str | None = None) -> str:
    lines = [f"dimension: {sys.dimension}"]
    label = fam if fam is not None else sys.label
    if label:
        lines.append(f"family: {label}")
    lines += [f"form: {format_polynomial(f)}" for f in sys.forms]
    return "\n".join(lines) + "\n"
