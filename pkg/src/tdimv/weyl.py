"""Exponential sums attached to a system: f(alpha), S(q, a), v(beta), V and arcs.

Frequencies may be given as floats or Fractions. Floats are converted to
their exact binary rationals, so every phase sum(alpha_i F_i(x)) is reduced
mod 1 in integer arithmetic before any trigonometry happens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import gcd, lcm
from typing import Sequence

import numpy as np

from .counting import box_points
from .errors import BudgetExceeded, DimensionError, DomainError, InputError
from .tdisys import TdiSystem

TWO_PI = 2.0 * math.pi
SUM_CHUNK = 2**20


def _exact(alpha) -> list:
    out = []
    for a in alpha:
        if isinstance(a, Fraction):
            out.append(a)
        elif isinstance(a, (int, np.integer)):
            out.append(Fraction(int(a)))
        else:
            x = float(a)
            if not math.isfinite(x):
                raise DomainError("frequencies must be finite")
            out.append(Fraction(x))
    return out


def _check_alpha(sys: TdiSystem, alpha) -> list:
    if len(alpha) != sys.rank:
        raise DimensionError(f"frequency vector must have length {sys.rank}")
    return _exact(alpha)


def _phase_numerators(sys: TdiSystem, alpha: list, pts: np.ndarray):
    """(P, D) with phase(x) = P(x) / D mod 1, P in 0..D-1."""
    D = 1
    for a in alpha:
        D = lcm(D, a.denominator)
    A = [int(a * D) % D for a in alpha]
    n = len(pts)
    if D < 2**31:
        P = np.zeros(n, dtype=np.int64)
        for Ai, f in zip(A, sys.forms):
            if Ai:
                P = (P + Ai * f.evaluate_array(pts, modulus=D)) % D
        return P, D
    P = np.zeros(n, dtype=object)
    for Ai, f in zip(A, sys.forms):
        if Ai:
            vals = f.evaluate_array(pts).astype(object)
            P = (P + Ai * vals) % D
    return P, D


def _unit_phases(P, D: int) -> np.ndarray:
    if P.dtype == object:
        shift = max(D.bit_length() - 60, 0)
        scaled = np.array([int(v) >> shift for v in P], dtype=np.float64)
        t = scaled / float(D >> shift)
    else:
        t = P.astype(np.float64) / float(D)
    return np.exp(1j * TWO_PI * t)


def eval_f(sys: TdiSystem, alpha, X, limit: int = 10**9) -> complex:
    """f(alpha; X) = sum over 1 <= x <= X of e(sum alpha_i F_i(x))."""
    a = _check_alpha(sys, alpha)
    Xi = int(math.floor(X))
    d = sys.dimension
    if Xi < 1:
        return 0j
    if Xi**d > limit:
        raise BudgetExceeded(f"X^d = {Xi ** d} summands exceed {limit}")
    total = 0j
    axis = np.arange(1, Xi + 1, dtype=np.int64)
    # chunk along the first coordinate so memory stays bounded
    rows_per = max(1, SUM_CHUNK // max(1, Xi ** (d - 1)))
    for start in range(0, Xi, rows_per):
        first = axis[start:start + rows_per]
        grids = np.meshgrid(first, *([axis] * (d - 1)), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        P, D = _phase_numerators(sys, a, pts)
        total += complex(np.sum(_unit_phases(P, D)))
    return total


def complete_sum_S(sys: TdiSystem, q: int, a: Sequence[int], limit: int = 10**8) -> complex:
    """S(q, a) = sum over x in [1, q]^d of e(sum a_i F_i(x) / q)."""
    q = int(q)
    if q < 1:
        raise DomainError("q must be positive")
    if len(a) != sys.rank:
        raise DimensionError(f"a must have length {sys.rank}")
    if q**sys.dimension > limit:
        raise BudgetExceeded(f"q^d = {q ** sys.dimension} exceeds {limit}")
    if q == 1:
        return 1 + 0j
    pts = box_points(q, sys.dimension)
    P = np.zeros(len(pts), dtype=np.int64)
    for ai, f in zip(a, sys.forms):
        ai = int(ai) % q
        if ai:
            P = (P + ai * f.evaluate_array(pts, modulus=q)) % q
    hist = np.bincount(P, minlength=q)
    roots = np.exp(1j * TWO_PI * np.arange(q) / q)
    return complex(np.dot(hist.astype(np.float64), roots))


def all_complete_sums(sys: TdiSystem, q: int, limit: int = 10**7) -> np.ndarray:
    """Array of S(q, b) for every b in [0, q)^r, indexed by b."""
    r = sys.rank
    if q**r > limit or q**sys.dimension > limit:
        raise BudgetExceeded("too many complete sums")
    pts = box_points(q, sys.dimension)
    vals = np.stack([f.evaluate_array(pts, modulus=q) for f in sys.forms], axis=1)
    hist = np.zeros((q,) * r, dtype=np.float64)
    np.add.at(hist, tuple(vals[:, j] for j in range(r)), 1.0)
    return np.fft.ifftn(hist) * q**r


def oscillatory_v(sys: TdiSystem, beta, X, grid: int, limit: int = 10**8) -> complex:
    """Midpoint tensor quadrature of v(beta) = integral over [0, X]^d of e(sum beta_i F_i)."""
    b = [float(v) for v in beta]
    if len(b) != sys.rank:
        raise DimensionError(f"beta must have length {sys.rank}")
    d = sys.dimension
    Xf = float(X)
    vol = Xf**d
    if all(v == 0 for v in b):
        return complex(vol)
    grid = int(grid)
    if grid < 1:
        raise DomainError("grid must be positive")
    if grid**d > limit:
        raise BudgetExceeded(f"grid^d = {grid ** d} exceeds {limit}")
    h = Xf / grid
    axis = (np.arange(grid, dtype=np.float64) + 0.5) * h
    total = 0j
    rows_per = max(1, SUM_CHUNK // max(1, grid ** (d - 1)))
    for start in range(0, grid, rows_per):
        grids = np.meshgrid(axis[start:start + rows_per], *([axis] * (d - 1)), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        phase = np.zeros(len(pts))
        for bi, f in zip(b, sys.forms):
            if bi:
                phase += bi * f.evaluate_float(pts)
        phase = np.mod(phase, 1.0)
        total += complex(np.sum(np.exp(1j * TWO_PI * phase)))
    return total / grid**d * vol


@dataclass(frozen=True)
class RationalPoint:
    q: int
    a: tuple

    def __post_init__(self):
        if self.q < 1:
            raise DomainError("q must be positive")
        g = self.q
        for v in self.a:
            g = gcd(g, int(v))
        if g != 1:
            raise DomainError(f"gcd(q, a) = {g}, expected 1")

    def as_fractions(self) -> list:
        return [Fraction(int(v), self.q) for v in self.a]


def major_arc_V(sys: TdiSystem, alpha, rp: RationalPoint, X, grid: int) -> complex:
    """V(alpha; q, a) = q^{-d} S(q, a) v(alpha - a/q)."""
    a = _check_alpha(sys, alpha)
    beta = [float(x - y) for x, y in zip(a, rp.as_fractions())]
    S = complete_sum_S(sys, rp.q, rp.a)
    return S / rp.q**sys.dimension * oscillatory_v(sys, beta, X, grid)


# arcs and rational approximation

@dataclass(frozen=True)
class ArcLabel:
    kind: str  # "major" or "minor"
    theta: float
    point: RationalPoint | None = None
    errors: tuple | None = None  # |q alpha_i - a_i| as Fractions


def _theta_qmax(X, theta) -> int:
    """Largest integer q with q <= X^theta."""
    Xi = X
    qmax = int(math.floor(float(Xi) ** float(theta) + 1e-9))
    if isinstance(theta, Fraction) and isinstance(X, int):
        num, den = theta.numerator, theta.denominator
        while (qmax + 1) ** den <= X**num:
            qmax += 1
        while qmax > 0 and qmax**den > X**num:
            qmax -= 1
    else:
        while qmax > 0 and qmax > float(Xi) ** float(theta):
            qmax -= 1
    return qmax


def _in_box(alpha: list, q: int, a: Sequence[int], bounds: Sequence[float]) -> tuple | None:
    errs = tuple(abs(q * x - ai) for x, ai in zip(alpha, a))
    if all(e <= b for e, b in zip(errs, bounds)):
        return errs
    return None


def _nearest_candidates(v: Fraction, q: int) -> list:
    lo = math.floor(v)
    out = [lo, lo + 1]
    return [c for c in out if 0 <= c <= q]


def classify_arc(sys: TdiSystem, alpha, X, theta) -> ArcLabel:
    """Major if some box |q alpha_i - a_i| <= X^(theta - k_i), q <= X^theta, gcd(q, a) = 1 holds."""
    if not (0 < theta <= 1):
        raise DomainError("theta must lie in (0, 1]")
    a = [x - math.floor(x) for x in _check_alpha(sys, alpha)]
    bounds = [float(X) ** (float(theta) - k) for k in sys.degrees]
    qmax = _theta_qmax(X, theta)
    for q in range(1, qmax + 1):
        cands = [_nearest_candidates(q * x, q) for x in a]
        for choice in product(*cands):
            g = q
            for v in choice:
                g = gcd(g, v)
            if g != 1:
                continue
            errs = _in_box(a, q, choice, bounds)
            if errs is not None:
                label = ArcLabel("major", float(theta), RationalPoint(q, tuple(choice)), errs)
                _verify_major(label, a, X, theta, sys)
                return label
    return ArcLabel("minor", float(theta))


def _verify_major(label: ArcLabel, alpha, X, theta, sys):
    rp = label.point
    assert 1 <= rp.q <= float(X) ** float(theta) + 1e-9
    for x, ai, k in zip(alpha, rp.a, sys.degrees):
        assert 0 <= ai <= rp.q
        assert abs(rp.q * x - ai) <= float(X) ** (float(theta) - k)


@dataclass(frozen=True)
class ApproxCertificate:
    point: RationalPoint
    errors: tuple  # exact |q alpha_i - a_i|
    bounds: tuple  # Y X^{-k_i}
    method: str

    def verify(self, alpha) -> bool:
        a = _exact(alpha)
        return all(abs(self.point.q * x - ai) == e and e <= b
                   for x, ai, e, b in zip(a, self.point.a, self.errors, self.bounds))


def _convergent_denominators(x: Fraction, limit: int) -> list:
    out = []
    h0, h1 = 0, 1
    k0, k1 = 1, 0
    v = x
    while True:
        ai = math.floor(v)
        h0, h1 = h1, ai * h1 + h0
        k0, k1 = k1, ai * k1 + k0
        if k1 > limit:
            break
        out.append(k1)
        frac = v - ai
        if frac == 0:
            break
        v = 1 / frac
    return out


def _best_a(alpha: list, q: int) -> tuple:
    return tuple(int(round(q * x)) for x in alpha)


def rational_approx_search(sys: TdiSystem, alpha, X, Y) -> ApproxCertificate | None:
    """Least q <= Y with |q alpha_i - a_i| <= Y X^{-k_i} for all i, with exact errors.

    Convergent denominators of each coordinate and their lcm combinations
    are tried first; an exhaustive pass over smaller q then certifies
    minimality.
    """
    if Y < 1:
        raise DomainError("Y must be at least 1")
    Yi = int(math.floor(Y))
    a = _check_alpha(sys, alpha)
    bounds = tuple(Fraction(Y) / Fraction(X) ** k for k in sys.degrees)

    def check(q):
        ai = _best_a(a, q)
        errs = tuple(abs(q * x - v) for x, v in zip(a, ai))
        if all(e <= b for e, b in zip(errs, bounds)):
            return ai, errs
        return None

    found = None
    method = "exhaustive"
    per_coord = [_convergent_denominators(x, Yi) for x in a]
    combos = set()
    for choice in product(*[[1] + c for c in per_coord]):
        q = 1
        for v in choice:
            q = lcm(q, v)
        if q <= Yi:
            combos.add(q)
    for q in sorted(combos):
        res = check(q)
        if res is not None:
            found = (q, *res)
            method = "convergent-lcm"
            break
    top = found[0] - 1 if found else Yi
    # exhaustive minimality pass; a float filter with generous slack, then exact check
    if top >= 1:
        qs = np.arange(1, top + 1, dtype=np.float64)
        ok = np.ones(top, dtype=bool)
        for x, b in zip(a, bounds):
            prod_ = qs * float(x)
            dist = np.abs(prod_ - np.round(prod_))
            ok &= dist <= float(b) * (1 + 1e-9) + 1e-12 * qs
        for q in (np.nonzero(ok)[0] + 1):
            res = check(int(q))
            if res is not None:
                found = (int(q), *res)
                method = "exhaustive"
                break
    if found is None:
        return None
    q, ai, errs = found
    return ApproxCertificate(RationalPoint(q, ai), errs, bounds, method)


# singular series and orthogonality

def truncated_singular_series(sys: TdiSystem, coeffs, Q_max: int, limit: int = 10**7) -> tuple:
    """Partial sum over q <= Q_max of sum_{(q,a)=1} q^{-sd} prod_j S(q, c_j a).

    Returns (real part, last increment, imaginary part); the imaginary part
    should vanish up to rounding.
    """
    r = sys.rank
    c = np.asarray(coeffs, dtype=object)
    if c.ndim == 1:
        c = np.tile(c[None, :], (r, 1))
    if c.shape[0] != r:
        raise InputError(f"coefficients must be a length-s vector or an {r} x s matrix")
    s = c.shape[1]
    d = sys.dimension
    total = 0j
    last = 0j
    for q in range(1, int(Q_max) + 1):
        if q == 1:
            inc = 1 + 0j
        else:
            if q**r > limit:
                raise BudgetExceeded(f"q^r = {q ** r} exceeds {limit}")
            table = all_complete_sums(sys, q, limit)
            idx = np.indices((q,) * r).reshape(r, -1).T
            g = np.full(len(idx), q, dtype=np.int64)
            for j in range(r):
                g = np.gcd(g, idx[:, j])
            idx = idx[g == 1]
            term = np.ones(len(idx), dtype=complex)
            for j in range(s):
                b = np.mod(idx * np.array([int(v) for v in c[:, j]], dtype=np.int64)[None, :], q)
                term *= table[tuple(b[:, i] for i in range(r))]
            inc = complex(term.sum()) / float(q) ** (s * d)
        total += inc
        last = inc
    return total.real, last.real, total.imag


def orthogonality_quadrature(sys: TdiSystem, s: int, X) -> float:
    """Quadrature of |f(alpha)|^{2s} over [0,1)^r on a grid fine enough to be exact."""
    Xi = int(math.floor(X))
    pts = box_points(Xi, sys.dimension)
    vals = np.stack([f.evaluate_array(pts) for f in sys.forms], axis=1).astype(np.int64)
    sizes = [2 * s * int(np.abs(vals[:, j]).max()) + 1 for j in range(sys.rank)]
    if math.prod(sizes) > 10**7:
        raise BudgetExceeded("quadrature grid too large")
    axes = [(np.arange(n, dtype=np.float64) + 0.5) / n for n in sizes]
    grids = np.meshgrid(*axes, indexing="ij")
    alphas = np.stack([g.ravel() for g in grids], axis=1)
    acc = 0.0
    step = max(1, 2**22 // max(1, len(vals)))
    for start in range(0, len(alphas), step):
        phase = np.mod(alphas[start:start + step] @ vals.T.astype(np.float64), 1.0)
        f = np.exp(1j * TWO_PI * phase).sum(axis=1)
        acc += float(np.sum(np.abs(f) ** (2 * s)))
    return acc / len(alphas)


def scan_alphas(sys: TdiSystem, grid: int) -> list:
    """Frequency vectors (j_1/grid, ..., j_r/grid) as exact Fractions, in lexicographic order."""
    return [tuple(Fraction(j, grid) for j in js) for js in product(range(grid), repeat=sys.rank)]
