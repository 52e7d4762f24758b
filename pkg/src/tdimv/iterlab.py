"""Exact simulation of the congruencing parameter iteration.

With s = r k the sequences are

    a_{n+1} = b_n,                    b_{n+1} = k b_n + h_n,
    psi_{n+1} = (s/r) psi_n + (s/r - 1) b_n,
    c_{n+1} = (s/r)(c_n + 1),         gamma_{n+1} = (s/r) gamma_n + (2s - r + 1) h_n,

starting from a_0 = 0, b_0 = 1, psi_0 = 0, c_0 = 1, gamma_0 = 0.
The free choices h_n in [0, (k - 1) b_n] come from a policy.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .errors import DomainError, InputError


@dataclass(frozen=True)
class IterationParams:
    r: int
    k: int
    N: int
    policy: str = "zero"  # zero | max | list | random
    values: tuple = ()  # h_n for the list policy
    seed: int | None = None  # for the random policy

    def __post_init__(self):
        if self.r < 2:
            raise InputError("r must be at least 2")
        if self.k < 2:
            raise InputError("k must be at least 2")
        if self.N < 1:
            raise InputError("N must be positive")
        if self.policy not in ("zero", "max", "list", "random"):
            raise InputError(f"unknown policy {self.policy!r}")
        if self.policy == "random" and self.seed is None:
            raise InputError("the random policy needs a seed")

    @property
    def s(self) -> int:
        return self.r * self.k

    @classmethod
    def parse_policy(cls, r: int, k: int, N: int, text: str, seed: int | None = None) -> "IterationParams":
        """Build from 'zero', 'max', 'random' or 'list:1,0,2'."""
        if text.startswith("list:"):
            body = text[5:]
            try:
                vals = tuple(int(v) for v in body.split(",") if v.strip())
            except ValueError:
                raise InputError(f"bad h list {body!r}") from None
            return cls(r, k, N, "list", vals)
        return cls(r, k, N, text, seed=seed)


@dataclass(frozen=True)
class Theta:
    """theta = N^{-1/2} (r/s)^{N+2}, kept symbolically."""

    N: int
    base: Fraction
    exponent: int

    @property
    def squared(self) -> Fraction:
        return self.base ** (2 * self.exponent) / self.N

    def __float__(self):
        return float(self.base) ** self.exponent / math.sqrt(self.N)

    def less_than(self, x) -> bool:
        """Exact test theta < x for a non-negative rational x."""
        x = Fraction(x)
        return x > 0 and self.squared < x * x


@dataclass
class IterationTrace:
    params: IterationParams
    a: list = field(default_factory=list)
    b: list = field(default_factory=list)
    h: list = field(default_factory=list)  # h_n for 0 <= n < N
    psi: list = field(default_factory=list)
    c: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    theta: Theta | None = None

    def rows(self) -> list:
        out = []
        for n in range(self.params.N + 1):
            out.append({
                "n": n,
                "a": self.a[n],
                "b": self.b[n],
                "h": self.h[n] if n < len(self.h) else None,
                "psi": self.psi[n],
                "c": self.c[n],
                "gamma": self.gamma[n],
            })
        return out


def _policy(params: IterationParams) -> Callable[[int, int], int]:
    k = params.k
    if params.policy == "zero":
        return lambda n, b: 0
    if params.policy == "max":
        return lambda n, b: (k - 1) * b
    if params.policy == "list":
        vals = params.values
        if len(vals) < params.N:
            raise InputError(f"h list has {len(vals)} entries, need {params.N}")
        return lambda n, b: vals[n]
    rng = random.Random(params.seed)
    return lambda n, b: rng.randint(0, (k - 1) * b)


def theta_of(params: IterationParams) -> Theta:
    return Theta(params.N, Fraction(params.r, params.s), params.N + 2)


def run_iteration(params: IterationParams) -> IterationTrace:
    r, k, s = params.r, params.k, params.s
    ratio = Fraction(s, r)
    pick = _policy(params)
    tr = IterationTrace(params, [0], [1], [], [Fraction(0)], [Fraction(1)], [Fraction(0)])
    for n in range(params.N):
        b = tr.b[-1]
        h = int(pick(n, b))
        if not (0 <= h <= (k - 1) * b):
            raise InputError(f"h_{n} = {h} outside [0, {(k - 1) * b}]")
        tr.h.append(h)
        tr.a.append(b)
        tr.b.append(k * b + h)
        tr.psi.append(ratio * tr.psi[-1] + (ratio - 1) * b)
        tr.c.append(ratio * (tr.c[-1] + 1))
        tr.gamma.append(ratio * tr.gamma[-1] + (2 * s - r + 1) * h)
    tr.theta = theta_of(params)
    return tr


@dataclass
class ClosedFormReport:
    gamma_violations: list = field(default_factory=list)  # steps where the closed form fails
    c_closed_violations: list = field(default_factory=list)
    c_bound_violations: list = field(default_factory=list)
    b_lower_violations: list = field(default_factory=list)
    b_sqrtN_violations: list = field(default_factory=list)  # reported only
    psi_lower_violations: list = field(default_factory=list)  # checked for the zero policy only

    @property
    def ok(self) -> bool:
        """All identities and unconditional bounds hold (the sqrt(N) bound is informational)."""
        return not (self.gamma_violations or self.c_closed_violations or self.c_bound_violations
                    or self.b_lower_violations or self.psi_lower_violations)


def verify_closed_forms(trace: IterationTrace) -> ClosedFormReport:
    p = trace.params
    r, k, s, N = p.r, p.k, p.s, p.N
    ratio = Fraction(s, r)
    rep = ClosedFormReport()
    for n in range(N + 1):
        pw = ratio**n
        if trace.gamma[n] != (2 * s - r + 1) * (trace.b[n] - pw):
            rep.gamma_violations.append(n)
        if trace.c[n] != Fraction(2 * s - r, s - r) * pw - Fraction(s, s - r):
            rep.c_closed_violations.append(n)
        if trace.c[n] > 3 * pw:
            rep.c_bound_violations.append(n)
        if trace.b[n] < k**n:
            rep.b_lower_violations.append(n)
        # b_n < sqrt(N) (s/r)^n, compared on squares
        if not (trace.b[n] ** 2 < N * pw * pw):
            rep.b_sqrtN_violations.append(n)
        if p.policy == "zero" and n >= 1 and trace.psi[n] < n * (k - 1) * k ** (n - 1):
            rep.psi_lower_violations.append(n)
    return rep


@dataclass(frozen=True)
class EtaBound:
    """The bound r k^4 / sqrt(N), held as numerator and N."""

    numerator: int
    N: int

    @property
    def exact(self) -> Fraction | None:
        """Exact value when N is a perfect square, else None."""
        root = math.isqrt(self.N)
        return Fraction(self.numerator, root) if root * root == self.N else None

    @property
    def squared(self) -> Fraction:
        return Fraction(self.numerator**2, self.N)

    def __float__(self):
        return self.numerator / math.sqrt(self.N)

    def __lt__(self, other: "EtaBound") -> bool:
        return self.squared < other.squared

    def __eq__(self, other):
        if isinstance(other, EtaBound):
            return self.squared == other.squared
        ex = self.exact
        return ex is not None and ex == other


def eta_bound(r: int, k: int, N: int) -> EtaBound:
    if min(r, k, N) < 1:
        raise DomainError("arguments must be positive")
    return EtaBound(r * k**4, N)


def delta_budget(N: int, s: int) -> Fraction:
    """The upper limit (N s)^{-3N} imposed on delta."""
    return Fraction(1, (N * s) ** (3 * N))


def random_suite(runs: int = 50, seed: int = 0, max_r: int = 4, max_k: int = 4, max_N: int = 30) -> list:
    """Parameter sets for a randomized-policy suite."""
    rng = random.Random(seed)
    out = []
    for _ in range(runs):
        r = rng.randint(2, max_r)
        k = rng.randint(2, max_k)
        N = rng.randint(1, max_N)
        out.append(IterationParams(r, k, N, "random", seed=rng.randrange(2**31)))
    return out


def render(v) -> str:
    """Exact rendering p/q for rationals (integers as n/1)."""
    if v is None:
        return ""
    f = Fraction(v)
    return f"{f.numerator}/{f.denominator}"
