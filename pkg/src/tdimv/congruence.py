"""p-adic congruence counts: the non-singular solution set B and Hensel-type counts.

Residues follow the convention 1 <= z <= modulus; they are converted from
the 0-based numpy arithmetic only at the boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from itertools import product
from math import prod
from typing import Sequence

import numpy as np

from ._linalg import batched_det_mod, batched_det_mod_prime
from .counting import box_points
from .errors import BudgetExceeded, DimensionError, DomainError, InputError
from .polycore import Polynomial, parse_polynomial, partial_derivative
from .tdisys import Family, SigmaMap, TdiSystem, find_sigma, jacobian_delta, verify_translation_invariance

ENUM_BUDGET = 10**8


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


@dataclass
class CongruenceInstance:
    system: TdiSystem
    signs: tuple
    p: int
    a: int
    b: int
    m: tuple | None = None
    xi: tuple | None = None
    eta: tuple | None = None
    sigma: SigmaMap | None = None

    def __post_init__(self):
        sys = self.system
        self.signs = tuple(int(v) for v in self.signs)
        if len(self.signs) != sys.rank or any(v not in (1, -1) for v in self.signs):
            raise InputError(f"signs must be a vector of +1/-1 of length {sys.rank}")
        if not is_prime(int(self.p)):
            raise DomainError(f"{self.p} is not prime")
        if not (self.b > self.a >= 0):
            raise DomainError("levels must satisfy b > a >= 0")
        d = sys.dimension
        self.xi = tuple(self.xi) if self.xi is not None else (0,) * d
        self.eta = tuple(self.eta) if self.eta is not None else (0,) * d
        if len(self.xi) != d or len(self.eta) != d:
            raise DimensionError(f"base points must have dimension {d}")
        if self.m is not None:
            self.m = tuple(int(v) for v in self.m)
            if len(self.m) != sys.rank:
                raise DimensionError(f"target must have length {sys.rank}")
        if self.sigma is None:
            self.sigma = find_sigma(sys)

    @property
    def moduli(self) -> tuple:
        return tuple(self.p ** (k * self.b) for k in self.system.degrees)

    @property
    def singular_modulus(self) -> int:
        sys = self.system
        return self.p ** ((sys.weight - sys.rank) * self.a + 1)


def _point_grid(inst: CongruenceInstance) -> np.ndarray:
    """All z in [1, p^{kb}]^d with z = xi (mod p^a)."""
    sys = inst.system
    top = inst.p ** (sys.degree * inst.b)
    step = inst.p**inst.a
    axes = []
    for x in inst.xi:
        start = int(x) % step
        vals = np.arange(start, top, step, dtype=np.int64)
        vals[vals == 0] = top
        axes.append(np.sort(vals))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _nonsingular_mask(inst: CongruenceInstance, pts: np.ndarray) -> np.ndarray:
    """Flat mask over ordered r-tuples of points: Delta(z) is non-zero mod p^{(K-r)a+1}."""
    sys = inst.system
    r = sys.rank
    n = len(pts)
    M = inst.singular_modulus
    if M >= 2**31:
        raise BudgetExceeded("singular modulus too large for int64 determinants")
    table = sys.derivative_table()
    rows = []
    for h in range(sys.dimension):
        cols = [table[h][j].evaluate_array(pts, modulus=M) if not table[h][j].is_zero() else np.zeros(n, dtype=np.int64)
                for j in range(r)]
        rows.append(np.stack(cols, axis=1))
    sig = inst.sigma
    idx_all = np.indices((n,) * r).reshape(r, -1).T if n**r <= 4 * 10**6 else None
    out = np.empty(n**r, dtype=bool)
    chunk = max(1, 2**21 // max(1, r * r))
    total = n**r
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk), dtype=np.int64)
        if idx_all is not None:
            idx = idx_all[start:start + chunk]
        else:
            idx = np.empty((flat.size, r), dtype=np.int64)
            rem = flat
            for i in range(r - 1, -1, -1):
                idx[:, i] = rem % n
                rem = rem // n
        mats = np.stack([rows[sig[i] - 1][idx[:, i]] for i in range(r)], axis=1)
        if M == inst.p:
            det = batched_det_mod_prime(mats, M)
        elif r <= 7:
            det = batched_det_mod(mats, M)
        else:
            raise BudgetExceeded("composite singular modulus with r > 7 is not supported")
        out[flat] = det % M != 0
    return out


def _value_residues(inst: CongruenceInstance, pts: np.ndarray, eta) -> np.ndarray:
    """(n, r) residues of F_j(z - eta) modulo p^{k_j b}, in 0..modulus-1."""
    shifted = pts - np.asarray(eta, dtype=np.int64)[None, :]
    cols = []
    for f, mod in zip(inst.system.forms, inst.moduli):
        cols.append(f.evaluate_array(shifted, modulus=mod))
    return np.stack(cols, axis=1)


def _budget(inst: CongruenceInstance) -> int:
    sys = inst.system
    return inst.p ** ((sys.degree * inst.b - inst.a) * sys.rank * sys.dimension)


class _Prepared:
    """Grid and non-singularity mask shared by every (signs, eta, m) query."""

    def __init__(self, inst: CongruenceInstance, budget: int = ENUM_BUDGET):
        if not inst.system.integral:
            raise DomainError("integer forms required")
        size = _budget(inst)
        if size > budget:
            raise BudgetExceeded(f"p^((kb-a)rd) = {size} exceeds budget {budget}")
        self.inst = inst
        self.pts = _point_grid(inst)
        self.mask = _nonsingular_mask(inst, self.pts)

    def histogram(self, signs, eta) -> np.ndarray:
        """Counts indexed by the packed residue vector of sum sigma_i F(z_i - eta)."""
        inst = self.inst
        r = inst.system.rank
        n = len(self.pts)
        mods = inst.moduli
        vals = _value_residues(inst, self.pts, eta)
        vol = prod(mods)
        strides = [prod(mods[j + 1:]) for j in range(r)]
        hist = np.zeros(vol, dtype=np.int64) if vol <= 10**8 else None
        if hist is None:
            raise BudgetExceeded("residue space too large for a histogram")
        total = n**r
        chunk = max(1, 2**21)
        for start in range(0, total, chunk):
            flat = np.arange(start, min(total, start + chunk), dtype=np.int64)
            keep = self.mask[flat]
            if not keep.any():
                continue
            flat = flat[keep]
            acc = np.zeros((flat.size, r), dtype=np.int64)
            rem = flat
            for i in range(r - 1, -1, -1):
                pi = rem % n
                rem = rem // n
                acc += signs[i] * vals[pi]
            key = np.zeros(flat.size, dtype=np.int64)
            for j in range(r):
                key += np.mod(acc[:, j], mods[j]) * strides[j]
            hist += np.bincount(key, minlength=vol)
        return hist

    def pack(self, m) -> int:
        mods = self.inst.moduli
        key = 0
        for v, mod in zip(m, mods):
            key = key * mod + int(v) % mod
        return key

    def unpack(self, key: int) -> tuple:
        out = []
        for mod in reversed(self.inst.moduli):
            key, v = divmod(int(key), mod)
            out.append(v if v else mod)
        return tuple(reversed(out))


def count_B(inst: CongruenceInstance, budget: int = ENUM_BUDGET) -> int:
    """Exact size of the set B for the instance's target m."""
    if inst.m is None:
        raise InputError("instance has no target m")
    prep = _Prepared(inst, budget)
    return int(prep.histogram(inst.signs, inst.eta)[prep.pack(inst.m)])


def count_B_all(inst: CongruenceInstance, budget: int = ENUM_BUDGET) -> dict:
    """Map from every target m (residues in 1..modulus) to the size of B."""
    prep = _Prepared(inst, budget)
    hist = prep.histogram(inst.signs, inst.eta)
    return {prep.unpack(k): int(hist[k]) for k in np.nonzero(hist)[0]}


def admissible_count(inst: CongruenceInstance, budget: int = ENUM_BUDGET) -> int:
    """Number of tuples meeting the box, residue and non-singularity conditions."""
    prep = _Prepared(inst, budget)
    return int(prep.mask.sum())


def congruence_bound(sys: TdiSystem, p: int, a: int, b: int):
    """k_1 ... k_r * p^((kb - a) r d - K (b - a)); a Fraction if the exponent is negative."""
    if not (b > a >= 0):
        raise DomainError("levels must satisfy b > a >= 0")
    e = (sys.degree * b - a) * sys.rank * sys.dimension - sys.weight * (b - a)
    lead = prod(sys.degrees)
    return lead * p**e if e >= 0 else Fraction(lead, p**-e)


def transform_target(inst: CongruenceInstance, w: Sequence[int]) -> tuple:
    """Target m' such that B(m'; eta + p^b w) has the same size as B(m; eta).

    Uses F(x - u) = C(-u) F(x) + c0(-u) with u = p^b w, where the entries
    of C(-u) below the diagonal carry enough powers of p.
    """
    sys = inst.system
    u = [-(inst.p**inst.b) * int(v) for v in w]
    C, c0 = verify_translation_invariance(sys, u)
    tot = sum(inst.signs)
    out = []
    for j in range(sys.rank):
        v = sum(C[j, l] * inst.m[l] for l in range(sys.rank)) + tot * c0[j]
        if Fraction(v).denominator != 1:
            raise DomainError("translation matrix is not integral")
        mod = inst.moduli[j]
        out.append(int(v) % mod or mod)
    return tuple(out)


def verify_delta_scaling(sys: TdiSystem, sigma, t: int, points, xi) -> bool:
    """Check Delta(t z_1 + xi, ..., t z_r + xi) = t^(K-r) Delta(z_1, ..., z_r) exactly."""
    moved = [[t * Fraction(v) + Fraction(x) for v, x in zip(z, xi)] for z in points]
    lhs = jacobian_delta(sys, sigma, moved)
    rhs = Fraction(t) ** (sys.weight - sys.rank) * jacobian_delta(sys, sigma, points)
    return lhs == rhs


# Hensel-type counts

@dataclass
class HenselInstance:
    polys: list
    prime: int
    level: int
    label: str = ""
    expected: int | None = field(default=None, compare=False)

    def __post_init__(self):
        t = len(self.polys)
        if t < 1:
            raise InputError("need at least one polynomial")
        if any(p.dimension != t for p in self.polys):
            raise DimensionError("need t polynomials in t variables")
        if self.level < 1:
            raise DomainError("level must be at least 1")
        if not is_prime(int(self.prime)):
            raise DomainError(f"{self.prime} is not prime")
        for p in self.polys:
            p.integer_terms()

    @property
    def degrees(self) -> tuple:
        return tuple(max(p.degree(), 0) for p in self.polys)

    @property
    def bound(self) -> int:
        return prod(self.degrees)


def hensel_count(inst: HenselInstance, budget: int = ENUM_BUDGET) -> int:
    """Solutions of f_j = 0 mod varpi^l in [1, varpi^l]^t with Jacobian prime to varpi."""
    t = len(inst.polys)
    q = inst.prime**inst.level
    if q**t > budget:
        raise BudgetExceeded(f"varpi^(lt) = {q ** t} exceeds budget {budget}")
    if q >= 3_000_000_000:
        raise BudgetExceeded("modulus too large")
    derivs = [[partial_derivative(f, i) for i in range(1, t + 1)] for f in inst.polys]
    total = 0
    n = q**t
    chunk = 2**20
    for start in range(0, n, chunk):
        flat = np.arange(start, min(n, start + chunk), dtype=np.int64)
        pts = np.empty((flat.size, t), dtype=np.int64)
        rem = flat
        for i in range(t - 1, -1, -1):
            pts[:, i] = rem % q + 1
            rem = rem // q
        ok = np.ones(flat.size, dtype=bool)
        for f in inst.polys:
            ok &= f.evaluate_array(pts, modulus=q) == 0
        if not ok.any():
            continue
        sub = pts[ok]
        # matrix entry (i, j) = d f_j / d x_i
        mats = np.stack(
            [np.stack([derivs[j][i].evaluate_array(sub, modulus=inst.prime) if not derivs[j][i].is_zero()
                       else np.zeros(len(sub), dtype=np.int64) for j in range(t)], axis=1) for i in range(t)],
            axis=1,
        )
        det = batched_det_mod_prime(mats, inst.prime)
        total += int(np.count_nonzero(det))
    return total


def hensel_count_naive(inst: HenselInstance) -> int:
    """Plain loop reference for small instances."""
    from ._linalg import det_int

    t = len(inst.polys)
    q = inst.prime**inst.level
    derivs = [[partial_derivative(f, i) for i in range(1, t + 1)] for f in inst.polys]
    total = 0
    for x in product(range(1, q + 1), repeat=t):
        if all(f.evaluate(x) % q == 0 for f in inst.polys):
            jac = det_int([[int(derivs[j][i].evaluate(x)) for j in range(t)] for i in range(t)])
            if jac % inst.prime:
                total += 1
    return total


# manifests

def _load_json(name: str, path=None):
    if path is not None:
        with open(path) as fh:
            return json.load(fh)
    return json.loads(resources.files("tdimv.data").joinpath(name).read_text())


def load_hensel_manifest(path=None) -> list:
    data = _load_json("hensel_manifest.json", path)
    out = []
    for item in data["instances"]:
        t = len(item["polys"])
        polys = [parse_polynomial(s, t) for s in item["polys"]]
        out.append(HenselInstance(polys, int(item["prime"]), int(item["level"]), item.get("label", ""), item.get("expected")))
    return out


@dataclass
class SweepEntry:
    family: Family
    p: int
    a: int
    b: int
    etas: list


def load_congruence_manifest(path=None) -> list:
    data = _load_json("congruence_manifest.json", path)
    out = []
    for item in data["entries"]:
        fam = Family.parse(item["family"])
        out.append(SweepEntry(fam, int(item["p"]), int(item["a"]), int(item["b"]), [tuple(e) for e in item["etas"]]))
    return out


@dataclass
class SweepRow:
    family: str
    p: int
    a: int
    b: int
    signs: tuple
    m: tuple
    count: int
    bound: int | Fraction
    ok: bool


def sweep_entry(sys: TdiSystem, entry: SweepEntry, all_m: bool = False, budget: int = ENUM_BUDGET) -> list:
    """Rows for every sign vector: the worst target over all m and etas (or every m)."""
    sigma = find_sigma(sys)
    bound = congruence_bound(sys, entry.p, entry.a, entry.b)
    base = CongruenceInstance(sys, (1,) * sys.rank, entry.p, entry.a, entry.b, sigma=sigma)
    prep = _Prepared(base, budget)
    rows = []
    for signs in product((1, -1), repeat=sys.rank):
        best = None
        per_m: dict = {}
        for eta in entry.etas:
            hist = prep.histogram(signs, eta)
            if all_m:
                for k in np.nonzero(hist)[0]:
                    m = prep.unpack(k)
                    per_m[m] = max(per_m.get(m, 0), int(hist[k]))
            k = int(np.argmax(hist))
            c = int(hist[k])
            if best is None or c > best[1]:
                best = (prep.unpack(k), c)
        if all_m:
            for m in sorted(per_m):
                rows.append(SweepRow(str(entry.family), entry.p, entry.a, entry.b, signs, m, per_m[m], bound,
                                     per_m[m] <= bound))
        else:
            rows.append(SweepRow(str(entry.family), entry.p, entry.a, entry.b, signs, best[0], best[1], bound,
                                 best[1] <= bound))
    return rows
