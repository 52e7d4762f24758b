"""Exact counting of solutions: value distributions, J_s, general weighted counts.

The main object is CountTable, the multiplicity map v -> N(v) of value
vectors. Tables are combined by convolution; depending on the size of the
result box this runs as an exact FFT on a dense array, as a chunked
pairwise sum of packed integer keys, or (for huge values) as a dict loop.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.fft

from ._linalg import batched_det_mod_prime
from .errors import BudgetExceeded, DomainError, InputError, InvariantViolation
from .polycore import Polynomial, RationalMatrix
from .tdisys import SigmaMap, TdiSystem, orthogonal_projection, parsell_weight

INT_SAFE = 2**62
DENSE_LIMIT = 2**24  # cells in a dense FFT convolution
PAIR_CHUNK = 2**22  # pairwise sums materialised at once
MAX_PAIRS = 4 * 10**9


def _int64_ok(arr) -> bool:
    return arr.dtype != object


def _sort_rows(keys: np.ndarray) -> np.ndarray:
    """Permutation sorting the rows of ``keys`` lexicographically."""
    if keys.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if _int64_ok(keys):
        return np.lexsort(keys.T[::-1])
    rows = [tuple(int(v) for v in row) for row in keys]
    return np.array(sorted(range(len(rows)), key=rows.__getitem__), dtype=np.int64)


class CountTable:
    """Immutable multiplicity map from integer vectors to positive counts.

    ``keys`` is an (n, r) integer array with rows in lexicographic order and
    ``counts`` the matching positive multiplicities. Either array falls back
    to Python integers (object dtype) when int64 could overflow.
    """

    __slots__ = ("keys", "counts", "rank", "_total", "_index")

    def __init__(self, keys: np.ndarray, counts: np.ndarray, rank: int | None = None, _canonical: bool = False):
        keys = np.asarray(keys)
        counts = np.asarray(counts)
        if keys.ndim != 2:
            raise InputError("keys must be a 2-d array")
        self.rank = keys.shape[1] if rank is None else rank
        if not _canonical:
            keys, counts = _aggregate(keys, counts)
        self.keys = keys
        self.counts = counts
        self.keys.setflags(write=False)
        self.counts.setflags(write=False)
        self._total = None
        self._index = None

    @classmethod
    def from_values(cls, values: np.ndarray) -> "CountTable":
        """Histogram of the rows of ``values``."""
        values = np.asarray(values)
        return cls(values, np.ones(values.shape[0], dtype=np.int64))

    @classmethod
    def from_dict(cls, mapping: dict, rank: int) -> "CountTable":
        items = [(k, v) for k, v in mapping.items() if v]
        if not items:
            return cls(np.zeros((0, rank), dtype=np.int64), np.zeros(0, dtype=np.int64), rank, True)
        keys = _int_array([k for k, _ in items])
        counts = _int_array([v for _, v in items])
        return cls(keys.reshape(len(items), rank), counts, rank)

    def __len__(self) -> int:
        return self.keys.shape[0]

    @property
    def support(self) -> int:
        return len(self)

    @property
    def total(self) -> int:
        if self._total is None:
            c = self.counts
            if c.dtype != object and (c.size == 0 or int(c.max()) * c.size < INT_SAFE):
                self._total = int(c.sum(dtype=np.int64))
            else:
                self._total = sum(int(v) for v in c)
        return self._total

    def _lookup(self) -> dict:
        if self._index is None:
            self._index = {tuple(int(v) for v in k): int(c) for k, c in zip(self.keys, self.counts)}
        return self._index

    def __getitem__(self, key) -> int:
        return self._lookup().get(tuple(int(v) for v in key), 0)

    def get(self, key, default=0):
        return self._lookup().get(tuple(int(v) for v in key), default)

    def __contains__(self, key) -> bool:
        return tuple(int(v) for v in key) in self._lookup()

    def items(self):
        for k, c in zip(self.keys, self.counts):
            yield tuple(int(v) for v in k), int(c)

    def to_dict(self) -> dict:
        return dict(self._lookup())

    def __eq__(self, other):
        if not isinstance(other, CountTable):
            return NotImplemented
        if len(self) != len(other) or self.rank != other.rank:
            return False
        return all(a == b for a, b in zip(self.items(), other.items()))

    def __repr__(self):
        return f"<CountTable rank={self.rank} support={len(self)} total={self.total}>"

    def square_sum(self) -> int:
        """Exact sum of squared multiplicities."""
        c = self.counts
        if c.size == 0:
            return 0
        if c.dtype != object:
            m = int(c.max())
            if m * m * c.size < INT_SAFE:
                return int(np.dot(c, c))
        return int(sum(int(v) * int(v) for v in c))

    def dot_reflected(self, other: "CountTable") -> int:
        """Sum over v of self[v] * other[-v]."""
        return join_count(self, other, negate=True)

    def negated(self) -> "CountTable":
        return CountTable(-self.keys, self.counts, self.rank)

    def scaled(self, weights: Sequence[int]) -> "CountTable":
        """Table of the vectors (w_1 v_1, ..., w_r v_r)."""
        w = _int_array(list(weights))
        keys = self.keys * w[None, :] if _int64_ok(self.keys) and _fits(self.keys, w) else (
            self.keys.astype(object) * w.astype(object)[None, :]
        )
        return CountTable(keys, self.counts, self.rank)

    def dump(self) -> str:
        """Sorted text lines ``v1,...,vr,count``."""
        return "".join(",".join(str(v) for v in k) + f",{c}\n" for k, c in self.items())


def _fits(keys, w) -> bool:
    if keys.size == 0:
        return True
    return int(np.abs(keys).max()) * int(np.abs(w).max()) < INT_SAFE


def _int_array(values) -> np.ndarray:
    """int64 array, or object array of Python ints when values are too large."""
    arr_obj = np.asarray(values, dtype=object)
    flat = [int(v) for v in arr_obj.ravel()]
    if flat and max(abs(v) for v in flat) >= INT_SAFE:
        out = np.empty(len(flat), dtype=object)
        out[:] = flat
        return out.reshape(arr_obj.shape)
    return np.array(flat, dtype=np.int64).reshape(arr_obj.shape)


def _aggregate(keys: np.ndarray, counts: np.ndarray):
    """Sort rows, merge duplicates and drop zero counts."""
    n = keys.shape[0]
    if n == 0:
        return keys.astype(np.int64) if keys.dtype != object else keys, counts.astype(np.int64)
    order = _sort_rows(keys)
    keys = keys[order]
    counts = counts[order]
    if n > 1:
        diff = np.any(keys[1:] != keys[:-1], axis=1)
        starts = np.concatenate(([0], np.nonzero(diff)[0] + 1))
    else:
        starts = np.array([0])
    if len(starts) < n:
        counts = np.add.reduceat(counts, starts)
        keys = keys[starts]
    keep = counts != 0
    if not keep.all():
        keys, counts = keys[keep], counts[keep]
    return np.ascontiguousarray(keys), np.ascontiguousarray(counts)


# packing of vectors into single integers (mixed radix, first component most significant)

class _Radix:
    def __init__(self, lo: Sequence[int], hi: Sequence[int]):
        self.lo = [int(v) for v in lo]
        self.sizes = [int(h) - int(l) + 1 for l, h in zip(lo, hi)]
        self.volume = math.prod(self.sizes)
        strides = []
        acc = 1
        for s in reversed(self.sizes):
            strides.append(acc)
            acc *= s
        self.strides = list(reversed(strides))

    @property
    def packable(self) -> bool:
        return self.volume < INT_SAFE

    def pack(self, keys: np.ndarray, offset: Sequence[int]) -> np.ndarray:
        """Pack rows of ``keys - offset`` (each component within this radix)."""
        out = np.zeros(keys.shape[0], dtype=np.int64)
        for j, st in enumerate(self.strides):
            out += (keys[:, j].astype(np.int64) - int(offset[j])) * st
        return out

    def unpack(self, packed: np.ndarray) -> np.ndarray:
        r = len(self.sizes)
        out = np.empty((packed.shape[0], r), dtype=np.int64)
        rem = packed.copy()
        for j, st in enumerate(self.strides):
            out[:, j] = rem // st
            rem -= out[:, j] * st
        lo = np.array(self.lo, dtype=object)
        if any(abs(l) + s >= INT_SAFE for l, s in zip(self.lo, self.sizes)):
            return out.astype(object) + lo[None, :]
        return out + np.array(self.lo, dtype=np.int64)[None, :]


def _bounds(t: CountTable):
    if len(t) == 0:
        return [0] * t.rank, [0] * t.rank
    lo = [int(v) for v in t.keys.min(axis=0)]
    hi = [int(v) for v in t.keys.max(axis=0)]
    return lo, hi


def _reduce_sorted(keys: np.ndarray, weights: np.ndarray):
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    weights = weights[order]
    if keys.size == 0:
        return keys, weights
    starts = np.concatenate(([0], np.nonzero(keys[1:] != keys[:-1])[0] + 1))
    return keys[starts], np.add.reduceat(weights, starts)


def _fft_error_bound(a: np.ndarray, b: np.ndarray) -> float:
    n = a.size + b.size
    na = float(np.sqrt(np.sum(a.astype(np.float64) ** 2)))
    nb = float(np.sqrt(np.sum(b.astype(np.float64) ** 2)))
    return 16.0 * np.finfo(float).eps * max(math.log2(n), 1.0) * na * nb


def _split_limbs(a: np.ndarray, bits: int) -> list:
    limbs = []
    rest = a.copy()
    mask = (1 << bits) - 1
    while True:
        limbs.append(rest & mask)
        rest >>= bits
        if not rest.any():
            return limbs


def _fft_convolve_exact(a: np.ndarray, b: np.ndarray, shape: tuple, workers: int) -> np.ndarray:
    """Exact linear convolution of non-negative int64 arrays via float FFT.

    The arrays are split into limbs until the rounding error bound of every
    limb product is below 1/4, so rounding recovers the integers exactly.
    """
    fshape = tuple(scipy.fft.next_fast_len(s, real=True) for s in shape)
    bits = 62
    while True:
        la = _split_limbs(a, bits)
        lb = _split_limbs(b, bits)
        worst = max(_fft_error_bound(x, y) for x in la for y in lb)
        if worst < 0.25:
            break
        if bits <= 8:
            raise InvariantViolation("FFT convolution cannot reach exactness")
        bits = max(8, bits // 2) if bits > 24 else bits - 4
    axes = tuple(range(len(shape)))
    fa = [scipy.fft.rfftn(x.astype(np.float64), s=fshape, axes=axes, workers=workers) for x in la]
    fb = fa if b is a else [scipy.fft.rfftn(y.astype(np.float64), s=fshape, axes=axes, workers=workers) for y in lb]
    if b is a:
        lb = la
    out = np.zeros(shape, dtype=np.int64)
    for i, x in enumerate(fa):
        for j, y in enumerate(fb):
            part = scipy.fft.irfftn(x * y, s=fshape, axes=axes, workers=workers)
            part = part[tuple(slice(0, s) for s in shape)]
            out += np.rint(part).astype(np.int64) << (bits * (i + j))
    return out


def _dense_array(t: CountTable, lo, sizes) -> np.ndarray:
    arr = np.zeros(sizes, dtype=np.int64)
    idx = tuple((t.keys[:, j].astype(np.int64) - lo[j]) for j in range(t.rank))
    arr[idx] = t.counts
    return arr


def _convolve_dense(a: CountTable, b: CountTable, threads: int) -> CountTable:
    loa, hia = _bounds(a)
    lob, hib = _bounds(b)
    sa = [h - l + 1 for l, h in zip(loa, hia)]
    sb = [h - l + 1 for l, h in zip(lob, hib)]
    shape = tuple(x + y - 1 for x, y in zip(sa, sb))
    da = _dense_array(a, loa, sa)
    db = da if b is a else _dense_array(b, lob, sb)
    res = _fft_convolve_exact(da, db, shape, threads)
    nz = np.nonzero(res)
    keys = np.stack(nz, axis=1).astype(np.int64) + np.array([x + y for x, y in zip(loa, lob)], dtype=np.int64)
    counts = res[nz]
    return CountTable(keys, counts, a.rank, _canonical=True)


def _pair_block(pa, ca, pb, cb):
    keys = (pa[:, None] + pb[None, :]).ravel()
    if ca.dtype == object or cb.dtype == object:
        w = (ca.astype(object)[:, None] * cb.astype(object)[None, :]).ravel()
    else:
        w = (ca[:, None] * cb[None, :]).ravel()
    return _reduce_sorted(keys, w)


def _convolve_sparse(a: CountTable, b: CountTable, radix: _Radix, threads: int) -> CountTable:
    loa, _ = _bounds(a)
    lob, _ = _bounds(b)
    # pack each operand relative to its own minimum; sums land in the result radix
    pa = radix.pack(a.keys, loa)
    pb = radix.pack(b.keys, lob)
    ca, cb = a.counts, b.counts
    if len(a) < len(b):
        pa, pb, ca, cb = pb, pa, cb, ca
    rows = max(1, PAIR_CHUNK // max(1, len(pb)))
    chunks = [(i, min(i + rows, len(pa))) for i in range(0, len(pa), rows)]

    def work(bounds):
        i, j = bounds
        return _pair_block(pa[i:j], ca[i:j], pb, cb)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = None
    acc_k, acc_w, acc_n = [], [], 0
    for idx, bounds in enumerate(chunks):
        k, w = results[idx] if results is not None else work(bounds)
        acc_k.append(k)
        acc_w.append(w)
        acc_n += k.size
        if acc_n > 4 * PAIR_CHUNK:
            k, w = _reduce_sorted(np.concatenate(acc_k), np.concatenate(acc_w))
            acc_k, acc_w, acc_n = [k], [w], k.size
    if acc_k:
        keys, w = _reduce_sorted(np.concatenate(acc_k), np.concatenate(acc_w))
    else:
        keys, w = np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    out = radix.unpack(keys)
    return CountTable(out, w, a.rank, _canonical=True)


def _convolve_dict(a: CountTable, b: CountTable) -> CountTable:
    acc: dict = {}
    bi = list(b.items())
    for ka, va in a.items():
        for kb, vb in bi:
            key = tuple(x + y for x, y in zip(ka, kb))
            acc[key] = acc.get(key, 0) + va * vb
    return CountTable.from_dict(acc, a.rank)


def convolve(a: CountTable, b: CountTable, threads: int = 1, method: str = "auto") -> CountTable:
    """Table of v + w with multiplicity a[v] * b[w], summed."""
    if a.rank != b.rank:
        raise InputError("tables of different rank")
    if len(a) == 0 or len(b) == 0:
        return CountTable(np.zeros((0, a.rank), dtype=np.int64), np.zeros(0, dtype=np.int64), a.rank, True)
    mass = a.total * b.total
    loa, hia = _bounds(a)
    lob, hib = _bounds(b)
    radix = _Radix([x + y for x, y in zip(loa, lob)], [x + y for x, y in zip(hia, hib)])
    int_counts = mass < INT_SAFE and a.counts.dtype != object and b.counts.dtype != object
    if method == "auto":
        if int_counts and radix.volume <= DENSE_LIMIT and radix.volume <= 64 * len(a) * len(b):
            method = "dense"
        elif radix.packable and a.keys.dtype != object and b.keys.dtype != object:
            method = "sparse"
        else:
            method = "dict"
    if method == "dense":
        out = _convolve_dense(a, b, threads)
    elif method == "sparse":
        if len(a) * len(b) > MAX_PAIRS:
            raise BudgetExceeded(f"convolution needs {len(a) * len(b)} pair sums", progress=f"supports {len(a)} and {len(b)}")
        out = _convolve_sparse(a, b, radix, threads)
    elif method == "dict":
        if len(a) * len(b) > MAX_PAIRS // 100:
            raise BudgetExceeded("dictionary convolution too large")
        out = _convolve_dict(a, b)
    else:
        raise InputError(f"unknown convolution method {method!r}")
    if out.total != mass:
        raise InvariantViolation("convolution lost mass")
    return out


def join_count(a: CountTable, b: CountTable, negate: bool = False) -> int:
    """Sum of a[v] * b[v] (or b[-v] when ``negate``)."""
    if len(a) == 0 or len(b) == 0:
        return 0
    bk = -b.keys if negate else b.keys
    if a.keys.dtype != object and bk.dtype != object:
        lo = np.minimum(a.keys.min(axis=0), bk.min(axis=0))
        hi = np.maximum(a.keys.max(axis=0), bk.max(axis=0))
        radix = _Radix(lo, hi)
        if radix.packable:
            pa = radix.pack(a.keys, radix.lo)
            pb = radix.pack(bk, radix.lo)
            _, ia, ib = np.intersect1d(pa, pb, assume_unique=True, return_indices=True)
            return int(sum(int(x) * int(y) for x, y in zip(a.counts[ia], b.counts[ib])))
    bd = {tuple(int(v) for v in k): int(c) for k, c in zip(bk, b.counts)}
    return sum(c * bd.get(k, 0) for k, c in a.items())


# box enumeration

def box_points(X: int, d: int, box: str = "positive") -> np.ndarray:
    """All integer points of [1, X]^d (positive) or [-X, X]^d (symmetric)."""
    X = int(X)
    if box == "positive":
        axis = np.arange(1, X + 1, dtype=np.int64)
    elif box == "symmetric":
        axis = np.arange(-X, X + 1, dtype=np.int64)
    else:
        raise InputError(f"unknown box {box!r}")
    if axis.size == 0:
        return np.zeros((0, d), dtype=np.int64)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _form_values(forms: Sequence[Polynomial], points: np.ndarray) -> np.ndarray:
    cols = [f.evaluate_array(points) for f in forms]
    if any(c.dtype == object for c in cols):
        return np.stack([c.astype(object) for c in cols], axis=1)
    return np.stack(cols, axis=1)


def _check_X(X) -> int:
    Xf = math.floor(X)
    if Xf < 1:
        raise DomainError("X must be at least 1")
    return int(Xf)


def base_distribution(sys: TdiSystem, X) -> CountTable:
    X = _check_X(X)
    if X**sys.dimension > 10**8:
        raise BudgetExceeded(f"box has {X ** sys.dimension} points")
    pts = box_points(X, sys.dimension)
    return CountTable.from_values(_form_values(sys.forms, pts))


def table_power(base: CountTable, s: int, threads: int = 1) -> CountTable:
    """s-fold convolution power by binary doubling."""
    if s < 1:
        raise DomainError("s must be positive")
    cur = base
    for bit in bin(s)[3:]:
        try:
            cur = convolve(cur, cur, threads)
            if bit == "1":
                cur = convolve(cur, base, threads)
        except BudgetExceeded as exc:
            raise BudgetExceeded(str(exc), progress=f"reached {cur.total} tuples") from None
    return cur


def value_distribution(sys: TdiSystem, s: int, X, threads: int = 1) -> CountTable:
    """Multiplicities of sum_{i<=s} F(x_i) over 1 <= x_i <= X."""
    return table_power(base_distribution(sys, X), int(s), threads)


def value_distribution_sequential(sys: TdiSystem, s: int, X, threads: int = 1) -> CountTable:
    base = base_distribution(sys, X)
    cur = base
    for _ in range(int(s) - 1):
        cur = convolve(cur, base, threads)
    return cur


def count_Js(sys: TdiSystem, s: int, X, threads: int = 1) -> int:
    """J_s(X; F) as the sum of squared multiplicities of the s-fold distribution."""
    return value_distribution(sys, s, X, threads).square_sum()


def count_Js_bruteforce(sys: TdiSystem, s: int, X, limit: int = 10**9) -> int:
    """Direct count of (x, y) with sum F(x_i) = sum F(y_i), no hashing or convolution.

    All s-tuples are tabulated and compared pairwise in chunks.
    """
    X = _check_X(X)
    d = sys.dimension
    if X ** (2 * s * d) > limit:
        raise BudgetExceeded(f"X^(2sd) = {X ** (2 * s * d)} exceeds {limit}")
    one = _form_values(sys.forms, box_points(X, d))
    tup = one
    for _ in range(s - 1):
        tup = (tup[:, None, :] + one[None, :, :]).reshape(-1, one.shape[1])
    n = tup.shape[0]
    total = 0
    step = max(1, 2**22 // max(1, n * tup.shape[1]))
    for i in range(0, n, step):
        block = tup[i:i + step]
        eq = np.all(block[:, None, :] == tup[None, :, :], axis=2)
        total += int(eq.sum())
    return total


def count_Ns_general(
    system: TdiSystem | Sequence[Polynomial],
    coeffs,
    X,
    box: str = "positive",
    threads: int = 1,
) -> int:
    """Number of (x_1..x_s) in the box with sum_j c_ij F_i(x_j) = 0 for every i.

    ``coeffs`` is an r x s integer matrix, or a length-s vector applied to
    every form. The box is [1, X]^d or, with box='symmetric', [-X, X]^d.
    """
    forms = list(system.forms) if isinstance(system, TdiSystem) else list(system)
    if not forms:
        raise InputError("no forms given")
    d = forms[0].dimension
    r = len(forms)
    c = np.asarray(coeffs, dtype=object)
    if c.ndim == 1:
        c = np.tile(c[None, :], (r, 1))
    if c.ndim != 2 or c.shape[0] != r:
        raise InputError(f"coefficients must be a length-s vector or an {r} x s matrix")
    c = np.vectorize(int, otypes=[object])(c)
    if any(v == 0 for v in c.ravel()):
        raise InputError("all coefficients must be non-zero")
    s = c.shape[1]
    X = _check_X(X)
    pts = box_points(X, d, box)
    if len(pts) > 10**8:
        raise BudgetExceeded("box too large")
    vals = _form_values(forms, pts)
    base = CountTable.from_values(vals)
    columns = [tuple(c[:, j]) for j in range(s)]
    half = (s + 1) // 2
    left = _weighted_product(base, columns[:half], threads)
    if half == s:
        return left[(0,) * r]
    right = _weighted_product(base, columns[half:], threads)
    return join_count(left, right, negate=True)


def _weighted_product(base: CountTable, columns: list, threads: int) -> CountTable:
    groups: dict = {}
    for col in columns:
        groups[col] = groups.get(col, 0) + 1
    out = None
    for col in sorted(groups):
        t = table_power(base.scaled(col), groups[col], threads)
        out = t if out is None else convolve(out, t, threads)
    return out


# lower bounds

class LowerBoundTerm(NamedTuple):
    label: str
    value: int | Fraction
    certified: bool  # True when the value is a proven lower bound with explicit constant


def lower_bound_terms(sys: TdiSystem, s: int, X, threads: int = 1) -> list:
    """Lower-bound witnesses for J_s(X; F).

    ``diagonal`` is floor(X)^{sd}; ``typical`` is X^{2sd-K}, whose constant
    is not explicit, so it is reported uncertified; ``projection delta`` is
    floor(X)^{d-delta} times the largest J_s over delta-dimensional
    projections.
    """
    X = _check_X(X)
    d = sys.dimension
    terms = [
        LowerBoundTerm("diagonal", X ** (s * d), True),
        LowerBoundTerm("typical", Fraction(X) ** (2 * s * d - sys.weight), False),
    ]
    for delta in range(1, d):
        best = 0
        for idx in combinations(range(1, d + 1), delta):
            proj = orthogonal_projection(sys, idx)
            best = max(best, count_Js(proj, s, X, threads))
        terms.append(LowerBoundTerm(f"projection {delta}", X ** (d - delta) * best, True))
    return terms


def projection_bounds(sys: TdiSystem, s: int, X, threads: int = 1) -> list:
    """(indices, floor(X) * J_s(X; H)) for every projection H dropping one coordinate."""
    X = _check_X(X)
    d = sys.dimension
    out = []
    for idx in combinations(range(1, d + 1), d - 1):
        if not idx:
            continue
        proj = orthogonal_projection(sys, idx)
        out.append((idx, X * count_Js(proj, s, X, threads)))
    return out


def parsell_lower_exponents(d: int, k: int, s: int) -> dict:
    """Exponents in the Parsell lower bound: 'sd' and j -> (2s-1)j + d - K_j."""
    out = {"sd": s * d}
    for j in range(1, d + 1):
        out[j] = (2 * s - 1) * j + d - parsell_weight(j, k)
    return out


# exponent fitting

@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual: float
    samples: tuple


def fit_exponent(samples: Iterable) -> FitResult:
    """Least-squares slope of log(count) against log(X)."""
    pts = [(float(x), int(c)) for x, c in samples]
    if len(pts) < 3:
        raise InputError("need at least three samples")
    xs = [x for x, _ in pts]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise InputError("X values must be strictly increasing")
    if any(c <= 0 for _, c in pts) or xs[0] <= 0:
        raise InputError("counts and X must be positive")
    lx = np.log(np.array(xs))
    ly = np.array([math.log(c) for _, c in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return FitResult(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), tuple(pts))


# singular tuples

_PRIMES = (2147483647, 2147483629, 2147483587, 2147483579, 2147483563, 2147483549,
           2147483543, 2147483497, 2147483489, 2147483477, 2147483423, 2147483399)


def _delta_rows(sys: TdiSystem, points: np.ndarray) -> list:
    """rows[h-1] is the (n, r) array of d F_j / d z_h at each point."""
    table = sys.derivative_table()
    out = []
    for h in range(sys.dimension):
        cols = [table[h][j].evaluate_array(points) if not table[h][j].is_zero() else np.zeros(len(points), dtype=np.int64)
                for j in range(sys.rank)]
        out.append(np.stack([np.asarray(cc, dtype=object) for cc in cols], axis=1))
    return out


def delta_zero_mask(sys: TdiSystem, sigma: SigmaMap | Sequence[int], points: np.ndarray, field="rationals") -> np.ndarray:
    """Boolean array over all ordered r-tuples of ``points`` (shape (n,)*r): Delta == 0.

    Over the rationals the test is exact: determinants are taken modulo
    enough large primes that their product exceeds twice the Hadamard bound.
    """
    sig = sigma if isinstance(sigma, SigmaMap) else SigmaMap(tuple(sigma))
    sig.validate(sys.rank, sys.dimension)
    if not sys.integral:
        raise DomainError("integer forms required")
    r = sys.rank
    n = len(points)
    if n**r > 10**7:
        raise BudgetExceeded(f"{n}^{r} point tuples exceed the mask budget")
    rows = _delta_rows(sys, np.asarray(points, dtype=np.int64))
    idx = np.indices((n,) * r).reshape(r, -1).T
    mats = np.stack([rows[sig[i] - 1][idx[:, i]] for i in range(r)], axis=1)  # (N, r, r) object
    if field == "rationals":
        norms = [max(1, int(max(sum(int(v) ** 2 for v in row) for row in rows[h]))) for h in range(sys.dimension)]
        log_bound = sum(0.5 * math.log2(norms[sig[i] - 1]) for i in range(r)) + 1
        need = int(log_bound // 30) + 1
        if need > len(_PRIMES):
            raise BudgetExceeded("determinants too large for the prime set")
        zero = np.ones(mats.shape[0], dtype=bool)
        for p in _PRIMES[:need]:
            m = np.mod(mats, p).astype(np.int64)
            zero &= batched_det_mod_prime(m, p) == 0
        return zero.reshape((n,) * r)
    p = int(field)
    if p < 2 or p >= 2**31 or any(p % q == 0 for q in range(2, int(p**0.5) + 1)):
        raise DomainError("field must be 'rationals' or a prime below 2^31")
    m = np.mod(mats, p).astype(np.int64)
    return (batched_det_mod_prime(m, p) == 0).reshape((n,) * r)


def count_singular_tuples(sys: TdiSystem, sigma, t: int, A: int, field="rationals", limit: int = 10**8) -> int:
    """Number of t-tuples of points of {1..A}^d all of whose r-subtuples have Delta = 0.

    r-subtuples are ordered selections of distinct positions; with t < r
    there are none, so every tuple counts.
    """
    d, r = sys.dimension, sys.rank
    if A ** (t * d) > limit:
        raise BudgetExceeded(f"A^(td) = {A ** (t * d)} exceeds {limit}")
    if t < r:
        return A ** (t * d)
    pts = box_points(A, d)
    n = len(pts)
    mask = delta_zero_mask(sys, sigma, pts, field).ravel()
    strides = [n ** (r - 1 - i) for i in range(r)]
    selections = list(permutations(range(t), r))
    total = 0
    chunk = max(1, 2**20 // t)
    ntup = n**t
    for start in range(0, ntup, chunk):
        flat = np.arange(start, min(ntup, start + chunk), dtype=np.int64)
        digits = np.empty((flat.size, t), dtype=np.int64)
        rem = flat
        for i in range(t - 1, -1, -1):
            digits[:, i] = rem % n
            rem = rem // n
        ok = np.ones(flat.size, dtype=bool)
        for sel in selections:
            lin = np.zeros(flat.size, dtype=np.int64)
            for pos, st in zip(sel, strides):
                lin += digits[:, pos] * st
            ok &= mask[lin]
            if not ok.any():
                break
        total += int(ok.sum())
    return total


# solution classification

@dataclass(frozen=True)
class Classification:
    diagonal: bool
    projected: bool
    subset_sum: bool
    partition: tuple | None  # blocks of 1-based indices, each summing to zero
    generic: bool

    @property
    def labels(self) -> list:
        out = [name for name in ("diagonal", "projected", "subset_sum") if getattr(self, name)]
        return out or ["generic"]


def _weighted_values(forms, points, coeffs) -> list:
    out = []
    for y, c in zip(points, coeffs):
        out.append([int(c) * f.evaluate(y) for f in forms])
    return out


def classify_solution(solution: Sequence[Sequence[int]], system, coeffs: Sequence[int]) -> Classification:
    forms = list(system.forms) if isinstance(system, TdiSystem) else list(system)
    pts = [tuple(int(v) for v in y) for y in solution]
    s = len(pts)
    if s == 0 or len(coeffs) != s:
        raise InputError("need one coefficient per point")
    d = forms[0].dimension
    if any(len(y) != d for y in pts):
        raise InputError(f"points must have dimension {d}")
    w = _weighted_values(forms, pts, coeffs)
    if any(sum(col) != 0 for col in zip(*w)):
        raise InputError("not a solution of the weighted system")
    diagonal = all(y == pts[0] for y in pts)
    if s > 1:
        diffs = RationalMatrix([[a - b for a, b in zip(y, pts[0])] for y in pts[1:]], d)
        projected = diffs.rank() < d
    else:
        projected = True
    if s > 12:
        raise BudgetExceeded("partition search is limited to s <= 12")
    blocks = _split_zero_sum(list(range(s)), w)
    subset = len(blocks) >= 2
    partition = tuple(tuple(i + 1 for i in b) for b in blocks) if subset else None
    return Classification(diagonal, projected, subset, partition, not (projected or subset))


def _zero_subset(idx: list, w: list):
    """Smallest proper non-empty subset of ``idx`` with zero weighted sum, or None."""
    n = len(idx)
    best = None
    for mask in range(1, (1 << n) - 1):
        size = bin(mask).count("1")
        if best is not None and size >= best[0]:
            continue
        sums = [0] * len(w[0])
        for b in range(n):
            if mask >> b & 1:
                for j, v in enumerate(w[idx[b]]):
                    sums[j] += v
        if all(v == 0 for v in sums):
            best = (size, [idx[b] for b in range(n) if mask >> b & 1])
    return None if best is None else best[1]


def _split_zero_sum(idx: list, w: list) -> list:
    """Refine ``idx`` (a zero-sum block) into blocks that cannot be split further."""
    sub = _zero_subset(idx, w)
    if sub is None:
        return [idx]
    rest = [i for i in idx if i not in sub]
    out = _split_zero_sum(sub, w) + _split_zero_sum(rest, w)
    return sorted(out)
