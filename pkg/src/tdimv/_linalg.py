"""Determinant helpers: exact integer determinants and batched ones mod m."""

from __future__ import annotations

from fractions import Fraction
from itertools import permutations
from typing import Sequence

import numpy as np


def det_int(rows: Sequence[Sequence[int]]) -> int:
    """Exact determinant of an integer matrix (Bareiss, fraction free)."""
    m = [list(map(int, r)) for r in rows]
    n = len(m)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        pk = m[k][k]
        rk = m[k]
        for i in range(k + 1, n):
            ri = m[i]
            aik = ri[k]
            for j in range(k + 1, n):
                ri[j] = (ri[j] * pk - aik * rk[j]) // prev
            ri[k] = 0
        prev = pk
    return sign * m[n - 1][n - 1]


def det_exact(rows: Sequence[Sequence]) -> Fraction | int:
    """Exact determinant; integer matrices go through Bareiss."""
    if all(isinstance(v, int) or (isinstance(v, Fraction) and v.denominator == 1) for r in rows for v in r):
        return det_int([[int(v) for v in r] for r in rows])
    from math import lcm

    den = 1
    for r in rows:
        for v in r:
            den = lcm(den, Fraction(v).denominator)
    scaled = [[int(Fraction(v) * den) for v in r] for r in rows]
    return Fraction(det_int(scaled), den ** len(rows))


def _perm_sign(p) -> int:
    seen = [False] * len(p)
    sign = 1
    for i in range(len(p)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = p[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def batched_det_mod(mats: np.ndarray, modulus: int) -> np.ndarray:
    """Determinants mod ``modulus`` for a stack of integer matrices (n, r, r).

    Leibniz expansion with int64 arithmetic; every product is reduced so
    the modulus must stay below 2^31. Intended for r up to about 7.
    """
    m = int(modulus)
    if m >= 2**31:
        raise ValueError("modulus too large for batched determinant")
    a = np.mod(np.asarray(mats, dtype=np.int64), m)
    n, r, _ = a.shape
    out = np.zeros(n, dtype=np.int64)
    if r == 0:
        return np.ones(n, dtype=np.int64) % m
    for p in permutations(range(r)):
        t = a[:, 0, p[0]].copy()
        for i in range(1, r):
            t = (t * a[:, i, p[i]]) % m
        if _perm_sign(p) > 0:
            out = (out + t) % m
        else:
            out = (out - t) % m
    return out


def batched_det_mod_prime(mats: np.ndarray, p: int) -> np.ndarray:
    """Determinants mod a prime p < 2^31 by vectorised Gaussian elimination."""
    a = np.mod(np.asarray(mats, dtype=np.int64), p).copy()
    n, r, _ = a.shape
    det = np.ones(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    rows = np.arange(n)
    for c in range(r):
        col = a[:, c:, c]
        nz = col != 0
        has = nz.any(axis=1)
        alive &= has
        piv = c + np.argmax(nz, axis=1)
        swap = piv != c
        if swap.any():
            idx = rows[swap]
            tmp = a[idx, c, :].copy()
            a[idx, c, :] = a[idx, piv[swap], :]
            a[idx, piv[swap], :] = tmp
            det[swap] = (-det[swap]) % p
        pv = a[:, c, c]
        pv_safe = np.where(pv == 0, 1, pv)
        det = (det * pv_safe) % p
        inv = np.array([pow(int(v), p - 2, p) for v in pv_safe], dtype=np.int64) if n else pv_safe
        for i in range(c + 1, r):
            f = (a[:, i, c] * inv) % p
            a[:, i, c:] = (a[:, i, c:] - (f[:, None] * a[:, c, c:]) % p) % p
    return np.where(alive, det, 0)
