import itertools
import random
from collections import Counter

import numpy as np
import pytest

from tdimv.counting import (CountTable, base_distribution, classify_solution, convolve, count_Js,
                            count_Js_bruteforce, count_Ns_general, count_singular_tuples, fit_exponent,
                            lower_bound_terms, parsell_lower_exponents, projection_bounds, value_distribution,
                            value_distribution_sequential)
from tdimv.errors import BudgetExceeded, InputError
from tdimv.polycore import evaluate, parse_polynomial
from tdimv.tdisys import Family, TdiSystem, build_family, find_sigma, jacobian_delta, orthogonal_projection

VIN2 = build_family("vinogradov", k=2)


def values(sys, x):
    return tuple(int(evaluate(f, x)) for f in sys.forms)


def points(X, d):
    return list(itertools.product(range(1, X + 1), repeat=d))


def naive_dist(sys, s, X):
    """Pure-Python tabulation of sum F(x_i) over all s-tuples."""
    one = [values(sys, x) for x in points(X, sys.dimension)]
    c = Counter()
    for tup in itertools.product(one, repeat=s):
        c[tuple(map(sum, zip(*tup)))] += 1
    return dict(c)


def naive_N(forms, coeffs, X, box="positive"):
    d = forms[0].dimension
    rng = range(1, X + 1) if box == "positive" else range(-X, X + 1)
    pts = list(itertools.product(rng, repeat=d))
    vals = [[int(evaluate(f, x)) for f in forms] for x in pts]
    s = len(coeffs)
    total = 0
    for tup in itertools.product(range(len(pts)), repeat=s):
        if all(sum(coeffs[j] * vals[tup[j]][i] for j in range(s)) == 0 for i in range(len(forms))):
            total += 1
    return total


# distributions

def test_distribution_examples():
    assert base_distribution(VIN2, 2).to_dict() == {(1, 1): 1, (2, 4): 1}
    d2 = value_distribution(VIN2, 2, 2)
    assert d2.to_dict() == {(2, 2): 1, (3, 5): 2, (4, 8): 1}
    assert d2.total == 4


@pytest.mark.parametrize("fam,s,X", [("vinogradov k=2", 3, 4), ("vinogradov k=3", 2, 5),
                                     ("parsell d=2 k=2", 2, 3), ("akc d=2 l=1", 3, 2),
                                     ("binary k1=1 k2=1", 2, 3)])
def test_distribution_matches_naive(fam, s, X):
    sys = Family.parse(fam).build()
    dist = value_distribution(sys, s, X)
    assert dist.to_dict() == naive_dist(sys, s, X)
    assert dist.total == X ** (s * sys.dimension)
    assert dist == value_distribution_sequential(sys, s, X)


def test_doubling_equals_sequential_larger():
    rng = random.Random(11)
    for fam in ("vinogradov k=2", "vinogradov k=3", "parsell d=2 k=2", "akc d=2 l=1"):
        sys = Family.parse(fam).build()
        for _ in range(3):
            s, X = rng.randint(2, 5), rng.randint(2, 6)
            a = value_distribution(sys, s, X)
            assert a == value_distribution_sequential(sys, s, X)
            assert a.total == X ** (s * sys.dimension)


def random_table(rng, r, n, spread):
    keys = np.array([[rng.randint(-spread, spread) for _ in range(r)] for _ in range(n)], dtype=np.int64)
    counts = np.array([rng.randint(1, 5) for _ in range(n)], dtype=np.int64)
    return CountTable(keys, counts)


def test_convolution_methods_agree():
    rng = random.Random(12)
    for _ in range(20):
        r = rng.randint(1, 3)
        a = random_table(rng, r, rng.randint(1, 40), rng.choice([3, 50, 10**6]))
        b = random_table(rng, r, rng.randint(1, 40), rng.choice([3, 50, 10**6]))
        want = Counter()
        for ka, ca in a.items():
            for kb, cb in b.items():
                want[tuple(x + y for x, y in zip(ka, kb))] += ca * cb
        for method in ("sparse", "dict"):
            assert convolve(a, b, method=method).to_dict() == dict(want)
        if max(abs(int(v)) for v in np.concatenate([a.keys.ravel(), b.keys.ravel()])) < 1000:
            assert convolve(a, b, method="dense").to_dict() == dict(want)


def test_thread_count_does_not_change_tables():
    sys = build_family("parsell", d=2, k=2)
    one = value_distribution(sys, 3, 4, threads=1)
    four = value_distribution(sys, 3, 4, threads=4)
    assert one == four
    assert one.dump() == four.dump()


def test_dump_format():
    text = value_distribution(VIN2, 2, 2).dump()
    assert text == "2,2,1\n3,5,2\n4,8,1\n"


# J_s

def test_js_examples():
    assert count_Js(VIN2, 2, 10) == 190 == 2 * 10**2 - 10
    assert count_Js(VIN2, 2, 2) == 6
    assert count_Js_bruteforce(VIN2, 1, 5) == 5
    for X in range(1, 8):
        assert count_Js(build_family("vinogradov", k=3), 1, X) == X


def test_js_multiset_formula():
    # for (z, z^2) with s=2 solutions are permutations: J = 2X^2 - X
    for X in range(1, 15):
        assert count_Js(VIN2, 2, X) == 2 * X * X - X


@pytest.mark.parametrize("fam,s,X", [("vinogradov k=2", 3, 5), ("vinogradov k=3", 3, 4),
                                     ("parsell d=2 k=2", 2, 4), ("akc d=2 l=1", 2, 5)])
def test_js_engine_vs_bruteforce(fam, s, X):
    sys = Family.parse(fam).build()
    assert count_Js(sys, s, X) == count_Js_bruteforce(sys, s, X)


def test_bruteforce_refuses_large():
    with pytest.raises(BudgetExceeded):
        count_Js_bruteforce(VIN2, 6, 100)


def test_js_properties():
    for fam in ("vinogradov k=2", "parsell d=2 k=2", "akc d=2 l=1"):
        sys = Family.parse(fam).build()
        d = sys.dimension
        prev = 0
        for X in range(1, 5):
            for s in (1, 2):
                J = count_Js(sys, s, X)
                dist = value_distribution(sys, s, X)
                assert J * len(dist) >= (X ** (s * d)) ** 2  # Cauchy-Schwarz
                assert count_Js(sys, s + 1, X) <= X ** (2 * d) * J
            J1 = count_Js(sys, 2, X)
            assert J1 >= prev
            prev = J1


def test_large_s_exact():
    # values checked against the independent sequential build
    assert count_Js(VIN2, 6, 8) == 185121960
    assert value_distribution(VIN2, 6, 8) == value_distribution_sequential(VIN2, 6, 8)


# general counts

def test_ns_examples():
    z = [parse_polynomial("z")]
    assert count_Ns_general(z, [1, -1], 4) == 4
    assert count_Ns_general(z, [1, 1, -1, -1], 2) == naive_N(z, [1, 1, -1, -1], 2) == 6


def test_ns_uniform_signs_equal_js():
    for fam in ("vinogradov k=2", "parsell d=2 k=2"):
        sys = Family.parse(fam).build()
        for t in (1, 2):
            for X in (2, 3):
                c = [1] * t + [-1] * t
                assert count_Ns_general(sys, c, X) == count_Js(sys, t, X)


def test_ns_against_naive():
    rng = random.Random(13)
    sys = build_family("vinogradov", k=2)
    for _ in range(10):
        s = rng.randint(2, 4)
        c = [rng.choice([-3, -2, -1, 1, 2, 3]) for _ in range(s)]
        box = rng.choice(["positive", "symmetric"])
        X = 3 if box == "positive" else 2
        assert count_Ns_general(sys, c, X, box=box) == naive_N(list(sys.forms), c, X, box)
    mat = [[1, 2, -3], [1, -1, 1]]
    akc = build_family("akc", d=2, l=1)
    with pytest.raises(InputError):
        count_Ns_general(akc, mat, 2)
    mat = [[1, 1, -2], [2, -1, -1], [1, 1, -1]]
    got = count_Ns_general(akc, mat, 2, box="symmetric")
    want = 0
    pts = list(itertools.product(range(-2, 3), repeat=2))
    for tup in itertools.product(pts, repeat=3):
        if all(sum(mat[i][j] * int(evaluate(f, tup[j])) for j in range(3)) == 0
               for i, f in enumerate(akc.forms)):
            want += 1
    assert got == want


def test_ns_zero_coefficient():
    with pytest.raises(InputError):
        count_Ns_general(VIN2, [1, 0], 3)


# lower bounds

def test_parsell_exponents():
    assert parsell_lower_exponents(2, 2, 2) == {"sd": 4, 1: 2, 2: 0}


def test_lower_bound_examples():
    terms = {t.label: t for t in lower_bound_terms(VIN2, 2, 3)}
    assert terms["diagonal"].value == 9 and terms["diagonal"].certified
    assert not terms["typical"].certified
    par = build_family("parsell", d=2, k=2)
    proj = dict(projection_bounds(par, 1, 3))
    assert proj[(1,)] == 3 * 3 == proj[(2,)]
    assert count_Js_bruteforce(par, 1, 3) >= 9


def test_certified_terms_hold():
    for fam in ("vinogradov k=2", "parsell d=2 k=2", "akc d=2 l=1", "parsell d=3 k=2"):
        sys = Family.parse(fam).build()
        for s in (1, 2):
            for X in (2, 3):
                J = count_Js(sys, s, X)
                for t in lower_bound_terms(sys, s, X):
                    if t.certified:
                        assert t.value <= J
                for idx, v in projection_bounds(sys, s, X):
                    assert v == X * count_Js(orthogonal_projection(sys, idx), s, X)
                    assert v <= J


# fitting

def test_fit_examples():
    assert abs(fit_exponent([(4, 4**5), (8, 8**5), (16, 16**5)]).slope - 5) < 1e-9
    assert abs(fit_exponent([(2, 7), (3, 7), (5, 7)]).slope) < 1e-12
    with pytest.raises(InputError):
        fit_exponent([(2, 1), (3, 0), (4, 1)])
    with pytest.raises(InputError):
        fit_exponent([(2, 1), (3, 2)])
    with pytest.raises(InputError):
        fit_exponent([(4, 1), (3, 2), (5, 3)])


# singular tuples

def naive_singular(sys, sigma, t, A):
    pts = points(A, sys.dimension)
    r = sys.rank
    total = 0
    for tup in itertools.product(pts, repeat=t):
        if all(jacobian_delta(sys, sigma, [tup[i] for i in sel]) == 0
               for sel in itertools.permutations(range(t), r)):
            total += 1
    return total


def test_singular_examples():
    sig = find_sigma(VIN2)
    assert count_singular_tuples(VIN2, sig, 1, 5) == 5
    assert count_singular_tuples(VIN2, sig, 2, 3) == 3
    akc = build_family("akc", d=2, l=1)
    assert count_singular_tuples(akc, find_sigma(akc), 2, 3) == 81


@pytest.mark.parametrize("fam,t,A", [("vinogradov k=2", 3, 4), ("vinogradov k=3", 3, 4),
                                     ("akc d=2 l=1", 3, 2), ("binary k1=1 k2=1", 3, 2)])
def test_singular_against_naive(fam, t, A):
    sys = Family.parse(fam).build()
    sig = find_sigma(sys)
    assert count_singular_tuples(sys, sig, t, A) == naive_singular(sys, sig, t, A)


def test_singular_prime_field_contains_rational():
    sys = build_family("vinogradov", k=3)
    sig = find_sigma(sys)
    over_q = count_singular_tuples(sys, sig, 3, 6)
    mod_p = count_singular_tuples(sys, sig, 3, 6, field=5)
    assert mod_p >= over_q
    # mod 5: Vandermonde-type determinant vanishes iff two points agree mod 5
    want = sum(1 for tup in itertools.product(range(1, 7), repeat=3)
               if jacobian_delta(sys, sig, [(v,) for v in tup]) % 5 == 0)
    assert mod_p == want


def test_singular_growth():
    sys = build_family("akc", d=2, l=1)
    sig = find_sigma(sys)
    t = 3
    exp = t * (sys.dimension - 1) + sys.rank - 1
    counts = [count_singular_tuples(sys, sig, t, A) for A in (2, 4, 8)]
    for a, b in zip(counts, counts[1:]):
        assert b <= 2**exp * 4 * a


# classification

def test_classify_examples():
    diag = classify_solution([(2,), (2,), (2,), (2,)], VIN2, [1, 1, -1, -1])
    assert diag.diagonal and diag.projected
    sub = classify_solution([(1,), (1,), (3,), (3,)], VIN2, [1, -1, 1, -1])
    assert sub.subset_sum and not sub.diagonal
    assert sorted(map(sorted, sub.partition)) == [[1, 2], [3, 4]]
    lin = [parse_polynomial("z1 - z2")]
    proj = classify_solution([(1, 1), (2, 2), (3, 3)], lin, [1, 1, -2])
    assert proj.projected and not proj.diagonal


def test_classify_generic_and_errors():
    par = build_family("parsell", d=2, k=1)
    sol = [(1, 1), (3, 2), (2, 3), (2, 3), (3, 2), (1, 1)]
    cl = classify_solution(sol, par, [1, 1, 1, -1, -1, -1])
    assert cl.subset_sum and not cl.projected
    with pytest.raises(InputError):
        classify_solution([(1,), (2,)], VIN2, [1, -1])
    with pytest.raises(BudgetExceeded):
        classify_solution([(1,)] * 14, VIN2, [1, -1] * 7)
    with pytest.raises(InputError):
        classify_solution([(1,), (1,)], VIN2, [1])


def test_classify_generic_solution():
    # a genuine non-trivial solution of x1 + x2 + x3 = y1 + y2 + y3 and squares (Prouhet-style)
    sol = [(1,), (5,), (6,), (2,), (3,), (7,)]
    assert sum(v[0] for v in sol[:3]) == sum(v[0] for v in sol[3:])
    assert sum(v[0] ** 2 for v in sol[:3]) == sum(v[0] ** 2 for v in sol[3:])
    cl = classify_solution(sol, VIN2, [1, 1, 1, -1, -1, -1])
    assert cl.generic and cl.labels == ["generic"]
    assert not cl.projected and not cl.subset_sum


def test_classify_diagonal_always_projected():
    for fam in ("parsell d=2 k=2", "akc d=2 l=1", "parsell d=3 k=2"):
        sys = Family.parse(fam).build()
        y = tuple(range(1, sys.dimension + 1))
        assert classify_solution([y] * 4, sys, [1, -1, 1, -1]).projected


def test_single_linear_form():
    sys = TdiSystem([parse_polynomial("z")])
    # sums 2..6 occur 1, 2, 3, 2, 1 times
    assert count_Js(sys, 2, 3) == 19 == count_Js_bruteforce(sys, 2, 3)
