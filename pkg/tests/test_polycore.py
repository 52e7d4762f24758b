import random
from fractions import Fraction

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from tdimv.errors import DimensionError, DomainError, ParseError
from tdimv.polycore import (Ordering, Polynomial, RationalMatrix, colex_compare, dilate, evaluate,
                            format_polynomial, is_rref, parse_polynomial, partial_derivative, rref_inverted,
                            translate)


def P(text, d=None):
    return parse_polynomial(text, d)


def to_sympy(p: Polynomial):
    zs = sympy.symbols(f"z1:{p.dimension + 1}")
    expr = sympy.Integer(0)
    for e, c in p.terms:
        term = sympy.Rational(c.numerator, c.denominator)
        for z, k in zip(zs, e):
            term *= z**k
        expr += term
    return sympy.expand(expr), zs


def from_sympy(expr, zs) -> Polynomial:
    poly = sympy.Poly(expr, *zs)
    return Polynomial(len(zs), [(tuple(m), Fraction(int(c.p), int(c.q))) for m, c in poly.terms()])


def random_poly(rng, d, max_deg=4, n_terms=5):
    terms = []
    for _ in range(n_terms):
        e = tuple(rng.randint(0, max_deg) for _ in range(d))
        terms.append((e, Fraction(rng.randint(-9, 9), rng.randint(1, 4))))
    return Polynomial(d, terms)


exps = st.lists(st.integers(0, 5), min_size=3, max_size=3)


# colex order

def test_colex_examples():
    assert colex_compare((1, 0), (0, 1)) == Ordering.LESS
    assert colex_compare((2, 3), (2, 3)) == Ordering.EQUAL
    assert colex_compare((0, 2), (1, 1)) == Ordering.GREATER


def test_colex_length_mismatch():
    with pytest.raises(DimensionError):
        colex_compare((1,), (1, 2))


@given(exps, exps, exps)
def test_colex_total_order(a, b, c):
    ab, ba = colex_compare(a, b), colex_compare(b, a)
    assert ab == -ba
    assert (ab == Ordering.EQUAL) == (a == b)
    if ab <= 0 and colex_compare(b, c) <= 0:
        assert colex_compare(a, c) <= 0


# arithmetic and calculus

def test_derivative_examples():
    assert partial_derivative(P("z1^2 z2"), 1) == P("2 z1 z2")
    assert partial_derivative(P("z1^2", 2), 2).is_zero()
    assert partial_derivative(P("z1^3 + 3 z1 z2^2"), 1) == P("3 z1^2 + 3 z2^2")


def test_derivative_axis_out_of_range():
    with pytest.raises(DimensionError):
        partial_derivative(P("z1^2 z2"), 3)


def test_translate_examples():
    assert translate(P("z^2"), (0,)) == P("z^2")
    assert translate(P("z^2"), (1,)) == P("z^2 + 2 z + 1")
    assert translate(P("z1 z2"), (1, 2)) == P("z1 z2 + 2 z1 + z2 + 2")


def test_dilate_examples():
    assert dilate(P("z^2"), 1) == P("z^2")
    assert dilate(P("z1 z2"), 2) == P("4 z1 z2")
    assert dilate(P("z^3 + z"), 3) == P("27 z^3 + 3 z")
    with pytest.raises(DomainError):
        dilate(P("z"), 0)


def test_evaluate_examples():
    assert evaluate(P("z1^2 z2"), (2, 3)) == 12
    assert evaluate(Polynomial.zero(3), (1, 2, 3)) == 0
    assert evaluate(P("z1^2 + z2^2"), (3, 4)) == 25
    with pytest.raises(DimensionError):
        evaluate(P("z1 z2"), (1,))


def test_translate_matches_sympy():
    rng = random.Random(1)
    for _ in range(60):
        d = rng.randint(1, 3)
        p = random_poly(rng, d)
        xi = [rng.randint(-5, 5) for _ in range(d)]
        expr, zs = to_sympy(p)
        want = sympy.expand(expr.subs({z: z + v for z, v in zip(zs, xi)}, simultaneous=True))
        assert translate(p, xi) == from_sympy(want, zs)


def test_derivative_matches_sympy():
    rng = random.Random(2)
    for _ in range(60):
        d = rng.randint(1, 3)
        p = random_poly(rng, d)
        expr, zs = to_sympy(p)
        for axis in range(1, d + 1):
            assert partial_derivative(p, axis) == from_sympy(sympy.diff(expr, zs[axis - 1]), zs)


def test_translation_is_group_action():
    rng = random.Random(3)
    for _ in range(200):
        d = rng.randint(1, 3)
        p = random_poly(rng, d, max_deg=3)
        xi = [rng.randint(-4, 4) for _ in range(d)]
        zeta = [rng.randint(-4, 4) for _ in range(d)]
        both = [a + b for a, b in zip(xi, zeta)]
        assert translate(p, both) == translate(translate(p, zeta), xi)
        assert translate(translate(p, xi), [-v for v in xi]) == p


def test_mixed_partials_commute():
    rng = random.Random(4)
    for _ in range(200):
        d = rng.randint(2, 3)
        p = random_poly(rng, d)
        for i in range(1, d + 1):
            for j in range(1, d + 1):
                assert p.derivative(i).derivative(j) == p.derivative(j).derivative(i)


def test_dilation_of_homogeneous():
    rng = random.Random(5)
    for _ in range(50):
        d = rng.randint(1, 3)
        m = rng.randint(1, 4)
        terms = []
        for _ in range(4):
            cuts = sorted(rng.randint(0, m) for _ in range(d - 1))
            e = [b - a for a, b in zip([0] + cuts, cuts + [m])]
            terms.append((tuple(e), rng.randint(-5, 5)))
        p = Polynomial(d, terms)
        for lam in (Fraction(-2), Fraction(-1), Fraction(1, 2), Fraction(3)):
            assert dilate(p, lam) == p * Polynomial.constant(d, lam**m)


def test_ring_operations_match_evaluation():
    rng = random.Random(6)
    for _ in range(50):
        p, q = random_poly(rng, 2), random_poly(rng, 2)
        x = (Fraction(rng.randint(-5, 5), 3), Fraction(rng.randint(-5, 5)))
        assert evaluate(p * q, x) == evaluate(p, x) * evaluate(q, x)
        assert evaluate(p - q, x) == evaluate(p, x) - evaluate(q, x)
        assert evaluate(p**2, x) == evaluate(p, x) ** 2


def test_evaluate_array_agrees_with_exact():
    import numpy as np
    p = P("3 z1^2 z2 - z2^3 + 5")
    pts = np.array([[1, 2], [-3, 4], [10, -7]])
    vals = p.evaluate_array(pts)
    assert [int(v) for v in vals] == [int(evaluate(p, x)) for x in pts.tolist()]
    mod = p.evaluate_array(pts, modulus=7)
    assert [int(v) for v in mod] == [int(evaluate(p, x)) % 7 for x in pts.tolist()]


# text format

def test_format_and_parse_round_trip():
    p = P("z1^2 z2 + 3/2 z1 - 7")
    assert format_polynomial(p) == "z1^2 z2 + 3/2 * z1 - 7"
    assert format_polynomial(Polynomial.zero(2)) == "0"
    rng = random.Random(7)
    for _ in range(200):
        d = rng.randint(1, 4)
        q = random_poly(rng, d)
        text = format_polynomial(q)
        assert parse_polynomial(text, d) == q
        assert format_polynomial(parse_polynomial(text, d)) == text


def test_parse_variants():
    assert P("2*z1**2*z2") == P("2 z1^2 z2")
    assert P("z") == P("z1")
    assert P("-z1 - 1/2") == Polynomial(1, [((1,), -1), ((0,), Fraction(-1, 2))])


@pytest.mark.parametrize("text,col", [("z1^2 +* z2", 7), ("z0", 1), ("z1^", 4), ("3/0 z1", 3)])
def test_parse_errors_have_position(text, col):
    with pytest.raises(ParseError) as exc:
        parse_polynomial(text)
    assert exc.value.line == 1
    assert exc.value.column == col


def test_parse_dimension_overflow():
    with pytest.raises((ParseError, DimensionError)):
        parse_polynomial("z3", 2)


# matrices

def conventional_rref(rows):
    """Plain Gauss-Jordan over Fractions, independent of the library."""
    m = [[Fraction(v) for v in r] for r in rows]
    lead = 0
    nrows, ncols = len(m), len(m[0])
    for c in range(ncols):
        piv = next((i for i in range(lead, nrows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[lead], m[piv] = m[piv], m[lead]
        pv = m[lead][c]
        m[lead] = [v / pv for v in m[lead]]
        for i in range(nrows):
            if i != lead and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[lead])]
        lead += 1
    return m


def test_rref_inverted_examples():
    eye = RationalMatrix.identity(3)
    assert rref_inverted(eye).to_lists() == eye.to_lists()
    assert rref_inverted(RationalMatrix([[1, 1], [0, 2]])).to_lists() == [[1, 0], [0, 1]]
    assert rref_inverted(RationalMatrix([[2, 4]])).to_lists() == [[Fraction(1, 2), 1]]


def test_rref_inverted_against_reversed_oracle():
    rng = random.Random(8)
    for _ in range(100):
        n, m = rng.randint(1, 4), rng.randint(1, 5)
        rows = [[rng.randint(-3, 3) for _ in range(m)] for _ in range(n)]
        got = rref_inverted(RationalMatrix(rows))
        rev = [list(reversed(r)) for r in reversed(rows)]
        want = conventional_rref(rev)
        want = [list(reversed(r)) for r in reversed(want)]
        assert got.to_lists() == want
        assert is_rref(got.reversed())


def test_matrix_rank_and_det():
    m = RationalMatrix([[2, 1, 0], [1, 3, 1], [0, 1, 4]])
    assert m.det() == 2 * (12 - 1) - 1 * (4 - 0)
    assert m.rank() == 3
    assert RationalMatrix([[1, 2], [2, 4]]).rank() == 1
    a = RationalMatrix([[1, 2], [3, 4]])
    assert (a @ RationalMatrix.identity(2)).to_lists() == a.to_lists()
