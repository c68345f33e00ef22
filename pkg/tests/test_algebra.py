import random

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from boprf.algebra import (
    FIELD,
    P128,
    EvalDomain,
    FieldError,
    Polynomial,
    PrimeField,
    is_probable_prime,
    poly_gcd,
    solve_linear,
)

x = sympy.symbols("x")
elems = st.integers(min_value=0, max_value=P128 - 1)
small_polys = st.lists(st.integers(0, 250), min_size=0, max_size=8)


def to_sympy(poly: Polynomial) -> sympy.Poly:
    return sympy.Poly(list(reversed(poly.coeffs)) or [0], x, modulus=poly.field.p, symmetric=False)


def from_sympy(sp: sympy.Poly, field: PrimeField) -> Polynomial:
    return Polynomial([int(c) % field.p for c in reversed(sp.all_coeffs())], field)


def test_modulus_is_prime():
    assert P128 == 2**128 - 159
    assert sympy.isprime(P128)
    assert is_probable_prime(P128)


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4, 91, 97, 561, 7919, 2**61 - 1, 2**64 + 1, 2**127 - 1])
def test_primality_agrees_with_sympy(n):
    assert is_probable_prime(n) == sympy.isprime(n)


def test_composite_modulus_rejected():
    with pytest.raises(FieldError):
        PrimeField(2**128 - 157)


@given(elems, elems)
def test_field_ops_match_python_ints(a, b):
    p = P128
    assert FIELD.add(a, b) == (a + b) % p
    assert FIELD.sub(a, b) == (a - b) % p
    assert FIELD.mul(a, b) == a * b % p
    if b:
        assert FIELD.mul(FIELD.div(a, b), b) == a
        assert FIELD.inv(b) == pow(b, -1, p)


def test_inverse_of_zero_raises():
    with pytest.raises(FieldError):
        FIELD.inv(0)


@given(elems)
def test_element_bytes_roundtrip(a):
    data = FIELD.to_bytes(a)
    assert len(data) == 16
    assert FIELD.from_bytes(data) == a


def test_noncanonical_bytes_rejected():
    with pytest.raises(FieldError):
        FIELD.from_bytes(P128.to_bytes(16, "big"))
    with pytest.raises(FieldError):
        FIELD.from_bytes(b"\x00" * 15)


def test_vector_bytes_length_checked(rng):
    v = FIELD.random_vector(5, rng)
    assert FIELD.vector_from_bytes(FIELD.vector_to_bytes(v), 5) == v
    with pytest.raises(FieldError):
        FIELD.vector_from_bytes(FIELD.vector_to_bytes(v), 4)


@given(small_polys, small_polys)
def test_poly_arithmetic_matches_sympy(a, b):
    f = PrimeField(251)
    pa, pb = Polynomial(a, f), Polynomial(b, f)
    assert to_sympy(pa + pb) == to_sympy(pa) + to_sympy(pb)
    assert to_sympy(pa - pb) == to_sympy(pa) - to_sympy(pb)
    assert to_sympy(pa * pb) == to_sympy(pa) * to_sympy(pb)
    if not pb.is_zero():
        q, r = divmod(pa, pb)
        sq, sr = sympy.div(to_sympy(pa), to_sympy(pb))
        assert to_sympy(q) == sq and to_sympy(r) == sr
        assert q * pb + r == pa


@settings(max_examples=60)
@given(small_polys, small_polys, small_polys)
def test_gcd_matches_sympy(a, b, c):
    f = PrimeField(251)
    common = Polynomial(c, f)
    pa, pb = Polynomial(a, f) * common, Polynomial(b, f) * common
    if pa.is_zero() and pb.is_zero():
        return
    g = poly_gcd(pa, pb)
    expect = sympy.gcd(to_sympy(pa), to_sympy(pb)).monic()
    assert g == from_sympy(expect, f)
    assert g.lead == 1


def test_gcd_at_128_bits_matches_sympy(rng):
    roots = [rng.randrange(P128) for _ in range(12)]
    a = Polynomial.from_roots(roots[:8])
    b = Polynomial.from_roots(roots[4:])
    g = poly_gcd(a, b)
    assert g == Polynomial.from_roots(roots[4:8])
    assert to_sympy(g) == sympy.gcd(to_sympy(a), to_sympy(b)).monic()


def test_horner_and_roots(rng):
    roots = [3, 17, 200]
    f = PrimeField(251)
    poly = Polynomial.from_roots(roots, f)
    assert poly.degree == 3 and poly.lead == 1
    assert all(poly(r) == 0 for r in roots)
    assert poly(5) == (5 - 3) * (5 - 17) * (5 - 200) % 251


def test_zero_polynomial():
    z = Polynomial.zero()
    assert z.degree == -1 and z.is_zero()
    with pytest.raises(FieldError):
        divmod(Polynomial([1, 1]), z)


def test_random_polynomial_has_exact_degree(rng):
    for d in range(6):
        assert Polynomial.random(d, rng).degree == d


@pytest.mark.parametrize("deg", [0, 1, 5, 16, 32])
def test_interpolation_roundtrip(rng, deg):
    poly = Polynomial.random(deg, rng)
    xs = list(range(100, 100 + deg + 3))
    pts = list(zip(xs, poly.evaluate_many(xs)))
    assert Polynomial.interpolate(pts) == poly
    dom = EvalDomain(xs)
    assert dom.evaluate(poly) == tuple(v for _, v in pts)
    assert dom.interpolate(dom.evaluate(poly)) == poly


def test_interpolation_matches_sympy():
    f = PrimeField(251)
    pts = [(1, 7), (2, 100), (5, 0), (9, 250)]
    ours = Polynomial.interpolate(pts, f)
    rational = sympy.Poly(sympy.interpolate(pts, x), x).all_coeffs()
    reduced = [int(c.p) * pow(int(c.q), -1, 251) % 251 for c in map(sympy.Rational, rational)]
    assert ours == Polynomial(list(reversed(reduced)), f)


def test_duplicate_domain_points_rejected():
    with pytest.raises(FieldError):
        EvalDomain([1, 2, 2])


def test_polynomial_bytes_roundtrip(rng):
    poly = Polynomial.random(7, rng)
    assert Polynomial.from_bytes(poly.to_bytes()) == poly


def test_solve_linear_consistent_and_singular():
    f = PrimeField(251)
    rows = [[1, 2], [3, 4]]
    sol = solve_linear(rows, [5, 6], f)
    assert sol is not None
    assert [(r[0] * sol[0] + r[1] * sol[1]) % 251 for r in rows] == [5, 6]
    assert solve_linear([[1, 1], [2, 2]], [1, 3], f) is None
    under = solve_linear([[1, 1], [2, 2]], [1, 2], f)
    assert under is not None and (under[0] + under[1]) % 251 == 1


def test_vsum_and_shapes(rng):
    vs = [FIELD.random_vector(4, rng) for _ in range(3)]
    s = FIELD.vsum(vs, 4)
    assert s == tuple(sum(c) % P128 for c in zip(*vs))
    assert FIELD.vsum([], 4) == (0, 0, 0, 0)
    with pytest.raises(ValueError):
        FIELD.vadd((1, 2), (1,))


# worked examples


def test_small_field_identities(small_field, rng):
    f = small_field
    for xv in range(251):
        assert f.add(0, xv) == xv
    for _ in range(50):
        a = f.random_nonzero(rng)
        assert f.mul(a, f.inv(a)) == 1
    brute = next(b for b in range(1, 251) if 3 * b % 251 == 1)
    assert brute == 84 == f.inv(3)


def test_evaluation_examples(rng):
    assert Polynomial.zero()(12345) == 0
    s = FIELD.random(rng)
    assert Polynomial.from_roots([s])(s) == 0
    f = Polynomial.random(5, rng)
    for _ in range(10):
        pt = FIELD.random(rng)
        naive = sum(c * pow(pt, i, P128) for i, c in enumerate(f.coeffs)) % P128
        assert f(pt) == naive


def test_interpolation_examples(small_field):
    f = small_field
    cubic = Polynomial([4, 0, 7, 1], f)
    pts = [(xv, cubic(xv)) for xv in (1, 2, 3, 4)]
    assert Polynomial.interpolate(pts, f) == cubic
    assert Polynomial.interpolate([(9, 42)], f) == Polynomial.constant(42, f)


def test_gcd_examples(rng):
    f = Polynomial.random(6, rng)
    assert poly_gcd(f, f) == f.monic()
    a = Polynomial.from_roots([1, 2])
    b = Polynomial.from_roots([2, 3])
    assert poly_gcd(a, b) == Polynomial.from_roots([2])
    for _ in range(20):
        ra = set(rng.sample(range(1, 60), 8))
        rb = set(rng.sample(range(1, 60), 8))
        g = poly_gcd(Polynomial.from_roots(sorted(ra)), Polynomial.from_roots(sorted(rb)))
        assert g == Polynomial.from_roots(sorted(ra & rb))


def test_from_roots_examples(rng):
    assert Polynomial.from_roots([]) == Polynomial.constant(1)
    assert Polynomial.from_roots([5]) == Polynomial([P128 - 5, 1])
    roots = rng.sample(range(1, 10**9), 16)
    poly = Polynomial.from_roots(roots)
    assert all(poly(r) == 0 for r in roots)
    assert poly(FIELD.random(rng)) != 0


def test_random_polynomial_distribution(small_field, rng):
    f = small_field
    consts = {Polynomial.random(0, rng, f).coeffs[0] for _ in range(3000)}
    assert 0 not in consts and len(consts) == 250
    assert Polynomial.random(8, rng) != Polynomial.random(8, rng)
    counts = [0] * 251
    draws = 100_000
    for _ in range(draws // 4):
        for c in Polynomial.random(4, rng, f).coeffs[:4]:
            counts[c] += 1
    exp = draws / 251
    chi2 = sum((c - exp) ** 2 / exp for c in counts)
    assert abs(chi2 - 250) < 3 * (2 * 250) ** 0.5
