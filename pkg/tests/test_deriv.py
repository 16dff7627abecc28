import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _polyfields import random_polynomial_hamiltonian, symbolic_derivatives
from eulermac.deriv import (
    DerivativeStrategy,
    _microsteps,
    derivatives_analytic,
    derivatives_strategy_a,
    derivatives_strategy_b,
    euler_microsteps,
    forward_difference,
    lie_derivatives,
)
from eulermac.grossone import GrossValue, GrossVector
from eulermac.problems import OdeSystem, cassini, example1, fpu, kepler, pendulum

DEMO_DERIVS = [0.4, -0.32, -0.96]


def test_demo_microstates_match_worked_digits():
    states = euler_microsteps(example1(), 0.0, [0.4], 3, 3)
    expected = [
        [0.4, 0.0, 0.0, 0.0],
        [0.4, 0.4, 0.0, 0.0],
        [0.4, 0.8, -0.32, -0.32],
        [0.4, 1.2, -0.96, -1.92],
    ]
    for s, e in zip(states, expected):
        np.testing.assert_allclose(s[0].coeffs, e, atol=1e-15)


@pytest.mark.parametrize("fn", [derivatives_strategy_a, derivatives_strategy_b, derivatives_analytic])
def test_demo_derivatives(fn):
    lie = fn(example1(), 0.0, [0.4], 3)
    np.testing.assert_allclose([lie.derivative(k)[0] for k in (1, 2, 3)], DEMO_DERIVS, atol=1e-14)


def test_strategy_b_field_differences():
    sys_ = example1()
    states, fields = _microsteps(sys_, 0.0, np.array([0.4]), 2, 2)
    first = forward_difference(fields[:2], 1)[0]
    np.testing.assert_allclose(first.coeffs, [0.0, -0.32, -0.32], atol=1e-15)


def test_identity_and_constant_fields():
    zero = OdeSystem("zero", 2, lambda y: [0.0 * y[0], 0.0 * y[1]])
    states = euler_microsteps(zero, 0.0, [1.0, 2.0], 3, 3)
    for s in states:
        np.testing.assert_array_equal(s.coeff_at(0), [1.0, 2.0])
        assert not np.any([s.coeff_at(k) for k in (1, 2, 3)])

    ident = OdeSystem("id", 1, lambda y: [y[0]])
    y1 = euler_microsteps(ident, 0.0, [1.0], 1, 1)[1]
    assert y1[0].coeffs == (1.0, 1.0)

    const = OdeSystem("c", 1, lambda y: [0.0 * y[0] + 3.0])
    for fn in (derivatives_strategy_a, derivatives_strategy_b):
        lie = fn(const, 0.0, [0.5], 4)
        assert [float(v[0]) for v in lie.values] == [3.0, 0.0, 0.0, 0.0]


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_linear_field_gives_matrix_powers(k):
    rng = np.random.default_rng(k)
    A = rng.standard_normal((3, 3))
    sys_ = OdeSystem("lin", 3, lambda y: [sum(A[i, j] * y[j] for j in range(3)) for i in range(3)])
    y0 = rng.standard_normal(3)
    for fn in (derivatives_strategy_a, derivatives_strategy_b):
        lie = fn(sys_, 0.0, y0, k)
        for j in range(1, k + 1):
            expected = np.linalg.matrix_power(A, j) @ y0
            np.testing.assert_allclose(lie.derivative(j), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_polynomial_fields_against_symbolic_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    system, ys, fsym = random_polynomial_hamiltonian(rng, m=1 + seed % 2, degree=3)
    y0 = rng.uniform(-0.8, 0.8, system.dim)
    oracle = symbolic_derivatives(ys, fsym, y0, 5)
    for fn in (derivatives_strategy_a, derivatives_strategy_b):
        lie = fn(system, 0.0, y0, 5)
        for j in range(5):
            scale = 1.0 + np.abs(oracle[j]).max()
            np.testing.assert_allclose(lie.values[j], oracle[j], rtol=1e-12, atol=1e-12 * scale)


def test_forward_equation_identity():
    # F^k[y_0..y_k] equals G^-1 F^(k-1)[f(y_0)..f(y_(k-1))] digit by digit
    rng = np.random.default_rng(7)
    system, _, _ = random_polynomial_hamiltonian(rng, m=2, degree=4)
    y0 = rng.uniform(-0.5, 0.5, 4)
    for k in range(1, 6):
        states, fields = _microsteps(system, 0.0, y0, k, k)
        lhs = forward_difference(states, k)
        rhs = forward_difference(fields[:k], k - 1).shift(1)
        for j in range(k + 1):
            a, b = lhs.coeff_at(j), rhs.coeff_at(j)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13 * (1 + np.abs(b).max()))


def test_strategy_b_runs_one_grosspower_shallower():
    seen = []

    def field(y):
        if isinstance(y[0], GrossValue):
            seen.append(y[0].depth)
        return [y[1], -y[0] - y[0] * y[0] * y[0]]

    sys_ = OdeSystem("duffing", 2, field)
    for k in (2, 3, 4, 5):
        seen.clear()
        b = derivatives_strategy_b(sys_, 0.0, [0.3, 0.1], k)
        assert set(seen) == {k - 1} and len(seen) == k
        seen.clear()
        a = derivatives_strategy_a(sys_, 0.0, [0.3, 0.1], k)
        assert set(seen) == {k}
        for u, v in zip(a.values, b.values):
            np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("make", [pendulum, kepler, fpu, cassini])
def test_strategies_agree_with_closed_form_recurrences(make):
    system = make()
    rng = np.random.default_rng(3)
    y0 = system.reference.y0 + 0.05 * rng.standard_normal(system.dim)
    ref = derivatives_analytic(system, 0.0, y0, 6)
    for strat in ("a", "b"):
        lie = lie_derivatives(system, 0.0, y0, 6, strat)
        for j in range(6):
            scale = np.abs(ref.values[j]).max()
            np.testing.assert_allclose(lie.values[j], ref.values[j], rtol=1e-11, atol=1e-12 * scale)


def test_forward_difference_examples():
    assert forward_difference([1.0, 4.0], 1) == 3.0
    assert forward_difference([1.0, 2.0, 4.0], 2) == 1.0
    assert forward_difference([n**3 for n in range(4)], 3) == 6.0
    with pytest.raises(ValueError):
        forward_difference([1.0, 2.0], 2)


@settings(max_examples=40)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.integers(0, 5))
def test_forward_difference_kills_polynomials(coeffs, k):
    # k-th difference of a degree-(k-1) polynomial sequence vanishes
    poly = np.polynomial.Polynomial(coeffs[:k]) if k else np.polynomial.Polynomial([0.0])
    vals = [float(poly(n)) for n in range(k + 1)]
    scale = 1.0 + max(abs(v) for v in vals)
    assert abs(forward_difference(vals, k)) <= 1e-9 * scale * 2**k


def test_errors_and_parsing():
    with pytest.raises(ValueError):
        euler_microsteps(example1(), 0.0, [0.4], 2, 0)
    with pytest.raises(ValueError):
        derivatives_strategy_a(example1(), 0.0, [0.4], 0)
    with pytest.raises(ValueError):
        DerivativeStrategy.parse("c")
    assert DerivativeStrategy.parse("B") is DerivativeStrategy.FORWARD_ON_FIELD
    lie = derivatives_strategy_b(example1(), 0.0, [0.4], 1)
    with pytest.raises(IndexError):
        lie.derivative(2)
    with pytest.raises(ValueError):
        derivatives_analytic(OdeSystem("x", 1, lambda y: [y[0]]), 0.0, [1.0], 2)


def test_domain_errors_propagate():
    from eulermac.grossone import GrossDomainError, sqrt

    sys_ = OdeSystem("sq", 1, lambda y: [sqrt(y[0])])
    with pytest.raises(GrossDomainError):
        derivatives_strategy_a(sys_, 0.0, [-1.0], 2)


def test_gross_vector_field_values_keep_depth():
    out = kepler().gross_rhs(0.0, GrossVector.lift([0.4, 0.0, 0.0, 2.0], 3))
    assert out.depth == 3
