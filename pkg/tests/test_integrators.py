import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from eulermac.deriv import LieDerivatives, lie_derivatives
from eulermac.integrators import (
    BERNOULLI,
    EulerMaclaurin,
    Gauss,
    IntegrationError,
    IntegratorSpec,
    NewtonConfig,
    NonConvergenceError,
    SingularMatrixError,
    TaylorExplicit,
    TaylorImplicit,
    bernoulli,
    em_residual,
    em_step,
    gauss_step,
    integrate,
    modified_newton_solve,
    parse_method,
    taylor_step,
)
from eulermac.problems import OdeSystem, kepler, pendulum


def linear_system(A):
    A = np.asarray(A, dtype=float)
    n = A.shape[0]

    def field(y):
        return [sum(A[i, j] * y[j] for j in range(n)) for i in range(n)]

    return OdeSystem("linear", n, field, jacobian=lambda y: A)


def scalar_ratio(method, z, **kw):
    sys_ = linear_system([[z]])
    spec = IntegratorSpec(method, 1.0, **kw)
    return integrate(sys_, 0.0, [1.0], spec, 1).final_state[0]


# --- Bernoulli numbers -------------------------------------------------


def _bernoulli_recurrence(n_max):
    # sum_{k=0}^{n} C(n+1, k) B_k = 0, B_0 = 1
    B = [Fraction(1)]
    for n in range(1, n_max + 1):
        B.append(-sum(math.comb(n + 1, k) * B[k] for k in range(n)) / (n + 1))
    return B


def test_bernoulli_table():
    assert (bernoulli(2), bernoulli(4), bernoulli(6), bernoulli(8)) == (
        Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30),
    )
    oracle = _bernoulli_recurrence(16)
    for n, value in BERNOULLI.items():
        assert value == oracle[n]
    with pytest.raises(ValueError):
        bernoulli(18)


# --- residual and Newton ---------------------------------------------


def test_em_residual_zero_field():
    sys_ = OdeSystem("zero", 2, lambda y: [0.0 * y[0], 0.0 * y[1]])
    y = np.array([1.0, -2.0])
    lie = LieDerivatives(y, (np.zeros(2), np.zeros(2)))
    assert not np.any(em_residual(sys_, y, y, 0.1, 2, lie, lie))


def test_em_residual_s2_matches_explicit_formula():
    p = pendulum()
    rng = np.random.default_rng(0)
    y0, y1 = rng.standard_normal(2), rng.standard_normal(2)
    h = 0.3
    l0 = lie_derivatives(p, 0.0, y0, 2)
    l1 = lie_derivatives(p, 0.0, y1, 2)
    r = em_residual(p, y0, y1, h, 2, l0, l1)
    expected = y1 - y0 - h / 2 * (l1.values[0] + l0.values[0]) + h**2 / 12 * (l1.values[1] - l0.values[1])
    np.testing.assert_allclose(r, expected, rtol=1e-15, atol=1e-15)


def test_newton_linear_one_correction():
    A = np.array([[2.0, 1.0], [0.5, 3.0]])
    b = np.array([1.0, -1.0])
    calls = []

    def res(y):
        calls.append(1)
        return A @ y - b

    y = modified_newton_solve(res, A, np.zeros(2))
    np.testing.assert_allclose(y, np.linalg.solve(A, b), rtol=1e-14)
    assert len(calls) == 2  # one correction, one confirming zero increment


def test_newton_zero_residual_returns_predictor():
    y = modified_newton_solve(lambda y: np.zeros_like(y), np.eye(3), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(y, [1.0, 2.0, 3.0])


def test_newton_failures():
    with pytest.raises(SingularMatrixError):
        modified_newton_solve(lambda y: y, np.zeros((2, 2)), np.ones(2))
    with pytest.raises(NonConvergenceError) as info:
        modified_newton_solve(lambda y: y**3 - 2.0, np.eye(1), np.ones(1), NewtonConfig(max_iter=2))
    assert info.value.iterations == 2 and info.value.last_iterate is not None
    # iterates double each time, the scaled increment sits at 1/2
    with pytest.raises(NonConvergenceError, match="stagnated") as info:
        modified_newton_solve(lambda y: -y - 1.0, np.eye(2), np.zeros(2))
    assert info.value.iterations < 50
    with pytest.raises(NonConvergenceError):
        modified_newton_solve(lambda y: y, np.eye(1), np.array([np.nan]))


def test_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(tol=0.0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iter=0)
    with pytest.raises(ValueError):
        EulerMaclaurin(0)
    with pytest.raises(ValueError):
        Gauss(4)
    with pytest.raises(ValueError):
        IntegratorSpec(EulerMaclaurin(2), 0.0)
    assert parse_method("em", 6) == EulerMaclaurin(3)
    assert parse_method("gauss", 4) == Gauss(2)
    assert parse_method("taylor-implicit", 4) == TaylorImplicit(4)
    with pytest.raises(ValueError):
        parse_method("em", 5)
    with pytest.raises(ValueError):
        parse_method("rk", 4)


# --- stability functions ------------------------------------------------

def pade22(z):
    return (1 + z / 2 + z * z / 12) / (1 - z / 2 + z * z / 12)


@pytest.mark.parametrize("z", [-0.7, -0.3, 0.3, 0.5])
def test_scalar_stability_functions(z):
    assert scalar_ratio(EulerMaclaurin(1), z) == pytest.approx((1 + z / 2) / (1 - z / 2), rel=1e-14)
    assert scalar_ratio(EulerMaclaurin(2), z) == pytest.approx(pade22(z), rel=1e-14)
    assert scalar_ratio(Gauss(2), z) == pytest.approx(pade22(z), rel=1e-14)
    # y'' = z^2 y and D_3 f = z^4 y substituted into the order-6 formula
    em6 = (1 + z / 2 + z**2 / 12 - z**4 / 720) / (1 - z / 2 + z**2 / 12 - z**4 / 720)
    assert scalar_ratio(EulerMaclaurin(3), z) == pytest.approx(em6, rel=1e-13)
    pade33 = (1 + z / 2 + z**2 / 10 + z**3 / 120) / (1 - z / 2 + z**2 / 10 - z**3 / 120)
    assert scalar_ratio(Gauss(3), z) == pytest.approx(pade33, rel=1e-13)
    t4 = sum(z**j / math.factorial(j) for j in range(5))
    assert scalar_ratio(TaylorExplicit(4), z) == pytest.approx(t4, rel=1e-14)
    assert scalar_ratio(TaylorExplicit(1), z) == pytest.approx(1 + z, rel=1e-15)
    assert scalar_ratio(TaylorImplicit(1), z) == pytest.approx(1 / (1 - z), rel=1e-14)
    t4m = sum((-z) ** j / math.factorial(j) for j in range(5))
    assert scalar_ratio(TaylorImplicit(4), z) == pytest.approx(1 / t4m, rel=1e-13)


@pytest.mark.parametrize("z", [-2.0, 1.1])
def test_pade_map_for_larger_steps(z):
    for method in (EulerMaclaurin(2), Gauss(2)):
        assert scalar_ratio(method, z) == pytest.approx(pade22(z), rel=1e-14)


def test_implicit_taylor_matrix_handles_large_steps():
    # the iteration matrix is the full truncated series in h f', so a linear
    # problem converges even where I - h f' alone would stall
    for z in (-2.0, -5.0, 0.8):
        t4m = sum((-z) ** j / math.factorial(j) for j in range(5))
        assert scalar_ratio(TaylorImplicit(4), z) == pytest.approx(1 / t4m, rel=1e-13)


def test_frozen_em_matrix_limits_em6():
    # at z = -12 the modified Newton map 1 - N(z)/(1 - z/2) has modulus about 2.4
    with pytest.raises(IntegrationError) as info:
        scalar_ratio(EulerMaclaurin(3), -12.0)
    assert isinstance(info.value.cause, NonConvergenceError)


def test_em1_is_the_trapezoidal_rule():
    p = pendulum()
    h = p.reference.period / 28
    y0 = p.reference.y0
    y1 = em_step(p, 0.0, y0, IntegratorSpec(EulerMaclaurin(1), h))
    trap = y1 - y0 - h / 2 * (p.rhs(0, y1) + p.rhs(0, y0))
    assert np.abs(trap).max() < 1e-14


# --- accuracy ------------------------------------------------------------


def _exact(system, y0, t):
    sol = solve_ivp(lambda t, y: system.rhs(t, y), (0, t), y0, method="DOP853", rtol=2.3e-14, atol=1e-15)
    return sol.y[:, -1]


def test_pendulum_local_error_is_fifth_order():
    p = pendulum()
    y0 = p.reference.y0
    errs = []
    for h in (p.reference.period / 28, p.reference.period / 56):
        y1 = em_step(p, 0.0, y0, IntegratorSpec(EulerMaclaurin(2), h))
        errs.append(np.abs(y1 - _exact(p, y0, h)).max())
    assert 4.6 < math.log2(errs[0] / errs[1]) < 5.4


_FAST = (16, 32, 64)


@pytest.mark.parametrize(
    "method,pend_Ns,kep_Ns",
    [
        (EulerMaclaurin(2), _FAST, (64, 128, 256)),
        (EulerMaclaurin(3), _FAST, (32, 64, 128)),
        (Gauss(2), _FAST, (64, 128, 256)),
        (Gauss(3), _FAST, (32, 64, 128)),
        (TaylorExplicit(4), _FAST, (64, 128, 256)),
        (TaylorImplicit(4), _FAST, (64, 128, 256)),
    ],
)
@pytest.mark.parametrize("make", [pendulum, kepler])
def test_global_order(method, pend_Ns, kep_Ns, make):
    # a generic end time avoids the extra cancellation seen at full periods
    system = make()
    Ns = pend_Ns if make is pendulum else kep_Ns
    y0 = system.reference.y0
    t_end = 0.37 * system.reference.period
    exact = _exact(system, y0, t_end)
    errs = []
    for N in Ns:
        spec = IntegratorSpec(method, t_end / N, "analytic")
        final = integrate(system, 0.0, y0, spec, N, observers=[]).final_state
        errs.append(np.abs(final - exact).sum())
    slope = -np.polyfit(np.log(Ns), np.log(errs), 1)[0]
    assert abs(slope - method.order) <= 0.15


def test_kepler_em4_one_period():
    k = kepler()
    T = k.reference.period
    traj = integrate(k, 0.0, k.reference.y0, IntegratorSpec(EulerMaclaurin(2), T / 400), 400)
    assert traj.invariant_errors("H").max() <= 1e-6
    assert np.abs(traj.final_state - k.reference.y0).sum() < 5e-4


@pytest.mark.parametrize("method", [EulerMaclaurin(2), EulerMaclaurin(3), Gauss(2), Gauss(3)])
def test_symmetric_methods_are_reversible(method):
    k = kepler()
    h = k.reference.period / 200
    y0 = k.reference.y0
    fwd = integrate(k, 0.0, y0, IntegratorSpec(method, h), 5, observers=[])
    back = integrate(k, 5 * h, fwd.final_state, IntegratorSpec(method, -h), 5, observers=[])
    # 10x the scaled Newton tolerance per step
    assert np.abs(back.final_state - y0).max() <= 10 * 1e-14 * 5 * (1 + np.abs(y0).max())


def test_derivative_source_does_not_change_steps():
    k = kepler()
    h = k.reference.period / 100
    y = k.reference.y0
    for s in (2, 3):
        a = em_step(k, 0.0, y, IntegratorSpec(EulerMaclaurin(s), h, "analytic"))
        b = em_step(k, 0.0, y, IntegratorSpec(EulerMaclaurin(s), h, "b"))
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_gauss_conserves_quadratic_invariant_of_linear_hamiltonian():
    rng = np.random.default_rng(5)
    S = rng.standard_normal((4, 4))
    S = S + S.T
    J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    sys_ = linear_system(J @ S)
    y = rng.standard_normal(4)
    q0 = y @ S @ y
    spec = IntegratorSpec(Gauss(2), 0.05)
    for _ in range(20):
        y = gauss_step(sys_, 0.0, y, spec)
        assert abs(y @ S @ y - q0) <= 1e-12 * max(1.0, abs(q0))


def test_step_function_type_checks():
    p = pendulum()
    with pytest.raises(TypeError):
        em_step(p, 0.0, p.reference.y0, IntegratorSpec(Gauss(2), 0.1))
    with pytest.raises(TypeError):
        taylor_step(p, 0.0, p.reference.y0, IntegratorSpec(EulerMaclaurin(2), 0.1))


def test_frozen_jacobian_converges_to_same_steps():
    p = pendulum()
    y0, h = p.reference.y0, p.reference.period / 28
    a = integrate(p, 0.0, y0, IntegratorSpec(EulerMaclaurin(2), h), 28)
    b = integrate(p, 0.0, y0, IntegratorSpec(EulerMaclaurin(2), h, newton=NewtonConfig(jacobian_refresh="frozen")), 28)
    np.testing.assert_allclose(a.final_state, b.final_state, atol=1e-12)


# --- driver ------------------------------------------------------------------


def test_integrate_basic_contract():
    p = pendulum()
    y0, h = p.reference.y0, p.reference.period / 28
    spec = IntegratorSpec(EulerMaclaurin(2), h)
    with pytest.raises(ValueError):
        integrate(p, 0.0, y0, spec, 0)
    one = integrate(p, 0.0, y0, spec, 1)
    np.testing.assert_array_equal(one.final_state, em_step(p, 0.0, y0, spec))
    traj = integrate(p, 0.0, y0, spec, 28, stride=7)
    assert traj.states.shape == (5, 2)
    np.testing.assert_allclose(np.diff(traj.times), 7 * h)
    assert traj.invariants["H"].shape == (29,)
    assert np.abs(traj.final_state - y0).sum() < 1e-3
    with pytest.raises(ValueError):
        traj.state(3)
    with pytest.raises(KeyError):
        integrate(p, 0.0, y0, spec, 2, observers=["M"])


def test_integration_error_carries_step_index():
    def field(y):
        if y[0] > 0.45:
            raise ValueError("left the domain")
        return [1.0 + 0.0 * y[0]]

    sys_ = OdeSystem("ramp", 1, field, jacobian=lambda y: np.zeros((1, 1)))
    with pytest.raises(IntegrationError) as info:
        integrate(sys_, 0.0, [0.0], IntegratorSpec(TaylorExplicit(1), 0.1), 10, observers=[])
    assert info.value.step == 6
    assert "step 6" in str(info.value)
