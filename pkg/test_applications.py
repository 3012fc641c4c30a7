"""
Tests for the Stein-type operator equation and the Fredholm integral equation
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from fixedpoint.algebra import AlgebraElement, is_positive, norm
from fixedpoint.applications import (
    CustomKernel,
    IntegralProblem,
    LinearPhiKernel,
    SteinProblem,
    check_integral_conditions,
    integral_oracle,
    integral_solve,
    random_stein_problem,
    solve_integral_report,
    solve_stein_report,
    stein_certificate,
    stein_iterate,
    stein_map,
    stein_oracle,
)
from fixedpoint.errors import (
    DimensionMismatch,
    GateViolation,
    NonlinearKernel,
    NotPositive,
    PreconditionViolation,
)

ORACLE_TOL = 1e-8


@pytest.fixture
def scalar_stein():
    return SteinProblem([AlgebraElement.scalar(0.5, 2)], AlgebraElement.identity(2))


def test_scalar_stein_solution(scalar_stein):
    assert scalar_stein.beta == pytest.approx(0.25)
    assert scalar_stein.advisory_gate
    X = stein_iterate(scalar_stein)
    assert X.allclose(AlgebraElement.scalar(4 / 3, 2), atol=1e-10)
    assert stein_oracle(scalar_stein).allclose(AlgebraElement.scalar(4 / 3, 2), atol=1e-12)
    assert stein_map(scalar_stein, X).allclose(X, atol=1e-10)


def test_stein_report_history(scalar_stein):
    certified = stein_certificate(scalar_stein, np.random.default_rng(0), samples=16)
    assert certified.certificate.overall
    assert certified.certificate.constants["lambda"] == pytest.approx(4 * 0.25 ** 2)

    report = solve_stein_report(scalar_stein, certified=certified, with_oracle=True)
    assert report.hermitian and report.positive
    assert report.oracle_delta < ORACLE_TOL
    assert report.residual <= 1e-12 * max(1.0, norm(report.solution))
    assert len(report.bound_curve) == len(report.metric_steps) == report.iterations
    for observed, bound in zip(report.metric_steps, report.bound_curve):
        assert observed <= bound * (1 + 1e-9) + 1e-14
    assert all(factor <= scalar_stein.beta + 1e-6 for factor in report.contraction_factors)


def test_random_stein_problems_match_the_direct_solve():
    rng = np.random.default_rng(42)
    for _ in range(40):
        dim = int(rng.integers(1, 9))
        count = int(rng.integers(0, 6))
        problem = random_stein_problem(rng, dim, count, beta=float(rng.uniform(0.05, 0.45)))
        report = solve_stein_report(problem, with_oracle=True)
        assert report.oracle_delta < ORACLE_TOL
        assert report.hermitian
        assert report.positive
        assert report.solution.allclose(report.solution.star, atol=1e-10 * max(1.0, norm(report.solution)))
        assert all(factor <= problem.beta + 1e-9 for factor in report.contraction_factors)


def test_random_stein_problem_hits_the_requested_beta():
    problem = random_stein_problem(np.random.default_rng(6), 6, 4, beta=0.45)
    assert problem.beta == pytest.approx(0.45)
    assert problem.dim == 6
    assert is_positive(problem.Q).is_positive


def test_stein_gate_and_inputs():
    with pytest.raises(GateViolation):
        solve_stein_report(SteinProblem([AlgebraElement.scalar(0.75, 2)], AlgebraElement.identity(2)))
    with pytest.raises(NotPositive):
        SteinProblem([], AlgebraElement.diag([1.0, -1.0]))
    with pytest.raises(DimensionMismatch):
        SteinProblem([AlgebraElement.identity(3)], AlgebraElement.identity(2))
    with pytest.raises(DimensionMismatch):
        solve_stein_report(
            SteinProblem([AlgebraElement.scalar(0.1, 2)], AlgebraElement.identity(2)),
            X0=AlgebraElement.zero(3),
        )


def test_stein_problem_round_trip(scalar_stein):
    restored = SteinProblem.from_dict(scalar_stein.to_dict())
    assert restored.dim == 2
    assert restored.beta == pytest.approx(scalar_stein.beta)
    with pytest.raises(DimensionMismatch):
        SteinProblem.from_dict({**scalar_stein.to_dict(), "dim": 3})


def test_empty_coefficient_list_returns_q():
    Q = AlgebraElement.diag([2.0, 3.0])
    assert stein_iterate(SteinProblem([], Q)).allclose(Q)

    report = solve_stein_report(SteinProblem([], Q))
    assert report.iterations == 1
    assert report.residual == 0.0
    assert solve_stein_report(SteinProblem([AlgebraElement.zero(2)], Q)).iterations == 1


def test_stein_residual_is_relative_to_the_solution_scale():
    problem = SteinProblem([AlgebraElement.scalar(0.5, 2)], AlgebraElement.scalar(1e4, 2))
    report = solve_stein_report(problem)
    assert report.solution.allclose(AlgebraElement.scalar(4e4 / 3, 2), atol=1e-7)
    assert report.relative_residual <= 1e-12
    assert report.relative_residual == pytest.approx(report.residual / norm(report.solution))


@pytest.fixture
def constant_integral():
    return IntegralProblem(lo=0.0, hi=1.0, m=64, p=1.0, beta=0.2, kernel=LinearPhiKernel(phi="ones", scale=0.2), g=1.0)


def test_integral_constant_solution(constant_integral):
    report = solve_integral_report(constant_integral, axiom_samples=16, with_oracle=True)
    assert np.allclose(report.solution, 1.25, atol=1e-12)
    assert report.oracle_delta < ORACLE_TOL
    assert report.axioms_ok
    assert report.conditions.all_ok
    assert report.iterations < 100
    for observed, bound in zip(report.metric_steps, report.bound_curve):
        assert observed <= bound * (1 + 1e-9) + 1e-14


def test_integral_product_kernel_against_the_oracle():
    problem = IntegralProblem.from_dict({
        "lo": 0, "hi": 1, "m": 100, "p": 2, "beta": 0.4,
        "kernel": {"name": "linear_phi", "phi": "product", "offset": 0.1},
        "g": 1.0,
    })
    x = integral_solve(problem)
    assert np.max(np.abs(integral_oracle(problem) - x)) < ORACLE_TOL
    assert np.allclose(problem.apply(x), x, atol=1e-10)


def test_nonlinear_kernel_converges_but_has_no_oracle():
    problem = IntegralProblem(
        lo=0.0, hi=1.0, m=128, p=1.0, beta=0.5,
        kernel=CustomKernel(phi="product", scale=0.5, nonlinearity="sin"), g=1.0,
    )
    report = solve_integral_report(problem)
    assert report.residual <= 1e-12 * max(1.0, np.max(np.abs(report.solution)))
    with pytest.raises(NonlinearKernel):
        integral_oracle(problem)
    with pytest.raises(PreconditionViolation):
        CustomKernel(nonlinearity="cube")


def test_integral_conditions():
    rng = np.random.default_rng(0)
    too_steep = IntegralProblem(lo=0.0, hi=1.0, m=8, p=2.0, beta=0.75, kernel=LinearPhiKernel(scale=0.75))
    assert not check_integral_conditions(too_steep, rng).beta_ok
    with pytest.raises(GateViolation):
        solve_integral_report(too_steep)

    heavy_rows = IntegralProblem(lo=0.0, hi=1.0, m=4, p=1.0, beta=0.2,
                                 kernel=LinearPhiKernel(phi=np.full((4, 4), 2.0), scale=0.2))
    conditions = check_integral_conditions(heavy_rows, rng)
    assert not conditions.phi_ok
    assert conditions.phi_row_sup == pytest.approx(2.0)

    loose = IntegralProblem(lo=0.0, hi=1.0, m=8, p=1.0, beta=0.2, kernel=LinearPhiKernel(scale=0.4))
    assert not check_integral_conditions(loose, rng).lipschitz_ok


def test_integral_problem_inputs():
    with pytest.raises(PreconditionViolation):
        IntegralProblem(lo=1.0, hi=0.0, m=4, p=1.0, beta=0.2, kernel=LinearPhiKernel())
    with pytest.raises(DimensionMismatch):
        IntegralProblem(lo=0.0, hi=1.0, m=4, p=1.0, beta=0.2, kernel=LinearPhiKernel(phi=np.ones((3, 3))))
    with pytest.raises(PreconditionViolation):
        IntegralProblem.from_dict({"m": 4, "beta": 0.2, "kernel": {"name": "spline"}})
    problem = IntegralProblem(lo=0.0, hi=1.0, m=4, p=1.0, beta=0.2, kernel=LinearPhiKernel(scale=0.2))
    with pytest.raises(DimensionMismatch):
        solve_integral_report(problem, x0=np.zeros(5))


def test_integral_product_kernel_on_sixty_four_nodes():
    problem = IntegralProblem(lo=0.0, hi=1.0, m=64, p=1.0, beta=0.2,
                              kernel=LinearPhiKernel(phi="product", scale=0.2), g=1.0)
    report = solve_integral_report(problem, with_oracle=True)
    assert report.conditions.all_ok
    assert report.oracle_delta < ORACLE_TOL
    assert all(factor <= problem.beta + 1e-9 for factor in report.contraction_factors)


def test_integral_residuals_do_not_increase():
    problem = IntegralProblem(lo=0.0, hi=1.0, m=64, p=1.0, beta=0.4,
                              kernel=LinearPhiKernel(phi="product", scale=0.4, offset=0.1), g=1.0)
    report = solve_integral_report(problem)
    assert len(report.residuals) == report.iterations > 2
    for earlier, later in zip(report.residuals[1:], report.residuals[2:]):
        assert later <= earlier * (1 + 1e-9) + 1e-15
    assert report.residuals[-1] <= report.residuals[1]


def test_grid_refinement_differences_shrink():
    solutions = {}
    for m in (16, 32, 64, 128):
        problem = IntegralProblem(lo=0.0, hi=1.0, m=m, p=1.0, beta=0.2,
                                  kernel=LinearPhiKernel(phi="product", scale=0.2), g=1.0)
        solutions[m] = integral_solve(problem)

    differences = []
    for coarse, fine in ((16, 32), (32, 64), (64, 128)):
        shared = solutions[fine][::2]
        differences.append(float(np.max(np.abs(shared - solutions[coarse]))))
    assert differences[0] > differences[1] > differences[2] > 0
    for (coarse, _), difference in zip(((16, 32), (32, 64), (64, 128)), differences):
        assert difference * coarse < 1.0
