import numpy as np

from pampc import verify


def test_all_suites_pass_fast():
    results = verify.run_all(fast=True)
    assert len(results) == 3
    for r in results:
        assert r.passed, f"{r.name}: max error {r.max_error} vs tol {r.tolerance}"


def test_corrupted_jacobian_fails_named_suite():
    results = verify.run_all(corrupt="rk4_step_with_jacobians", fast=True)
    by_name = {name: r for name, r in zip(verify.SUITES, results)}
    assert not by_name["rk4_step_with_jacobians"].passed
    assert by_name["projection_velocity"].passed
    assert by_name["solve_qp"].passed


def test_corrupted_projection_fails_named_suite():
    results = verify.run_all(corrupt="projection_velocity", fast=True)
    by_name = {name: r for name, r in zip(verify.SUITES, results)}
    assert not by_name["projection_velocity"].passed
    assert by_name["rk4_step_with_jacobians"].passed


def test_corrupted_qp_fails_named_suite():
    results = verify.run_all(corrupt="solve_qp", fast=True)
    by_name = {name: r for name, r in zip(verify.SUITES, results)}
    assert not by_name["solve_qp"].passed


def test_projected_gradient_matches_closed_form():
    rng = np.random.default_rng(0)
    # interior optimum: solution is -H^{-1} g
    h = np.diag([2.0, 3.0, 5.0])
    g = np.array([-2.0, 3.0, -5.0])
    x = verify.projected_gradient_qp(h, g, -10 * np.ones(3), 10 * np.ones(3))
    assert np.allclose(x, -np.linalg.solve(h, g), atol=1e-9)
    # clamped optimum
    x = verify.projected_gradient_qp(h, g, -0.5 * np.ones(3), 0.5 * np.ones(3))
    assert np.allclose(x, [0.5, -0.5, 0.5], atol=1e-9)
