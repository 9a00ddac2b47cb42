import numpy as np
import pytest

from orlicz.errors import GeometryError, InfeasibleProblemError
from orlicz.grid import Domain, ScalarField
from orlicz.phi import PhiFunction
from orlicz.solver import (ObstacleProblem, SolverOptions,
                           comparison_check, energy, full_objective,
                           local_min_restriction_check, solve)

from oracles import lbfgsb_obstacle_1d, qp_obstacle_1d

# Tangency abscissa of the taut line from (0,0) over 0.5 - 4(x-0.5)^2,
# root of 4t^2 = 0.5.
PARABOLA_TANGENT = 0.35355339059327373


def parabola_problem(h):
    dom = Domain.interval(0.0, 1.0, h)
    phi = PhiFunction.power(2.0)
    psi = ScalarField.from_function(
        dom, lambda x: 0.5 - 4.0 * (x[..., 0] - 0.5) ** 2)
    f = ScalarField.constant(dom, 0.0)
    return ObstacleProblem(dom, phi, psi, f)


def test_affine_data_is_exact_2d():
    dom = Domain.rectangle((0.0, 0.0), (1.0, 1.0), 1.0 / 64)
    phi = PhiFunction.power(2.0)
    f = ScalarField.from_function(
        dom, lambda x: 0.3 + 2.0 * x[..., 0] - x[..., 1])
    prob = ObstacleProblem(dom, phi, None, f)
    sol = solve(prob, SolverOptions(tol=1e-10))
    assert sol.converged
    err = np.abs(sol.u.values - f.values)[dom.inside].max()
    assert err <= 1e-10


def test_parabola_matches_qp_oracle():
    prob = parabola_problem(1.0 / 128)
    sol = solve(prob, SolverOptions(tol=1e-11))
    assert sol.converged
    z = qp_obstacle_1d(prob)
    inside = np.flatnonzero(prob.domain.inside)
    assert np.abs(sol.u.values[inside] - z).max() <= 1e-7

    # contact sets agree up to one cell on each side
    psi = prob.obstacle.values[inside]
    oracle_contact = z - psi <= 1e-7
    ours = sol.contact[inside]
    grown = np.convolve(oracle_contact.astype(int), [1, 1, 1], mode="same") > 0
    assert not np.any(ours & ~grown)
    grown_ours = np.convolve(ours.astype(int), [1, 1, 1], mode="same") > 0
    assert not np.any(oracle_contact & ~grown_ours)

    # tangency points of the taut graph, frozen from the quadratic root
    h = prob.domain.h
    centers = prob.domain.lattice_centers()[inside, 0]
    touched = centers[ours]
    assert abs(touched.min() - PARABOLA_TANGENT) <= 2 * h
    assert abs(touched.max() - (1.0 - PARABOLA_TANGENT)) <= 2 * h
    assert abs(sol.u.values[inside].max() - 0.5) <= 1e-4


def test_nonquadratic_families_match_lbfgsb():
    h = 1.0 / 64
    dom = Domain.interval(0.0, 1.0, h)
    psi = ScalarField.from_function(
        dom, lambda x: 0.4 - 6.0 * (x[..., 0] - 0.45) ** 2)
    f = ScalarField.from_function(dom, lambda x: 0.3 * x[..., 0])
    weight = lambda x: np.abs(x[..., 0] - 0.3) ** 0.5
    phis = [PhiFunction.power(3.0),
            PhiFunction.double_phase(1.5, 1.8, weight)]
    for phi in phis:
        prob = ObstacleProblem(dom, phi, psi, f)
        sol = solve(prob, SolverOptions(tol=1e-10))
        assert sol.converged, phi.family
        z = lbfgsb_obstacle_1d(prob)
        inside = np.flatnonzero(dom.inside)
        assert np.abs(sol.u.values[inside] - z).max() <= 1e-6, phi.family


def test_two_dim_nonquadratic_converges():
    dom = Domain.disk((0.0, 0.0), 1.0, 1.0 / 32)
    phi = PhiFunction.power(3.0)
    psi = ScalarField.from_function(
        dom, lambda x: 0.2 - x[..., 0] ** 2 - x[..., 1] ** 2)
    f = ScalarField.constant(dom, 0.0)
    prob = ObstacleProblem(dom, phi, psi, f)
    sol = solve(prob, SolverOptions(tol=1e-9))
    assert sol.converged
    assert sol.kkt_residual <= 1e-9 * prob.data_scale()
    assert sol.contact.any()
    assert sol.objective >= sol.energy - 1e-15
    # reported numbers match the public evaluators at delta = 0
    assert sol.energy == pytest.approx(energy(prob, sol.u), rel=1e-12)
    assert sol.objective == pytest.approx(full_objective(prob, sol.u), rel=1e-12)


def test_comparison_principle_holds():
    h = 1.0 / 96
    dom = Domain.interval(0.0, 1.0, h)
    phi = PhiFunction.power(3.0)
    psi1 = ScalarField.from_function(
        dom, lambda x: 0.3 - 5.0 * (x[..., 0] - 0.5) ** 2)
    psi2 = ScalarField.from_function(
        dom, lambda x: 0.35 - 4.0 * (x[..., 0] - 0.45) ** 2)
    f1 = ScalarField.constant(dom, 0.0)
    f2 = ScalarField.from_function(dom, lambda x: 0.05 + 0.1 * x[..., 0])
    p_low = ObstacleProblem(dom, phi, psi1, f1)
    p_high = ObstacleProblem(dom, phi, psi2, f2)
    res = comparison_check(p_low, p_high)
    assert res.holds
    assert res.max_deviation <= 1e-6


def test_comparison_check_rejects_bad_pairs():
    h = 1.0 / 32
    dom = Domain.interval(0.0, 1.0, h)
    phi = PhiFunction.power(2.0)
    f0 = ScalarField.constant(dom, 0.0)
    f1 = ScalarField.constant(dom, 0.5)
    base = ObstacleProblem(dom, phi, None, f0)
    # unordered boundary data
    with pytest.raises(ValueError):
        comparison_check(ObstacleProblem(dom, phi, None, f1), base)
    # different phi objects, even if equal families
    with pytest.raises(ValueError):
        comparison_check(base, ObstacleProblem(dom, PhiFunction.power(2.0),
                                               None, f1))
    # non strictly convex integrand
    lin = PhiFunction.power(1.0)
    with pytest.raises(ValueError):
        comparison_check(ObstacleProblem(dom, lin, None, f0),
                         ObstacleProblem(dom, lin, None, f1))
    # mismatched lattices
    other = Domain.interval(0.0, 1.0, 1.0 / 48)
    with pytest.raises(ValueError):
        comparison_check(base, ObstacleProblem(other, phi, None,
                                               ScalarField.constant(other, 0.5)))


def test_local_minimizer_restriction():
    prob = parabola_problem(1.0 / 128)
    sol = solve(prob, SolverOptions(tol=1e-11))
    region = prob.domain.cells_in_ball((0.2,), 0.12)
    res = local_min_restriction_check(sol, region)
    assert res.holds
    # also across the contact zone
    region2 = prob.domain.cells_in_ball((0.5,), 0.2)
    assert local_min_restriction_check(sol, region2).holds


def test_infeasible_obstacle_reports_location():
    dom = Domain.interval(0.0, 1.0, 1.0 / 16)
    phi = PhiFunction.power(2.0)
    psi = ScalarField.from_function(dom, lambda x: x[..., 0], where="all")
    f = ScalarField.constant(dom, 0.0)
    with pytest.raises(InfeasibleProblemError) as exc:
        ObstacleProblem(dom, phi, psi, f)
    assert exc.value.cell is not None
    assert exc.value.point is not None
    # the worst violation sits at the right end of the halo
    assert exc.value.point[0] > 0.9


def test_boundary_must_cover_halo():
    dom = Domain.interval(0.0, 1.0, 1.0 / 16)
    phi = PhiFunction.power(2.0)
    f = ScalarField.from_function(dom, lambda x: 0.0 * x[..., 0],
                                  where="inside")
    with pytest.raises(GeometryError):
        ObstacleProblem(dom, phi, None, f)


def test_solution_independent_of_start():
    rng = np.random.default_rng(2024)
    dom = Domain.rectangle((0.0, 0.0), (1.0, 1.0), 1.0 / 48)
    phi = PhiFunction.power(2.0)
    psi = ScalarField.from_function(
        dom, lambda x: 0.25 - 2.0 * ((x[..., 0] - 0.5) ** 2
                                     + (x[..., 1] - 0.5) ** 2))
    f = ScalarField.from_function(dom, lambda x: 0.1 * x[..., 1])
    prob = ObstacleProblem(dom, phi, psi, f)
    opts = SolverOptions(tol=1e-10)
    sols = []
    for _ in range(2):
        start = rng.uniform(-1.0, 1.0, size=dom.dims)
        sols.append(solve(prob, opts, start=start))
    assert all(s.converged for s in sols)
    diff = np.abs(sols[0].u.values - sols[1].u.values)[dom.inside].max()
    assert diff <= 1e-8


def test_descent_fallback_agrees_with_sor():
    prob = parabola_problem(1.0 / 64)
    sor = solve(prob, SolverOptions(tol=1e-11))
    bb = solve(prob, SolverOptions(tol=1e-6, gauss_seidel="off"))
    assert bb.converged
    inside = prob.domain.inside
    assert np.abs(sor.u.values - bb.u.values)[inside].max() <= 5e-5


def test_option_validation():
    prob = parabola_problem(1.0 / 32)
    with pytest.raises(ValueError):
        solve(prob, SolverOptions(gauss_seidel="maybe"))


def test_contact_is_empty_without_obstacle():
    dom = Domain.interval(0.0, 1.0, 1.0 / 32)
    phi = PhiFunction.power(2.0)
    f = ScalarField.from_function(dom, lambda x: x[..., 0])
    sol = solve(ObstacleProblem(dom, phi, None, f))
    assert not sol.contact.any()
    assert np.all(sol.contact.shape == dom.dims)


def test_history_tracks_convergence():
    prob = parabola_problem(1.0 / 64)
    sol = solve(prob, SolverOptions(tol=1e-10, track_history=True))
    assert sol.history
    kkts = [entry[2] for entry in sol.history]
    assert kkts[-1] <= kkts[0]
    assert kkts[-1] <= 1e-10 * prob.data_scale()


def test_seeded_random_comparison_pairs():
    # small randomized version of the ordered-data suite
    rng = np.random.default_rng(7)
    h = 1.0 / 64
    dom = Domain.interval(0.0, 1.0, h)
    xs = dom.lattice_centers()[:, 0]
    phi = PhiFunction.power(2.0)
    for _ in range(5):
        c = rng.uniform(0.3, 0.7)
        amp = rng.uniform(0.1, 0.4)
        lift = rng.uniform(0.01, 0.1)
        psi1 = ScalarField(dom, amp - 3.0 * (xs - c) ** 2, dom.inside)
        psi2 = ScalarField(dom, psi1.values + lift, dom.inside)
        f1 = ScalarField(dom, rng.uniform(-0.05, 0.0) * np.ones(dom.dims),
                         np.ones(dom.dims, bool))
        f2 = ScalarField(dom, f1.values + rng.uniform(0.0, 0.05),
                         np.ones(dom.dims, bool))
        res = comparison_check(ObstacleProblem(dom, phi, psi1, f1),
                               ObstacleProblem(dom, phi, psi2, f2))
        assert res.holds, res.detail
