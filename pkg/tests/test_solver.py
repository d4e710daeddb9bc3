"""Loss, gradient, composite prox, and solver behavior."""

import math

import numpy as np
import pytest

from expmc.families import (
    Bernoulli,
    Binomial,
    DomainError,
    Exponential,
    Gaussian,
    Poisson,
)
from expmc.regularizers import NuclearNorm, RowGroupNorm, svd_soft_threshold
from expmc.sampling import ObservationSet, full_indices, observe, sample_indices
from expmc.solver import Problem, composite_prox, solve
from oracles import nuclear_prox_objective, prox_subgradient_oracle

BIG_BOX = 1e9


def full_gaussian_problem(X, lam=0.0, alpha_star=BIG_BOX, sigma=1.0, **kw):
    m, n = X.shape
    omega = full_indices(m, n)
    omega = omega.with_values(X[omega.rows, omega.cols])
    return Problem(Gaussian(sigma), NuclearNorm(), omega, lam=lam,
                   alpha_star=alpha_star, **kw)


def random_problem(family, m=5, n=6, size=40, lam=0.1, alpha_star=None, seed=0,
                   theta_scale=1.0):
    rng = np.random.default_rng(seed)
    theta_star = rng.uniform(-theta_scale, theta_scale, (m, n))
    if family.name == "exponential":
        theta_star = theta_star - 2.0 * theta_scale
    omega = observe(sample_indices(m, n, size, seed=seed + 1), theta_star, family,
                    seed=seed + 2)
    if alpha_star is None:
        alpha_star = 3.0 * theta_scale * np.sqrt(m * n)
    return Problem(family, NuclearNorm(), omega, lam=lam, alpha_star=alpha_star), theta_star


ALL_FAMILIES = [Gaussian(1.0), Bernoulli(), Binomial(10), Poisson(), Exponential()]


class TestLoss:
    def test_single_zero_observation_at_zero(self):
        omega = ObservationSet(1, 1, np.array([0]), np.array([0]),
                               values=np.array([0.0]))
        problem = Problem(Gaussian(1.0), NuclearNorm(), omega, lam=0.0,
                          alpha_star=BIG_BOX)
        assert problem.loss(np.zeros((1, 1))) == pytest.approx(0.0)

    def test_single_bernoulli_success(self):
        omega = ObservationSet(1, 1, np.array([0]), np.array([0]),
                               values=np.array([1.0]))
        problem = Problem(Bernoulli(), NuclearNorm(), omega, lam=0.0, alpha_star=1.0)
        # log(1 + e^0) - 1 * 0
        assert problem.loss(np.zeros((1, 1))) == pytest.approx(math.log(2.0))

    def test_full_coverage_quadratic_expansion(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 6))
        theta_star = rng.standard_normal((6, 6))
        theta = rng.standard_normal((6, 6))
        problem = full_gaussian_problem(X)
        delta = theta - theta_star
        expected = 0.5 * np.sum(delta**2) - np.vdot(X - theta_star, delta)
        assert problem.loss(theta) - problem.loss(theta_star) == pytest.approx(expected)

    def test_duplicates_weight_per_instance(self):
        omega = ObservationSet(2, 2, np.array([0, 0, 1]), np.array([0, 0, 1]),
                               values=np.array([1.0, 2.0, 0.5]))
        problem = Problem(Gaussian(1.0), NuclearNorm(), omega, lam=0.0,
                          alpha_star=BIG_BOX)
        theta = np.array([[0.3, 0.0], [0.0, -0.2]])
        scale = 4.0 / 3.0
        expected = scale * (
            2 * 0.5 * 0.3**2 - (1.0 + 2.0) * 0.3
            + 0.5 * 0.2**2 - 0.5 * -0.2
        )
        assert problem.loss(theta) == pytest.approx(expected)

    def test_domain_violation_raises(self):
        problem, _ = random_problem(Exponential(), seed=5)
        with pytest.raises(DomainError):
            problem.loss(np.zeros((5, 6)))


class TestLossGradient:
    def test_stationary_at_observations(self):
        X = np.random.default_rng(1).standard_normal((5, 5))
        problem = full_gaussian_problem(X)
        np.testing.assert_allclose(problem.loss_gradient(X), 0.0, atol=1e-12)

    def test_single_bernoulli_success_direction(self):
        m, n = 3, 4
        omega = ObservationSet(m, n, np.array([0]), np.array([0]),
                               values=np.array([1.0]))
        problem = Problem(Bernoulli(), NuclearNorm(), omega, lam=0.0, alpha_star=100.0)
        grad = problem.loss_gradient(np.zeros((m, n)))
        assert grad[0, 0] == pytest.approx(-m * n * 0.5)
        assert np.count_nonzero(grad) == 1

    @pytest.mark.parametrize("family", ALL_FAMILIES, ids=lambda f: f.name)
    def test_matches_central_differences(self, family):
        problem, _ = random_problem(family, seed=3)
        rng = np.random.default_rng(4)
        theta = rng.uniform(-1.0, 1.0, (5, 6))
        if family.name == "exponential":
            theta = theta - 2.0
        grad = problem.loss_gradient(theta)
        h = 1e-6
        fd = np.zeros_like(theta)
        for i in range(theta.shape[0]):
            for j in range(theta.shape[1]):
                bump = np.zeros_like(theta)
                bump[i, j] = h
                fd[i, j] = (problem.loss(theta + bump) - problem.loss(theta - bump)) / (2 * h)
        scale = max(1.0, np.abs(grad).max())
        assert np.abs(fd - grad).max() <= 1e-6 * scale

    def test_zero_outside_sampled_cells(self):
        problem, _ = random_problem(Gaussian(1.0), size=7, seed=6)
        grad = problem.loss_gradient(np.zeros((5, 6)))
        mask = problem.observations.count_matrix() > 0
        assert np.all(grad[~mask] == 0.0)


class TestConvexity:
    @pytest.mark.parametrize("family", ALL_FAMILIES, ids=lambda f: f.name)
    def test_midpoint_inequality(self, family):
        problem, _ = random_problem(family, seed=8)
        rng = np.random.default_rng(9)
        for _ in range(20):
            a = rng.uniform(-1.0, 1.0, (5, 6))
            b = rng.uniform(-1.0, 1.0, (5, 6))
            if family.name == "exponential":
                a, b = a - 2.0, b - 2.0
            mid = problem.loss(0.5 * a + 0.5 * b)
            assert mid <= 0.5 * problem.loss(a) + 0.5 * problem.loss(b) + 1e-10


class TestCompositeProx:
    def test_zero_penalty_is_clip(self):
        omega = ObservationSet(1, 1, np.array([0]), np.array([0]),
                               values=np.array([0.0]))
        problem = Problem(Gaussian(1.0), NuclearNorm(), omega, lam=0.0, alpha_star=1.0)
        out = composite_prox(problem, np.array([[5.0]]), tau=1.0)
        assert out[0, 0] == pytest.approx(1.0)

    def test_huge_box_equals_plain_prox(self):
        rng = np.random.default_rng(10)
        M = rng.standard_normal((4, 4))
        problem = full_gaussian_problem(M, lam=0.7, alpha_star=BIG_BOX)
        np.testing.assert_allclose(
            composite_prox(problem, M, tau=1.0),
            svd_soft_threshold(M, 0.7),
            atol=1e-12,
        )

    def test_output_always_box_feasible(self):
        rng = np.random.default_rng(11)
        M = 5.0 * rng.standard_normal((4, 4))
        problem = full_gaussian_problem(M, lam=0.3, alpha_star=4.0)
        out = composite_prox(problem, M, tau=1.0)
        assert np.abs(out).max() <= problem.box_radius + 1e-12

    def test_matches_subgradient_oracle_with_active_box(self):
        rng = np.random.default_rng(12)
        M = rng.standard_normal((3, 3))
        radius = 0.4 * np.abs(M).max()
        problem = full_gaussian_problem(M, lam=0.5,
                                        alpha_star=radius * 3.0)
        problem.dykstra_iters = 400
        ours = composite_prox(problem, M, tau=1.0)
        oracle, oracle_val = prox_subgradient_oracle(M, 0.5, radius=radius,
                                                     iters=300_000)
        ours_val = nuclear_prox_objective(ours, M, 0.5)
        assert abs(ours_val - oracle_val) <= 1e-5
        assert np.linalg.norm(ours - oracle) <= 1e-3


class TestSolve:
    def test_full_gaussian_unpenalized_recovers_observations(self):
        X = np.random.default_rng(13).standard_normal((8, 8))
        result = solve(full_gaussian_problem(X))
        assert result.converged
        assert np.linalg.norm(result.theta_hat - X) <= 1e-6

    def test_full_gaussian_nuclear_equals_one_shot_shrinkage(self):
        X = np.random.default_rng(14).standard_normal((8, 8))
        lam = 0.7
        result = solve(full_gaussian_problem(X, lam=lam))
        np.testing.assert_allclose(
            result.theta_hat, svd_soft_threshold(X, lam), atol=1e-5
        )

    def test_one_cell_bernoulli_clamps_at_box(self):
        omega = ObservationSet(1, 1, np.array([0]), np.array([0]),
                               values=np.array([1.0]))
        problem = Problem(Bernoulli(), NuclearNorm(), omega, lam=0.0, alpha_star=1.0)
        result = solve(problem)
        # the likelihood is monotone in the parameter, so the box binds
        assert result.theta_hat[0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_monotone_trace_and_feasibility(self):
        problem, _ = random_problem(Bernoulli(), m=12, n=12, size=100, lam=0.4,
                                    alpha_star=12.0, seed=15)
        result = solve(problem)
        assert np.all(np.diff(result.objective_trace) <= 1e-12)
        assert np.abs(result.theta_hat).max() <= problem.box_radius + 1e-12

    def test_fixed_point_residual_small(self):
        problem, _ = random_problem(Gaussian(1.0), m=10, n=10, size=70, lam=0.3,
                                    alpha_star=30.0, seed=16)
        result = solve(problem)
        assert result.converged
        assert result.final_grad_map_norm <= 1e-5

    def test_no_feasible_perturbation_improves(self):
        problem, _ = random_problem(Poisson(), m=6, n=6, size=50, lam=0.2,
                                    alpha_star=9.0, seed=17)
        result = solve(problem)
        base = problem.objective(result.theta_hat)
        rng = np.random.default_rng(18)
        for _ in range(100):
            candidate = problem.clip(
                result.theta_hat + 0.01 * rng.standard_normal((6, 6))
            )
            assert base <= problem.objective(candidate) + 1e-6

    def test_nonconvergence_flagged_with_trace(self):
        problem, _ = random_problem(Gaussian(1.0), m=10, n=10, size=80, lam=0.3,
                                    alpha_star=30.0, seed=19)
        problem.max_iters = 3
        problem.tol_obj = 0.0
        result = solve(problem)
        assert not result.converged
        assert result.iterations == 3
        assert len(result.objective_trace) == 4

    def test_exponential_channel_stays_in_domain(self):
        problem, theta_star = random_problem(Exponential(), m=6, n=6, size=80,
                                             lam=0.05, seed=20)
        result = solve(problem)
        assert result.theta_hat.max() < 0.0
        assert np.abs(result.theta_hat).max() <= problem.box_radius + 1e-12
        assert np.all(np.diff(result.objective_trace) <= 1e-12)

    def test_row_group_penalty_solves(self):
        rng = np.random.default_rng(21)
        theta_star = np.zeros((8, 6))
        theta_star[:2] = rng.uniform(-1, 1, (2, 6))
        omega = observe(sample_indices(8, 6, 120, seed=22), theta_star,
                        Gaussian(1.0), seed=23)
        problem = Problem(Gaussian(1.0), RowGroupNorm(2.0), omega, lam=0.8,
                          alpha_star=3.0 * np.sqrt(48))
        result = solve(problem)
        assert result.converged
        base = problem.objective(result.theta_hat)
        for _ in range(50):
            candidate = problem.clip(
                result.theta_hat + 0.02 * rng.standard_normal((8, 6))
            )
            assert base <= problem.objective(candidate) + 1e-6


class TestProblemValidation:
    def test_negative_penalty_rejected(self):
        omega = full_indices(2, 2).with_values(np.zeros(4))
        with pytest.raises(ValueError):
            Problem(Gaussian(1.0), NuclearNorm(), omega, lam=-1.0, alpha_star=1.0)

    def test_values_required(self):
        with pytest.raises(ValueError):
            Problem(Gaussian(1.0), NuclearNorm(), full_indices(2, 2), lam=0.0,
                    alpha_star=1.0)

    def test_box_must_meet_domain(self):
        omega = full_indices(2, 2).with_values(np.ones(4))
        with pytest.raises(ValueError):
            # radius 5e-7 below the domain margin of the exponential channel
            Problem(Exponential(), NuclearNorm(), omega, lam=0.0, alpha_star=1e-6)

    def test_curvature_bound_uses_counts(self):
        omega = ObservationSet(2, 2, np.array([0, 0, 1]), np.array([0, 0, 1]),
                               values=np.array([0.0, 0.0, 0.0]))
        problem = Problem(Gaussian(2.0), NuclearNorm(), omega, lam=0.0,
                          alpha_star=10.0)
        # scale (4/3) * max count (2) * variance (4)
        assert problem.curvature_bound() == pytest.approx(4.0 / 3.0 * 2.0 * 4.0)
