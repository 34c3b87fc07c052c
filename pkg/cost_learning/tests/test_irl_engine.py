from types import SimpleNamespace
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from cost_learning import irl_engine, oc_solver
from cost_learning.domain import ConfigurationError, FeatureVector, NumericalError, negative_log_likelihood
from cost_learning.featurizer import subsample_grid
from cost_learning.irl_engine import (
    IRLConfig,
    IRLDataset,
    TerminationReason,
    TrajectoryWindow,
    accept_step,
    build_dataset,
    compute_gamma,
    disable_features,
    merit_m1,
    merit_m2,
    nll_gradient,
    nll_objective,
    smooth_objective,
    solve_step_direction,
)

from .factories import obstacle_env, quadratic_env, random_trajectory, weights


def make_dataset(delta_phi, gamma, theta=None):
    delta_phi = np.asarray(delta_phi, dtype=float)
    theta = np.ones(delta_phi.shape[1]) if theta is None else np.asarray(theta, dtype=float)
    return IRLDataset(
        delta_phi=delta_phi,
        gamma=np.asarray(gamma, dtype=float),
        theta=theta,
        phi_star=np.zeros(delta_phi.shape[1:]),
    )


def random_dataset(rng, M=3, D=4, K=5, scale=1.0):
    delta_phi = rng.normal(scale=scale, size=(M, D, K))
    gamma = np.exp(rng.normal(size=M))
    theta = np.sort(rng.uniform(0.1, 1.0, size=D))[::-1]
    return make_dataset(delta_phi, gamma, theta)


class GammaTests(SimpleTestCase):

    def test_identical_features(self):
        self.assertEqual(compute_gamma([1.0, 2.0], [3.0, 4.0], [3.0, 4.0]), 1.0)

    def test_zero_weights(self):
        self.assertEqual(compute_gamma([0.0, 0.0], [3.0, 4.0], [1.0, 1.0]), 1.0)

    def test_half(self):
        self.assertAlmostEqual(compute_gamma([1.0, 0.0], [np.log(2), 7.0], [0.0, 0.0]), 0.5)

    def test_clamped(self):
        self.assertEqual(compute_gamma([1.0], [1e4], [0.0]), irl_engine.GAMMA_MIN)
        self.assertEqual(compute_gamma([1.0], [0.0], [1e4]), irl_engine.GAMMA_MAX)


class ObjectiveTests(SimpleTestCase):

    def test_single_trajectory_at_zero(self):
        dataset = make_dataset([[[1.0, 2.0]]], [1.0])
        self.assertAlmostEqual(nll_objective(np.zeros(2), dataset, 0.3, 0.7), np.log(2))

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            dataset = random_dataset(rng, scale=0.3)
            dw = rng.normal(scale=0.3, size=dataset.feature_count)
            lam, beta = 0.1, 0.2
            direct = sum(
                dataset.theta[d] * np.log(1 + np.sum(dataset.gamma * np.exp(-dataset.delta_phi[:, d, :] @ dw)))
                for d in range(dataset.theta.size)
            ) + lam * np.abs(dw).sum() + 0.5 * beta * dw @ dw
            self.assertAlmostEqual(nll_objective(dw, dataset, lam, beta), direct, delta=1e-10 * abs(direct))

    def test_objective_is_likelihood_at_shifted_weights(self):
        rng = np.random.default_rng(1)
        w = rng.uniform(0.5, 1.0, size=4)
        phi_star = rng.uniform(0, 1, size=4)
        others = [rng.uniform(0, 1, size=4) for _ in range(3)]
        dataset = make_dataset(
            np.array([[phi - phi_star] for phi in others]),
            [compute_gamma(w, phi, phi_star) for phi in others],
        )
        dw = rng.normal(scale=0.1, size=4)
        self.assertAlmostEqual(
            nll_objective(dw, dataset, 0.0, 0.0), negative_log_likelihood(w + dw, phi_star, others), places=10
        )

    def test_dimension_mismatch(self):
        dataset = make_dataset([[[1.0, 2.0]]], [1.0])
        with self.assertRaises(ConfigurationError):
            nll_objective(np.zeros(3), dataset, 0.0, 0.0)


class GradientTests(SimpleTestCase):

    def test_vanishing_differences(self):
        dataset = make_dataset(np.zeros((2, 3, 4)), [1.0, 2.0], [1.0, 0.5, 0.25])
        dw = np.array([0.1, -0.2, 0.3, 0.4])
        np.testing.assert_allclose(nll_gradient(dw, dataset, 0.0, 0.5), 0.5 * dw)

    def test_half_weight_at_zero(self):
        delta = np.array([1.0, -2.0, 3.0])
        dataset = make_dataset([[delta]], [1.0])
        np.testing.assert_allclose(nll_gradient(np.zeros(3), dataset, 0.0, 0.0), -delta / 2)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(100):
            dataset = random_dataset(rng, M=int(rng.integers(1, 4)), D=int(rng.integers(1, 5)))
            dw = rng.normal(scale=0.5, size=dataset.feature_count)
            beta = rng.uniform(0, 1)
            numeric = np.array([
                (smooth_objective(dw + h * e, dataset, beta) - smooth_objective(dw - h * e, dataset, beta)) / (2 * h)
                for e in np.eye(dataset.feature_count)
            ])
            np.testing.assert_allclose(nll_gradient(dw, dataset, 0.0, beta), numeric, rtol=1e-6, atol=1e-8)


class StepDirectionTests(SimpleTestCase):

    def setUp(self):
        self.cfg = IRLConfig()

    def test_no_information_gives_zero_step(self):
        dataset = make_dataset(np.zeros((1, 2, 3)), [1.0], [1.0, 0.5])
        np.testing.assert_array_equal(solve_step_direction(np.full(3, 0.01), dataset, self.cfg), np.zeros(3))

    def test_descent_and_box(self):
        rng = np.random.default_rng(3)
        for bound in (None, 1.0):
            cfg = IRLConfig(weight_upper_bound=bound)
            for _ in range(25):
                dataset = random_dataset(rng)
                w = rng.uniform(0.01, 1.0, size=dataset.feature_count)
                dw = solve_step_direction(w, dataset, cfg)
                zero = nll_objective(np.zeros_like(dw), dataset, cfg.lambda_l1, cfg.beta_l2)
                self.assertLessEqual(nll_objective(dw, dataset, cfg.lambda_l1, cfg.beta_l2), zero + 1e-12)
                self.assertTrue(np.all(dw >= -w + cfg.box_epsilon))
                if bound is not None:
                    self.assertTrue(np.all(w + dw <= bound + 1e-12))

    def test_costlier_sample_raises_weights(self):
        w = np.full(3, 0.01)
        dataset = make_dataset([[[0.5, 0.2, 0.1]]], [compute_gamma(w, [0.5, 0.2, 0.1], np.zeros(3))])
        cfg = IRLConfig(lambda_l1=0.0, beta_l2=0.0, inner_max_iterations=50)
        dw = solve_step_direction(w, dataset, cfg)
        self.assertGreater(dw @ np.array([0.5, 0.2, 0.1]), 0.0)

    def test_far_sample_barely_changes_step(self):
        w = np.full(3, 0.5)
        near = np.array([0.5, 0.2, 0.1])
        far = np.full(3, 40.0)
        self.assertGreaterEqual(w @ far, 50)
        base = make_dataset([[near]], [compute_gamma(w, near, np.zeros(3))])
        injected = make_dataset([[near], [far]], [compute_gamma(w, near, np.zeros(3)), compute_gamma(w, far, np.zeros(3))])
        difference = solve_step_direction(w, injected, self.cfg) - solve_step_direction(w, base, self.cfg)
        self.assertLess(np.max(np.abs(difference)), 1e-6)


class MeritTests(SimpleTestCase):

    def test_m1(self):
        self.assertEqual(merit_m1([1.0, 1.0], [2.0, 3.0], [2.0, 3.0]), 0.0)
        self.assertAlmostEqual(merit_m1([1.0, 1.0], [1.0, 2.0], [0.0, 0.0]), 4.5)
        self.assertEqual(merit_m1([0.0, 0.0], [1.0, 2.0], [5.0, 0.0]), 0.0)

    def test_m2(self):
        self.assertEqual(merit_m2([1.0, 1.0], [1.0, 1.0]), 0.0)
        self.assertAlmostEqual(merit_m2([3.0, 4.0], [0.0, 0.0]), 5.0)
        self.assertEqual(merit_m2([1.0, 7.0], [2.0, 3.0]), merit_m2([2.0, 3.0], [1.0, 7.0]))


class AcceptStepTests(SimpleTestCase):
    """El oráculo de OC se reemplaza por uno que devuelve Phi~ programado por alpha."""

    def setUp(self):
        self.w = np.array([1.0, 1.0])
        self.dw = np.array([0.5, 0.5])
        self.phi_star = np.array([1.0, 1.0])
        self.phi_prev = np.array([0.0, 2.0])
        self.prev_m2 = merit_m2(self.phi_star, self.phi_prev)
        self.calls = []

    def _oracle(self, features_for_alpha, fail_for=()):
        def oracle(env, w, x0=None, warm_start=None, cfg=None):
            alpha = float((w[0] - self.w[0]) / self.dw[0])
            self.calls.append(alpha)
            if alpha in fail_for:
                raise NumericalError('costo no finito')
            return SimpleNamespace(trajectory=tuple(features_for_alpha(alpha)))
        return oracle

    def _accept(self, oracle, cfg=None, dw=None, prev_m1=None):
        if prev_m1 is None:
            prev_m1 = merit_m1(self.w, self.phi_star, self.phi_prev)
        with mock.patch.object(irl_engine, 'integrate_features', lambda trajectory, env: FeatureVector(trajectory)):
            return accept_step(
                self.w, self.dw if dw is None else dw, self.phi_star, prev_m1, self.prev_m2, None, None,
                cfg or IRLConfig(), phi_tilde_prev=self.phi_prev, oracle=oracle,
            )

    def test_immediate_acceptance(self):
        outcome = self._accept(self._oracle(lambda alpha: (1.0, 1.5)))
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.alpha, 1.0)
        self.assertEqual(outcome.trials, 1)

    def test_only_sixteenth_improves(self):
        oracle = self._oracle(lambda alpha: (1.0, 2.0) if alpha == 1 / 16 else (1.0, 3.0))
        outcome = self._accept(oracle)
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.alpha, 1 / 16)
        self.assertEqual(outcome.trials, 3)
        self.assertEqual(outcome.branch, 'merit')
        self.assertEqual(self.calls, [1.0, 0.25, 1 / 16])
        np.testing.assert_allclose(outcome.weights, self.w + self.dw / 16)
        self.assertEqual(outcome.m2, 1.0)

    def test_exhausted_after_ten_trials(self):
        outcome = self._accept(self._oracle(lambda alpha: (1.0, 3.0)))
        self.assertFalse(outcome.accepted)
        self.assertEqual(len(self.calls), 10)

    def test_zero_direction_rejected(self):
        outcome = self._accept(self._oracle(lambda alpha: tuple(self.phi_prev)), dw=np.zeros(2))
        self.assertFalse(outcome.accepted)

    def test_forced_when_acceptance_disabled(self):
        outcome = self._accept(self._oracle(lambda alpha: (1.0, 3.0)), cfg=IRLConfig(step_acceptance=False))
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.alpha, 1.0)
        self.assertEqual(outcome.branch, 'forced')

    def test_solver_failure_counts_as_trial(self):
        outcome = self._accept(self._oracle(lambda alpha: (1.0, 1.5), fail_for=(1.0,)))
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.alpha, 0.25)
        self.assertEqual(outcome.trials, 2)

    def test_wolfe_conditions(self):
        self.phi_prev = np.array([0.0, 0.0])
        self.prev_m2 = 0.0
        outcome = self._accept(self._oracle(lambda alpha: (1.0, 1.0)), dw=np.array([-0.5, -0.5]))
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.branch, 'wolfe')
        self.assertEqual(outcome.m1, 0.0)

    def test_armijo_starts_from_previous_m1(self):
        self.phi_prev = np.array([0.0, 0.0])
        self.prev_m2 = 0.0
        outcome = self._accept(self._oracle(lambda alpha: (1.0, 1.0)), dw=np.array([-0.5, -0.5]), prev_m1=0.0)
        self.assertFalse(outcome.accepted)

    def test_wolfe_rejects_shrinking_weights_that_move_away(self):
        # w -> w/2 deja m1 = 0 con Phi~ = (3, -1), pero m2 pasa de sqrt(2) a 2 sqrt(2)
        self.phi_prev = np.array([0.0, 0.0])
        self.prev_m2 = merit_m2(self.phi_star, self.phi_prev)
        outcome = self._accept(self._oracle(lambda alpha: (3.0, -1.0)), dw=np.array([-0.5, -0.5]))
        self.assertFalse(outcome.accepted)
        self.assertEqual(len(self.calls), 10)

    def test_curvature_uses_previous_trajectory(self):
        # con Phi~ nuevo |g(1)| = 3.61 > 0.9 |g0|; con Phi~ anterior |g(1)| = 1
        self.phi_prev = np.array([0.0, 0.0])
        self.prev_m2 = 5.0
        outcome = self._accept(self._oracle(lambda alpha: (-0.9, -0.9)), dw=np.array([-0.5, -0.5]))
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.branch, 'wolfe')
        self.assertEqual(outcome.alpha, 1.0)
        self.assertAlmostEqual(outcome.m1, 1.805)


class WindowTests(SimpleTestCase):

    def test_keeps_latest_samples(self):
        env = quadratic_env(horizon_T=10)
        window = TrajectoryWindow(env, 2, subsample_grid(10, 3))
        trajectories = [random_trajectory(env, seed=seed) for seed in range(3)]
        for trajectory in trajectories:
            window.append(trajectory)
        self.assertEqual(len(window), 2)
        self.assertEqual([sample.trajectory for sample in window], trajectories[1:])

    def test_dataset_shapes(self):
        env = quadratic_env(horizon_T=10)
        grid = subsample_grid(10, 3)
        window = TrajectoryWindow(env, 3, grid)
        for seed in range(2):
            window.append(random_trajectory(env, seed=seed))
        star = window.featurize(random_trajectory(env, seed=9)).truncated
        w = np.full(env.feature_count, 0.01)
        dataset = build_dataset(window, star, w, grid, 10)
        self.assertEqual(dataset.delta_phi.shape, (2, 3, env.feature_count))
        np.testing.assert_allclose(dataset.theta, [1.0, 8 / 11, 4 / 11])
        expected = [compute_gamma(w, sample.full, star[0]) for sample in window]
        np.testing.assert_allclose(dataset.gamma, expected)


class ConfigTests(SimpleTestCase):

    def test_wolfe_constants_ordered(self):
        with self.assertRaises(ConfigurationError):
            IRLConfig(wolfe_c1=0.95, wolfe_c2=0.9)

    def test_disable_features(self):
        cfg = disable_features(IRLConfig(), step_acceptance=False, regularization=False, subsampling=False)
        self.assertFalse(cfg.step_acceptance)
        self.assertEqual((cfg.lambda_l1, cfg.beta_l2, cfg.subsamples_N), (0.0, 0.0, 1))
        self.assertEqual(disable_features(IRLConfig()), IRLConfig())


class LearningLoopTests(SimpleTestCase):

    def setUp(self):
        self.env = quadratic_env(horizon_T=20)
        self.w_star = weights(self.env, stage_G=1.0, stage_XReg=0.01, stage_UReg=0.1, terminal_G=100.0, terminal_XReg=0.01)
        self.tau_star = oc_solver.solve(self.env, self.w_star).trajectory
        self.cfg = IRLConfig(subsamples_N=5, max_outer_iterations=6)

    def test_log_and_feasibility(self):
        result = irl_engine.run(self.tau_star, self.env, self.cfg, true_weights=self.w_star)
        self.assertIsInstance(result.termination_reason, TerminationReason)
        self.assertEqual(result.iteration_log[0].iteration, 0)
        self.assertEqual(len(result.samples), len(result.iteration_log))
        self.assertLessEqual(result.outer_iterations, 6)
        for record in result.iteration_log:
            self.assertTrue(np.all(record.weights >= 0))
            self.assertLessEqual(record.samples_used, self.cfg.window_L)
            self.assertIsNotNone(record.cost_gap_true_w)
        previous = {record.iteration: record.m2 for record in result.iteration_log}
        for record in result.iteration_log[1:]:
            self.assertLessEqual(record.m2, previous[record.iteration - 1])
            if record.branch == 'merit':
                self.assertLess(record.m2, previous[record.iteration - 1])

    def test_trials_start_from_zero_controls_unless_warm_start(self):
        for warm_start in (False, True):
            received = []

            def oracle(env, w, **kwargs):
                received.append(kwargs.get('warm_start'))
                return oc_solver.solve(env, w, **kwargs)

            cfg = IRLConfig(subsamples_N=5, max_outer_iterations=2, warm_start=warm_start)
            irl_engine.run(self.tau_star, self.env, cfg, oracle=oracle)
            self.assertGreater(len(received), 1)
            if warm_start:
                self.assertTrue(all(item is not None for item in received[1:]))
            else:
                self.assertTrue(all(item is None for item in received))

    def test_bounded_weights(self):
        cfg = IRLConfig(subsamples_N=5, max_outer_iterations=4, weight_upper_bound=1.0)
        result = irl_engine.run(self.tau_star, self.env, cfg)
        for record in result.iteration_log:
            self.assertTrue(np.all(record.weights <= 1.0))

    def test_deterministic(self):
        first = irl_engine.run(self.tau_star, self.env, self.cfg)
        second = irl_engine.run(self.tau_star, self.env, self.cfg)
        np.testing.assert_array_equal(first.final_weights.values, second.final_weights.values)
        self.assertEqual([r.m2 for r in first.iteration_log], [r.m2 for r in second.iteration_log])

    def test_numerical_failure_keeps_partial_result(self):
        with mock.patch.object(irl_engine, 'solve_step_direction', side_effect=NumericalError('objetivo no finito')):
            with self.assertRaises(NumericalError) as cm:
                irl_engine.run(self.tau_star, self.env, self.cfg)
        partial = cm.exception.partial_result
        self.assertEqual(len(partial.iteration_log), 1)
        self.assertIsNone(partial.termination_reason)

    def test_too_many_subsamples(self):
        with self.assertRaises(ConfigurationError):
            irl_engine.MOIRL(self.env, IRLConfig(subsamples_N=21))

    def test_converged_demo_stops_immediately(self):
        result = irl_engine.run(
            self.tau_star, self.env, self.cfg,
            oracle=lambda env, w, **kwargs: SimpleNamespace(trajectory=self.tau_star),
        )
        self.assertEqual(result.termination_reason, TerminationReason.M2_BELOW_TOL)
        self.assertEqual(result.outer_iterations, 0)
        self.assertIs(result.final_trajectory, self.tau_star)


class ObstacleLearningTests(SimpleTestCase):

    def setUp(self):
        self.env = obstacle_env(horizon_T=30)
        self.w_star = weights(
            self.env, stage_G=1.0, stage_XReg=0.01, stage_UReg=0.1, stage_Obs_1=1000.0, stage_Obs_2=1000.0,
            terminal_G=100.0, terminal_XReg=0.01, terminal_Obs_1=10.0, terminal_Obs_2=10.0,
        )
        self.tau_star = oc_solver.solve(self.env, self.w_star).trajectory

    def test_accepted_m2_never_grows(self):
        cfg = IRLConfig(subsamples_N=5, max_outer_iterations=5)
        result = irl_engine.run(self.tau_star, self.env, cfg, true_weights=self.w_star)
        m2_values = [record.m2 for record in result.iteration_log]
        self.assertEqual(m2_values, sorted(m2_values, reverse=True))
        self.assertLessEqual(result.final_m2, result.iteration_log[0].m2)
        for record in result.iteration_log:
            self.assertTrue(np.all(record.weights > 0))
