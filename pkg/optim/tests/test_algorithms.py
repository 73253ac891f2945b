import math
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from optim.algorithms import (
    GammaSchedule, adaptive_step, baseline_adaptive_step, extra_step, gamma_schedule,
    init_adaptive_state, init_baseline_state, init_extra_state, safeguard_update,
)
from optim.backtracking import backtrack
from optim.exceptions import DivergenceError, ParameterError
from optim.exchange import NeighborExchange
from optim.graph_topology import build_erdos_renyi, build_line_graph, diameter, metropolis_gossip
from optim.losses import LossFamily, QuadraticLoss, alternating_quadratics, generate_quadratic
from optim.metrics import fixed_point

NO_GROWTH = GammaSchedule(constant=1.0)


def scaled_square(scales):
    """f_i(x) = scales[i] ||x||^2 in one dimension"""
    return LossFamily([QuadraticLoss(np.sqrt(s) * np.eye(1), np.zeros(1)) for s in scales])


class GammaScheduleTests(SimpleTestCase):
    def test_default_schedule(self):
        self.assertEqual(gamma_schedule(0), 2.0)
        self.assertAlmostEqual(gamma_schedule(10 ** 9), 1.0, places=8)
        self.assertAlmostEqual(gamma_schedule(3, 2.0, 2.0), (5 / 4) ** 2)

    def test_illegal_parameters(self):
        with self.assertRaises(ParameterError):
            gamma_schedule(0, 2.0, 0.0)
        with self.assertRaises(ParameterError):
            gamma_schedule(0, 0.5, 1.0)
        with self.assertRaises(ParameterError):
            GammaSchedule(constant=0.9)

    def test_schedule_object(self):
        schedule = GammaSchedule(freeze_after=5)
        self.assertEqual(schedule.at(-1), 1.0)
        self.assertEqual(schedule.at(0), 2.0)
        self.assertEqual(schedule.at(4), 6 / 5)
        self.assertEqual(schedule.at(5), 1.0)
        self.assertEqual(GammaSchedule(constant=1.3).at(7), 1.3)


class AdaptiveStepTests(SimpleTestCase):
    def test_uniform_stepsizes_match_global_baseline(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            m, d = int(rng.integers(2, 6)), int(rng.integers(1, 4))
            g = build_erdos_renyi(m, 0.6, seed=trial)
            gm = metropolis_gossip(g)
            family = generate_quadratic(m, 4, d, 0.1, seed=trial)
            X0 = rng.standard_normal((m, d))

            adaptive = init_adaptive_state(X0)
            baseline = init_baseline_state(X0, mode='global')
            schedule = GammaSchedule()
            for _ in range(50):
                adaptive = adaptive_step(adaptive, gm, family, schedule, force_uniform=True)
                baseline = baseline_adaptive_step(baseline, gm, family, schedule)
                assert_allclose(adaptive.X, baseline.X, rtol=0, atol=1e-12)
                assert_allclose(adaptive.Y, baseline.Y, rtol=0, atol=1e-12)
                assert_allclose(adaptive.theta, baseline.theta, rtol=0, atol=1e-12)

    def test_fixed_point_is_stationary(self):
        rng = np.random.default_rng(1)
        for seed in range(10):
            m, d = int(rng.integers(2, 6)), int(rng.integers(1, 4))
            gm = metropolis_gossip(build_erdos_renyi(m, 0.6, seed=seed))
            family = generate_quadratic(m, 5, d, 0.2, seed=seed)
            fp = fixed_point(family, gm)
            theta = float(rng.uniform(0.01, 0.1))

            state = replace(init_adaptive_state(fp.X_star, theta0=theta), Y=fp.Y_star.copy())
            state = adaptive_step(state, gm, family, NO_GROWTH)
            scale = max(np.linalg.norm(fp.X_star), 1.0)
            self.assertLessEqual(np.linalg.norm(state.X - fp.X_star), 1e-10 * scale)
            self.assertLessEqual(np.linalg.norm(state.Y - fp.Y_star), 1e-10 * max(np.linalg.norm(fp.Y_star), 1.0))

            baseline = replace(init_baseline_state(fp.X_star, theta0=theta), Y=fp.Y_star.copy())
            baseline = baseline_adaptive_step(baseline, gm, family, NO_GROWTH)
            self.assertLessEqual(np.linalg.norm(baseline.X - fp.X_star), 1e-10 * scale)

    def test_single_agent_is_backtracked_gradient_descent(self):
        gm = metropolis_gossip(build_line_graph(1))
        family = LossFamily([QuadraticLoss(np.array([[1.0, 0.5]]), np.array([2.0]), 0.3)])
        state = init_adaptive_state(np.array([[1.0, -1.0]]))
        x, theta = np.array([1.0, -1.0]), 1.0
        schedule = GammaSchedule()
        for k in range(10):
            expected = backtrack(theta, family[0], x, -family[0].gradient(x), schedule.at(k - 1))
            state = adaptive_step(state, gm, family, schedule)
            x, theta = expected.x_plus, expected.theta
            assert_allclose(state.X[0], x, rtol=1e-12, atol=1e-14)
            assert_array_equal(state.Y, np.zeros((1, 2)))

    def test_dual_sum_is_conserved(self):
        g = build_erdos_renyi(8, 0.4, seed=3)
        gm = metropolis_gossip(g)
        family = generate_quadratic(8, 6, 3, 0.0, seed=3)
        state = init_adaptive_state(np.random.default_rng(3).standard_normal((8, 3)))
        for _ in range(40):
            state = adaptive_step(state, gm, family, GammaSchedule())
            grad_scale = np.abs(family.stacked_gradient(state.X)).max()
            self.assertLessEqual(np.abs(state.Y.sum(axis=0)).max(), 1e-8 * max(grad_scale, 1.0))

    def test_round_counts_and_locality(self):
        g = build_line_graph(5)
        gm = metropolis_gossip(g)
        family = generate_quadratic(5, 4, 2, 0.1, seed=0)
        exchange = NeighborExchange(g, keep_history=True)
        state = init_adaptive_state(np.ones((5, 2)))
        for k in range(1, 6):
            state = adaptive_step(state, gm, family, GammaSchedule(), exchange=exchange)
            self.assertEqual(exchange.snapshot(), (3 * k, 3 * k))
        self.assertTrue(exchange.audit())

        exchange = NeighborExchange(g)
        state = init_adaptive_state(np.ones((5, 2)), safeguard=True)
        adaptive_step(state, gm, family, GammaSchedule(), exchange=exchange, safeguard_radius=1e9)
        self.assertEqual(exchange.snapshot(), (3, 4))

    def test_diameter_estimates_on_line_graphs(self):
        for m in (5, 10, 20):
            g = build_line_graph(m)
            gm = metropolis_gossip(g)
            family = generate_quadratic(m, 3, 4, 0.1, seed=m)
            state = init_adaptive_state(np.random.default_rng(m).standard_normal((m, 4)), d0=1)
            bound = math.ceil(math.log2(2 * (m - 1)))
            previous = state.d
            for _ in range(300):
                state = adaptive_step(state, gm, family, GammaSchedule())
                self.assertTrue(np.all(state.d >= previous))
                self.assertLessEqual(state.d.max(), 2 * diameter(g))
                previous = state.d
            self.assertLessEqual(state.doublings.max(), bound)

    def test_failing_agent_doubles_its_own_estimate(self):
        # agent 3 is steep, so agent 0's one-hop view of the auxiliary stepsize misses it
        g = build_line_graph(4)
        gm = metropolis_gossip(g)
        family = scaled_square([1.0, 1.0, 1.0, 100.0])
        X0 = np.random.default_rng(6).standard_normal((4, 1))
        state = replace(init_adaptive_state(X0), d=np.array([1, 4, 4, 4]), k=1)

        state = adaptive_step(state, gm, family, GammaSchedule())
        assert_array_equal(state.doublings, [1, 0, 0, 0])
        assert_array_equal(state.d, [4, 4, 4, 4])
        self.assertLessEqual(state.d.max(), 2 * diameter(g))

    def test_dual_stepsizes_consensual_at_resets(self):
        for m in (5, 10, 20):
            g = build_line_graph(m)
            gm = metropolis_gossip(g)
            family = generate_quadratic(m, 3, 4, 0.1, seed=m)
            X0 = np.random.default_rng(m).standard_normal((m, 4))

            known = diameter(g)
            state = init_adaptive_state(X0)
            for _ in range(100):
                k = state.k
                state = adaptive_step(state, gm, family, GammaSchedule(), horizon=known)
                if k % known == 0:
                    self.assertEqual(np.ptp(state.pi), 0.0)

            state = init_adaptive_state(X0)
            checked = 0
            for _ in range(300):
                k, d = state.k, state.d
                state = adaptive_step(state, gm, family, GammaSchedule())
                common = d[0]
                if np.all(d == common) and np.all(state.d == common) and k % common == 0:
                    self.assertEqual(np.ptp(state.pi), 0.0)
                    checked += 1
            self.assertGreater(checked, 0)

    def test_auxiliary_stepsize_recovers_network_min(self):
        g = build_line_graph(6)
        gm = metropolis_gossip(g)
        family = generate_quadratic(6, 3, 2, 0.1, seed=8)
        schedule = GammaSchedule(constant=1.1)
        known = diameter(g)
        state = init_adaptive_state(np.random.default_rng(8).standard_normal((6, 2)), theta0=1e-3)

        thetas, tildes = [], []
        for _ in range(200):
            state = adaptive_step(state, gm, family, schedule, horizon=known)
            thetas.append(state.theta.min())
            tildes.append(state.theta_tilde.copy())

        checked = 0
        for end in range(known, len(thetas), known):
            start = end - known + 1
            # the network min grew by the full factor at every step of the window
            if all(thetas[t] == 1.1 * thetas[t - 1] for t in range(start + 1, end + 1)):
                assert_array_equal(tildes[end], np.full(6, thetas[end]))
                checked += 1
        self.assertGreater(checked, 0)

    def test_known_horizon_keeps_estimates_fixed(self):
        g = build_line_graph(6)
        gm = metropolis_gossip(g)
        family = generate_quadratic(6, 3, 2, 0.1, seed=1)
        state = init_adaptive_state(np.ones((6, 2)))
        for _ in range(20):
            state = adaptive_step(state, gm, family, GammaSchedule(), horizon=diameter(g))
        assert_array_equal(state.d, np.full(6, diameter(g)))
        self.assertEqual(state.doublings.sum(), 0)

    def test_alternating_losses_need_no_doubling(self):
        m = 10
        g = build_line_graph(m)
        gm = metropolis_gossip(g)
        state = init_adaptive_state(np.random.default_rng(4).standard_normal((m, 2)))
        family = alternating_quadratics(m, 3.0, d=2)
        for _ in range(100):
            state = adaptive_step(state, gm, family, GammaSchedule())
        self.assertEqual(state.d.max(), 1)
        self.assertLess(state.d.max(), diameter(g))


class SafeguardTests(SimpleTestCase):
    def setUp(self):
        self.g = build_line_graph(6)
        self.gm = metropolis_gossip(self.g)
        self.family = generate_quadratic(6, 2, 4, 0.0, seed=5)
        self.X0 = np.random.default_rng(5).standard_normal((6, 4))

    def excursion(self, steps):
        state = init_adaptive_state(self.X0)
        reach = 0.0
        for _ in range(steps):
            state = adaptive_step(state, self.gm, self.family, GammaSchedule())
            primal = np.linalg.norm(state.X - state.X0, axis=1)
            dual = state.theta * np.linalg.norm(state.Y - state.Y0, axis=1)
            reach = max(reach, float(np.maximum(primal, dual).max()))
        return reach

    def test_huge_radius_matches_default(self):
        plain = init_adaptive_state(self.X0)
        guarded = init_adaptive_state(self.X0, safeguard=True)
        for _ in range(60):
            plain = adaptive_step(plain, self.gm, self.family, GammaSchedule())
            guarded = adaptive_step(guarded, self.gm, self.family, GammaSchedule(), safeguard_radius=1e9)
            assert_allclose(guarded.X, plain.X, rtol=0, atol=1e-12)
            assert_allclose(guarded.theta, plain.theta, rtol=0, atol=1e-12)
        assert_array_equal(guarded.h, np.ones(6, dtype=int))

    def test_tripped_agent_stops_growing(self):
        radius = 0.5 * self.excursion(60)
        state = init_adaptive_state(self.X0, safeguard=True)
        history = []
        for _ in range(60):
            state = adaptive_step(state, self.gm, self.family, GammaSchedule(), safeguard_radius=radius)
            history.append((state.h.copy(), state.theta.copy()))

        tripped = [k for k, (h, _) in enumerate(history) if np.any(h == 0)]
        self.assertTrue(tripped)
        first = tripped[0]
        agent = int(np.flatnonzero(history[first][0] == 0)[0])
        thetas = [theta[agent] for _, theta in history[first:]]
        self.assertTrue(all(b <= a for a, b in zip(thetas, thetas[1:])))
        # zero bits are absorbing
        self.assertTrue(all(h[agent] == 0 for h, _ in history[first:]))

    def test_update_spreads_zero_bits_one_hop(self):
        state = init_adaptive_state(np.zeros((6, 4)), safeguard=True)
        moved = state.X.copy()
        moved[2] = 10.0
        exchange = NeighborExchange(self.g)

        first = safeguard_update(replace(state, X=moved), 1.0, 1.5, exchange)
        assert_array_equal(first.h, [1, 1, 0, 1, 1, 1])
        # the growth factor reads the previous bit, so agent 2 still grows now
        assert_array_equal(first.growth, np.full(6, 1.5))
        self.assertEqual(exchange.scalar_rounds, 1)

        # back at the start, agent 2 stays frozen and its neighbors follow
        second = safeguard_update(replace(state, h=first.h), 1.0, 1.5, exchange)
        assert_array_equal(second.h, [1, 0, 0, 0, 1, 1])
        assert_array_equal(second.growth, [1.5, 1.5, 1.0, 1.5, 1.5, 1.5])

    def test_bad_radius(self):
        state = init_adaptive_state(self.X0, safeguard=True)
        with self.assertRaises(ParameterError):
            adaptive_step(state, self.gm, self.family, GammaSchedule(), safeguard_radius=0.0)


class BaselineStepTests(SimpleTestCase):
    def test_global_and_local_modes_differ(self):
        g = build_line_graph(3)
        gm = metropolis_gossip(g)
        family = scaled_square([1.0, 1.0, 100.0])
        X0 = np.array([[1.0], [2.0], [3.0]])
        global_state = baseline_adaptive_step(init_baseline_state(X0, mode='global'), gm, family, GammaSchedule())
        local_state = baseline_adaptive_step(init_baseline_state(X0, mode='local'), gm, family, GammaSchedule())
        self.assertFalse(np.array_equal(global_state.theta, local_state.theta))
        self.assertEqual(len(set(global_state.theta)), 1)

    def test_single_agent_matches_adaptive(self):
        gm = metropolis_gossip(build_line_graph(1))
        family = generate_quadratic(1, 3, 2, 0.1, seed=2)
        adaptive = init_adaptive_state(np.ones((1, 2)))
        baseline = init_baseline_state(np.ones((1, 2)))
        for _ in range(20):
            adaptive = adaptive_step(adaptive, gm, family, GammaSchedule())
            baseline = baseline_adaptive_step(baseline, gm, family, GammaSchedule())
        assert_allclose(adaptive.X, baseline.X, rtol=1e-12, atol=1e-14)

    def test_global_mode_charges_diameter(self):
        g = build_line_graph(6)
        gm = metropolis_gossip(g)
        exchange = NeighborExchange(g)
        baseline_adaptive_step(init_baseline_state(np.ones((6, 1))), gm, scaled_square([1.0] * 6),
                               GammaSchedule(), exchange=exchange)
        self.assertEqual(exchange.snapshot(), (3, 5))

    def test_bad_mode(self):
        with self.assertRaises(ParameterError):
            init_baseline_state(np.ones((2, 1)), mode='flood')


class ExtraStepTests(SimpleTestCase):
    def test_single_agent_recursion(self):
        gm = metropolis_gossip(build_line_graph(1))
        family = scaled_square([0.5])
        state = init_extra_state(np.array([[1.0]]), 0.5)
        state = extra_step(state, gm, family)
        self.assertAlmostEqual(state.X[0, 0], 0.5)
        state = extra_step(state, gm, family)
        self.assertAlmostEqual(state.X[0, 0], 0.25)

    def test_tiny_stepsize_at_solution_is_stationary(self):
        g = build_line_graph(4)
        gm = metropolis_gossip(g)
        family = generate_quadratic(4, 3, 2, 0.1, seed=6)
        fp = fixed_point(family, gm)
        state = init_extra_state(fp.X_star, 1e-14)
        for _ in range(5):
            state = extra_step(state, gm, family)
        assert_allclose(state.X, fp.X_star, rtol=0, atol=1e-11)

    def test_one_round_per_iteration(self):
        g = build_line_graph(4)
        exchange = NeighborExchange(g)
        state = init_extra_state(np.ones((4, 2)), 0.01)
        for _ in range(7):
            state = extra_step(state, metropolis_gossip(g), generate_quadratic(4, 3, 2), exchange)
        self.assertEqual(exchange.snapshot(), (7, 0))

    def test_large_stepsize_diverges(self):
        g = build_line_graph(4)
        gm = metropolis_gossip(g)
        family = generate_quadratic(4, 6, 3, 0.0, seed=7)
        state = init_extra_state(np.ones((4, 3)), 1e3)
        with self.assertRaises(DivergenceError):
            for _ in range(100):
                state = extra_step(state, gm, family)

    def test_bad_stepsize(self):
        with self.assertRaises(ParameterError):
            init_extra_state(np.ones((2, 1)), 0.0)
