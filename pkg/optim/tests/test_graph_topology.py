import networkx as nx
import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal
from scipy import linalg

from optim.exceptions import ConnectivityError, ParameterError
from optim.graph_topology import (
    Graph, build_complete_graph, build_cycle_graph, build_erdos_renyi, build_graph,
    build_line_graph, communication_graph, diameter, gossip_matrix, metropolis_gossip,
    metropolis_weights, spectral_data,
)


class GraphBuilderTests(SimpleTestCase):
    def test_line_graph_edges(self):
        g = build_line_graph(3)
        self.assertEqual(g.edges, frozenset({(0, 1), (1, 2)}))
        self.assertEqual(g.neighbors[1], (0, 1, 2))

    def test_line_graph_diameter_is_m_minus_one(self):
        self.assertEqual(diameter(build_line_graph(20)), 19)

    def test_single_node(self):
        g = build_line_graph(1)
        self.assertEqual(g.edges, frozenset())
        self.assertEqual(diameter(g), 0)
        self.assertEqual(g.neighbors, ((0,),))

    def test_erdos_renyi_with_p_one_is_complete(self):
        g = build_erdos_renyi(4, 1.0, seed=3)
        self.assertEqual(len(g.edges), 6)
        self.assertEqual(diameter(g), 1)

    def test_erdos_renyi_with_tiny_p_gives_up(self):
        with self.assertRaises(ConnectivityError):
            build_erdos_renyi(20, 0.01, seed=0)

    def test_erdos_renyi_is_connected_and_seeded(self):
        g = build_erdos_renyi(20, 0.5, seed=42)
        self.assertTrue(nx.is_connected(g.to_networkx()))
        self.assertEqual(g, build_erdos_renyi(20, 0.5, seed=42))

    def test_erdos_renyi_rejects_bad_arguments(self):
        with self.assertRaises(ParameterError):
            build_erdos_renyi(1, 0.5)
        with self.assertRaises(ParameterError):
            build_erdos_renyi(5, 1.5)
        with self.assertRaises(ParameterError):
            build_erdos_renyi(5, 0.0)

    def test_build_graph_dispatch(self):
        self.assertEqual(build_graph('cycle', 5), build_cycle_graph(5))
        self.assertEqual(build_graph('complete', 4), build_complete_graph(4))
        with self.assertRaises(ParameterError):
            build_graph('erdos_renyi', 5)
        with self.assertRaises(ParameterError):
            build_graph('star', 5)


class DiameterTests(SimpleTestCase):
    def test_small_examples(self):
        self.assertEqual(diameter(build_line_graph(5)), 4)
        self.assertEqual(diameter(build_complete_graph(6)), 1)
        self.assertEqual(diameter(build_cycle_graph(6)), 3)

    def test_matches_floyd_warshall(self):
        for m in range(2, 9):
            for seed in range(5):
                g = build_erdos_renyi(m, 0.5, seed=100 * m + seed)
                hops = nx.floyd_warshall_numpy(g.to_networkx(), nodelist=range(m))
                self.assertEqual(diameter(g), int(hops.max()))

    def test_disconnected_graph_raises(self):
        with self.assertRaises(ConnectivityError):
            diameter(Graph(m=3, edges=frozenset({(0, 1)})))


class GossipMatrixTests(SimpleTestCase):
    def test_metropolis_line_of_three(self):
        expected = np.array([[2, 1, 0], [1, 1, 1], [0, 1, 2]]) / 3
        assert_allclose(metropolis_weights(build_line_graph(3)), expected, atol=1e-15)

    def test_metropolis_small_cases(self):
        assert_allclose(metropolis_weights(build_complete_graph(2)), [[0.5, 0.5], [0.5, 0.5]])
        assert_array_equal(metropolis_weights(build_line_graph(1)), [[1.0]])

    def test_mixing_with_c(self):
        gm = metropolis_gossip(build_complete_graph(2), c=0.5)
        assert_allclose(gm.w, [[0.75, 0.25], [0.25, 0.75]])

        gm = metropolis_gossip(build_line_graph(3), c=0.5)
        expected = np.array([[5, 1, 0], [1, 4, 1], [0, 1, 5]]) / 6
        assert_allclose(gm.w, expected, atol=1e-15)

    def test_c_outside_range(self):
        w_tilde = metropolis_weights(build_line_graph(3))
        for c in (0.0, -0.1, 0.6):
            with self.assertRaises(ParameterError):
                gossip_matrix(w_tilde, c)

    def test_small_c_approaches_identity(self):
        gm = gossip_matrix(metropolis_weights(build_cycle_graph(5)), 1e-6)
        assert_allclose(gm.w, np.eye(5), atol=1e-6)
        assert_allclose(gm.w.sum(axis=1), np.ones(5), atol=1e-12)

    def test_invariants_on_random_graphs(self):
        for seed in range(20):
            g = build_erdos_renyi(12, 0.3, seed=seed)
            gm = metropolis_gossip(g)
            self.assertLessEqual(np.max(np.abs(gm.w_tilde.sum(axis=1) - 1)), 1e-12)
            self.assertLessEqual(np.max(np.abs(gm.w_tilde - gm.w_tilde.T)), 1e-12)
            assert_array_equal(gm.w_tilde > 0, g.closed_neighborhood)
            self.assertTrue(np.all(np.diag(gm.w) >= 1 - gm.c))

    def test_pattern_mismatch_is_rejected(self):
        w_tilde = metropolis_weights(build_complete_graph(3))
        with self.assertRaises(ParameterError):
            gossip_matrix(w_tilde, 0.5, graph=build_line_graph(3))

    def test_communication_graph_from_sparsity(self):
        g = build_cycle_graph(6)
        gm = gossip_matrix(metropolis_weights(g), 0.5)
        self.assertEqual(communication_graph(gm), g)


class SpectralDataTests(SimpleTestCase):
    def test_two_agents(self):
        spectral = spectral_data(metropolis_gossip(build_complete_graph(2), c=0.5))
        self.assertAlmostEqual(spectral.lambda_m, 0.0, places=12)
        disagreement = np.array([1.0, -1.0])
        consensus = np.ones(2)
        assert_allclose(spectral.M @ disagreement, disagreement, atol=1e-12)
        assert_allclose(spectral.M @ consensus, -consensus, atol=1e-12)

    def test_single_node(self):
        spectral = spectral_data(metropolis_gossip(build_line_graph(1)))
        assert_allclose(spectral.M, [[-1.0]])
        self.assertTrue(np.isnan(spectral.lambda_2))

    def test_M_positive_definite_off_consensus(self):
        for g in (build_line_graph(7), build_cycle_graph(8), build_erdos_renyi(10, 0.4, seed=1)):
            for c in (0.1, 0.3, 0.5):
                gm = metropolis_gossip(g, c)
                spectral = spectral_data(gm)
                assert_allclose(spectral.M, spectral.M.T)

                basis = linalg.null_space(np.ones((1, g.m)))
                smallest = linalg.eigvalsh(basis.T @ spectral.M @ basis)[0]
                bound = 1.0 / (c * (1.0 - spectral.lambda_m)) - 1.0
                self.assertGreater(smallest, 0)
                self.assertGreaterEqual(smallest, bound - 1e-9)

    def test_second_eigenvalue_below_one(self):
        spectral = spectral_data(metropolis_gossip(build_line_graph(10)))
        self.assertLess(spectral.lambda_2, 1.0)
        self.assertGreaterEqual(spectral.lambda_m, -1.0)
