import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import block_diag

import distkf
from distkf.errors import BadNoiseError, DimensionMismatchError, DisconnectedGraphError, NotObservableError

from conftest import random_observable_model


def ring_example_args():
    A = np.diag([0.9, 1.1])
    C = np.array([[1.0, 0], [0, 1], [1, 1], [1, -1]])
    return A, C, 0.25 * np.eye(2), 4.0 * np.eye(4)


class TestBuildSystem:
    def test_ring_example_valid(self):
        model = distkf.build_system(*ring_example_args())
        assert model.n == 2 and model.m == 4

    def test_zero_row_not_observable(self):
        A = np.diag([0.9, 1.1])
        with pytest.raises(NotObservableError):
            distkf.build_system(A, np.zeros((1, 2)), np.eye(2), np.eye(1))

    def test_singular_R_rejected(self):
        A, C, Q, _ = ring_example_args()
        with pytest.raises(BadNoiseError):
            distkf.build_system(A, C, Q, np.zeros((4, 4)))

    def test_indefinite_Q_rejected(self):
        A, C, _, R = ring_example_args()
        with pytest.raises(BadNoiseError):
            distkf.build_system(A, C, -np.eye(2), R)

    def test_dimension_mismatch(self):
        A, C, Q, R = ring_example_args()
        with pytest.raises(DimensionMismatchError):
            distkf.build_system(A, C[:, :1], Q, R)


class TestSplitModel:
    def test_ring_example(self):
        model = distkf.build_system(*ring_example_args())
        split = distkf.split_model(model)
        assert split.nu == 1 and split.ns == 1
        assert_allclose(split.Au, [[1.1]], atol=1e-12)
        assert_allclose(split.As, [[0.9]], atol=1e-12)
        # sensor rows split consistently: C_i V = [Ciu Cis]
        CV = model.C @ split.V
        assert_allclose(CV[:, :1], split.Ciu)
        assert_allclose(CV[:, 1:], split.Cis)

    def test_stable_plant(self):
        rng = np.random.default_rng(1)
        model = random_observable_model(rng, n=3, m=2, allow_unstable=False)
        split = distkf.split_model(model)
        assert split.nu == 0
        assert_allclose(split.J, np.eye(3), atol=1e-12)

    def test_already_ordered_gives_identity(self):
        A = np.diag([1.2, 0.5])
        model = distkf.build_system(A, np.array([[1.0, 1.0]]), 0.1 * np.eye(2), [[1.0]])
        split = distkf.split_model(model)
        assert_allclose(split.V, np.eye(2))

    def test_heat_model_single_marginal_mode(self):
        A = distkf.heat_transition(N=5, alpha=0.2)
        # independent oracle: eigensolve count of near-unit moduli
        mods = np.abs(np.linalg.eigvals(A))
        assert int(np.sum(mods >= 1 - 1e-9)) == 1
        # constant temperature profile is invariant
        assert_allclose(A @ np.ones(25), np.ones(25), atol=1e-14)
        sc = distkf.example2_scenario(trials=1)
        split = distkf.split_model(sc.model)
        assert split.nu == 1

    def test_reconstruction_invariant(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            model = random_observable_model(rng)
            split = distkf.split_model(model)
            rebuilt = split.V @ block_diag(split.Au, split.As) @ split.Vinv
            assert np.linalg.norm(rebuilt - model.A) <= 1e-8 * max(1.0, np.linalg.norm(model.A))


class TestGraphs:
    def test_ring4_spectrum(self):
        g = distkf.ring_graph(4, 1.0)
        assert_allclose(g.mu, [0.0, 2.0, 2.0, 4.0], atol=1e-10)
        assert g.mu2 == pytest.approx(2.0)
        assert g.mu_max == pytest.approx(4.0)

    def test_complete_two_nodes(self):
        g = distkf.complete_graph(2, 1.0)
        assert_allclose(g.mu, [0.0, 2.0], atol=1e-12)

    def test_disconnected_rejected(self):
        adj = np.zeros((4, 4))
        adj[0, 1] = adj[1, 0] = 1.0
        adj[2, 3] = adj[3, 2] = 1.0
        with pytest.raises(DisconnectedGraphError):
            distkf.build_graph(adj)

    def test_asymmetric_rejected(self):
        adj = np.zeros((3, 3))
        adj[0, 1] = 1.0
        with pytest.raises(DimensionMismatchError):
            distkf.build_graph(adj)

    def test_laplacian_row_sums_and_nonnegative_spectrum(self):
        rng = np.random.default_rng(4)
        from conftest import random_connected_graph

        for _ in range(20):
            g = random_connected_graph(rng, int(rng.integers(2, 8)))
            assert np.abs(g.laplacian.sum(axis=1)).max() <= 1e-12
            assert g.mu[0] == 0.0
            assert np.all(g.mu >= -1e-12)

    def test_random_geometric_deterministic(self):
        g1 = distkf.random_geometric_graph(8, 0.6, seed=5)
        g2 = distkf.random_geometric_graph(8, 0.6, seed=5)
        assert np.array_equal(g1.adjacency, g2.adjacency)
