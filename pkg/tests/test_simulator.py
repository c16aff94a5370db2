import numpy as np
import pytest
from numpy.testing import assert_allclose

import distkf
from distkf import _kernels, simulator
from distkf.errors import ConfigError

from conftest import trial_config


class TestVariantSelection:
    def test_auto_rule(self):
        assert distkf.resolve_variant("auto", 2, 4) == "alg2"
        assert distkf.resolve_variant("auto", 25, 15) == "alg1"
        assert distkf.resolve_variant("auto", 3, 3) == "alg1"

    def test_explicit_passthrough(self):
        assert distkf.resolve_variant("alg1", 2, 4) == "alg1"
        with pytest.raises(ConfigError):
            distkf.resolve_variant("alg3", 2, 4)

    def test_message_dimension(self):
        assert distkf.message_dimension("alg1", 2, 4) == 4
        assert distkf.message_dimension("alg2", 2, 4) == 2


class TestStepTruth:
    def test_deterministic_when_noiseless(self):
        model = distkf.SystemModel(
            A=np.diag([0.9, 1.1]), C=np.eye(2), Q=np.zeros((2, 2)), R=np.zeros((2, 2))
        )
        rng = np.random.default_rng(0)
        x = np.array([1.0, 1.0])
        for k in range(1, 6):
            x, y = distkf.step_truth(model, x, rng)
            assert_allclose(x, [0.9**k, 1.1**k], rtol=1e-12)
            assert_allclose(y, x, rtol=1e-12)

    def test_noise_covariance_recovered(self):
        Q = np.array([[0.5, 0.2], [0.2, 0.4]])
        model = distkf.SystemModel(A=np.zeros((2, 2)), C=np.eye(2), Q=Q, R=np.eye(2))
        rng = np.random.default_rng(3)
        N = 100_000
        ws = np.empty((N, 2))
        x = np.zeros(2)
        for k in range(N):
            xn, _ = distkf.step_truth(model, x, rng)
            ws[k] = xn  # A = 0, so x_next is exactly w
        emp = ws.T @ ws / N
        for a in range(2):
            for b in range(2):
                sigma = np.sqrt((Q[a, a] * Q[b, b] + Q[a, b] ** 2) / N)
                assert abs(emp[a, b] - Q[a, b]) <= 3.5 * sigma


class TestRunTrial:
    def test_horizon_zero(self, example1):
        sc, designs = example1
        tr = distkf.run_trial(sc.model, designs, trial_config(sc, horizon=0))
        assert tr.x.shape == (1, 2)
        assert tr.xbreve.shape == (1, 4, 2)
        assert_allclose(tr.xbreve[0], 0.0)

    def test_deterministic_bitwise(self, example1):
        sc, designs = example1
        cfg = trial_config(sc, horizon=40, seed=77)
        a = distkf.run_trial(sc.model, designs, cfg)
        b = distkf.run_trial(sc.model, designs, cfg)
        for name in ("x", "y", "xhat", "xbreve"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_initial_state_sampled(self, example1):
        sc, designs = example1
        x0s = [
            distkf.run_trial(sc.model, designs, trial_config(sc, horizon=0, seed=(5, t))).x[0]
            for t in range(400)
        ]
        x0s = np.array(x0s)
        var = x0s.var(axis=0)
        assert np.all(np.abs(var - 1.0) < 3.5 * np.sqrt(2.0 / 400))

    def test_exact_average_both_variants_and_strategies(self, example1):
        sc, designs = example1
        for variant in ("alg1", "alg2"):
            for strategy in (distkf.static_strategy(), distkf.bernoulli_drop_strategy(0.3)):
                for seed in (1, 2, 3):
                    cfg = trial_config(
                        sc, horizon=60, seed=seed, variant=variant, strategy=strategy
                    )
                    tr = distkf.run_trial(sc.model, designs, cfg)
                    gap = np.abs(tr.xbreve.mean(axis=1) - tr.xhat)
                    scale = 1.0 + np.abs(tr.xhat)
                    assert np.max(gap / scale) <= 1e-8

    def test_alg2_requires_reduced(self, example1):
        sc, designs = example1
        bare = distkf.DesignSet(
            kalman=designs.kalman, split=designs.split, bundle=designs.bundle,
            consensus=designs.consensus, graph=designs.graph, reduced=None,
        )
        with pytest.raises(ConfigError):
            distkf.run_trial(sc.model, bare, trial_config(sc, variant="alg2"))

    def test_replace_own_requires_alg1(self, example1):
        sc, designs = example1
        with pytest.raises(ConfigError):
            distkf.run_trial(
                sc.model, designs, trial_config(sc, variant="alg2", replace_own=True)
            )


class TestKernelAgainstStepFunctions:
    def _reference_alg1(self, sc, designs, horizon, seed, replace_own=False):
        """Network simulation through the public single-node step API."""
        model = sc.model
        n, m = model.n, model.m
        cfg = trial_config(sc, horizon=horizon, seed=seed, variant="alg1",
                           replace_own=replace_own)
        tr = distkf.run_trial(model, designs, cfg)  # kernel result + same noise
        nodes = [distkf.init_node("alg1", n, m, i) for i in range(m)]
        adj = designs.graph.adjacency
        xhat = np.zeros(n)
        for k in range(horizon):
            y = tr.y[k + 1]
            msgs = [distkf.simulator.node_message(nd, designs.consensus.Gamma) for nd in nodes]
            new = []
            for i in range(m):
                neigh = [(adj[i, l], msgs[l]) for l in range(m) if adj[i, l] > 0]
                new.append(
                    distkf.step_node_alg1(
                        nodes[i], designs.bundle, designs.consensus, neigh, y[i],
                        replace_own=replace_own,
                    )
                )
            nodes = new
            xhat = distkf.step_centralized(designs.kalman, xhat, y)
            # identities: sum_i eta_{i,j} = xi_j and average = central
            eta_sum = sum(nd.blocks for nd in nodes)
            for j in range(m):
                assert np.linalg.norm(eta_sum[j] - nodes[j].xi) <= 1e-8 * (
                    1 + np.linalg.norm(nodes[j].xi)
                )
            avg = sum(nd.xbreve for nd in nodes) / m
            if not replace_own:
                assert np.linalg.norm(avg - xhat) <= 1e-8 * (1 + np.linalg.norm(xhat))
            for i in range(m):
                assert_allclose(nodes[i].xbreve, tr.xbreve[k + 1, i], atol=1e-9)
        return tr, nodes

    def test_stepwise_identities_and_kernel_match(self, example1):
        sc, designs = example1
        self._reference_alg1(sc, designs, horizon=30, seed=21)

    def test_alg2_single_node_matches_alg1_fusion(self, example1):
        # with one node and no neighbors both variants reproduce the same
        # fused output (same transfer function from z to the estimate)
        sc, designs = example1
        n, m = 2, 4
        rng = np.random.default_rng(23)
        node1 = distkf.init_node("alg1", n, m, 0)
        node2 = distkf.init_node("alg2", n, m, 0)
        for _ in range(40):
            y = rng.standard_normal()
            node1 = distkf.step_node_alg1(node1, designs.bundle, designs.consensus, [], y)
            node2 = distkf.step_node_alg2(
                node2, designs.reduced, designs.bundle, designs.consensus, [], y
            )
            # single-node alg1: block i reproduces the local filter, others stay 0
            assert_allclose(node1.blocks[0], node1.xi, atol=1e-10)
            assert_allclose(node1.blocks[1:], 0.0, atol=1e-12)
            assert_allclose(node1.xbreve, node2.xbreve, atol=1e-7)

    def test_message_sizes(self, example1, example2_design):
        sc1, d1 = example1
        assert distkf.init_node("alg2", 2, 4, 0).msg.shape == (2,)
        node = distkf.init_node("alg2", 2, 4, 0)
        node = distkf.step_node_alg2(node, d1.reduced, d1.bundle, d1.consensus, [], 1.0)
        assert node.msg.shape == (2,)  # alg2 broadcasts n values
        sc2, d2 = example2_design
        node = distkf.init_node("alg1", 25, 15, 3)
        node = distkf.step_node_alg1(node, d2.bundle, d2.consensus, [], 1.0)
        assert node.msg.shape == (15,)  # alg1 broadcasts m values


class TestReplaceOwn:
    def test_output_only_substitution(self, example1):
        sc, designs = example1
        base = dict(horizon=25, seed=5, variant="alg1")
        tr_a = distkf.run_trial(sc.model, designs, trial_config(sc, **base, replace_own=False))
        tr_b = distkf.run_trial(sc.model, designs, trial_config(sc, **base, replace_own=True))
        # identical noise and consensus state: truth and central agree bitwise
        assert np.array_equal(tr_a.x, tr_b.x)
        assert np.array_equal(tr_a.xhat, tr_b.xhat)
        # outputs differ
        assert not np.allclose(tr_a.xbreve[5:], tr_b.xbreve[5:])
        # consensus internals identical: kernel final eta comparison
        out_a = _run_kernel(sc, designs, replace_own=False)
        out_b = _run_kernel(sc, designs, replace_own=True)
        assert np.array_equal(out_a[5], out_b[5])


def _run_kernel(sc, designs, replace_own):
    model = sc.model
    cfg = trial_config(sc, horizon=25, seed=5, variant="alg1", replace_own=replace_own)
    ss = np.random.SeedSequence(cfg.seed)
    noise_ss, link_ss = ss.spawn(2)
    rng = np.random.Generator(np.random.Philox(noise_ss))
    from distkf.decomposition import psd_factor

    Lq, Lr = psd_factor(model.Q), psd_factor(model.R)
    x0 = psd_factor(cfg.initial_state_cov) @ rng.standard_normal(2)
    w = rng.standard_normal((25, 2)) @ Lq.T
    v = rng.standard_normal((26, 4)) @ Lr.T
    gains = cfg.strategy.sample_gains(designs.graph.adjacency, 25, 1,
                                      np.random.Generator(np.random.Philox(link_ss)))
    return _kernels.sim_alg1(
        model.A, model.C, designs.kalman.Acl, designs.kalman.K,
        designs.bundle.S, designs.bundle.beta, designs.bundle.F,
        designs.consensus.Gamma, gains, w, v[0], v[1:], x0, replace_own, 1
    )


class TestConsensusDecay:
    def test_geometric_decay_without_residual_drive(self, example1):
        # after cutting the residual injection the deviations contract at
        # the designed mode rate
        sc, designs = example1
        b, cons = designs.bundle, designs.consensus
        adj = designs.graph.adjacency
        m, n = 4, 2
        rng = np.random.default_rng(29)
        eta = rng.standard_normal((m, m, n))  # arbitrary disagreement
        rho_max = float(np.max(cons.spectral_radii))
        prev = None
        ratios = []
        for k in range(25):
            delta = eta @ cons.Gamma
            coup = adj @ delta - adj.sum(axis=1)[:, None] * delta
            eta = eta @ b.S.T + coup[:, :, None] * np.ones(n)
            dev = eta - eta.mean(axis=0)
            norm = np.max(np.linalg.norm(dev.reshape(m, -1), axis=1))
            if prev is not None and prev > 1e-12:
                ratios.append(norm / prev)
            prev = norm
        # after the transient every per-step contraction obeys the bound
        assert max(ratios[5:]) <= rho_max + 0.05


class TestMonteCarlo:
    def test_single_trial_reduces_to_run_trial(self, example1):
        sc, designs = example1
        cfg = trial_config(sc, horizon=20, seed=123)
        res = distkf.run_monte_carlo(sc.model, designs, cfg, 1)
        tr = distkf.run_trial(sc.model, designs, trial_config(sc, horizon=20, seed=(123, 0)))
        assert np.array_equal(res.mse, tr.errors**2)

    def test_reproducible(self, example1):
        sc, designs = example1
        cfg = trial_config(sc, horizon=15, seed=9)
        a = distkf.run_monte_carlo(sc.model, designs, cfg, 8)
        b = distkf.run_monte_carlo(sc.model, designs, cfg, 8)
        assert np.array_equal(a.mse, b.mse)

    def test_rejects_zero_trials(self, example1):
        sc, designs = example1
        with pytest.raises(ConfigError):
            distkf.run_monte_carlo(sc.model, designs, trial_config(sc), 0)


class TestCsvExport:
    def test_trace_schema_and_determinism(self, tmp_path, example1):
        sc, designs = example1
        tr = distkf.run_trial(sc.model, designs, trial_config(sc, horizon=10, seed=4))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        distkf.write_trace_csv(tr, p1)
        distkf.write_trace_csv(tr, p2)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert len(lines) == 12  # header + 11 rows
        header = lines[0].split(",")
        assert header[:5] == ["k", "x_1", "x_2", "xhat_1", "xhat_2"]
        assert header[5] == "node1_xbreve_1"
        assert header[-1] == "node4_xbreve_2"
        row0 = lines[1].split(",")
        assert row0[0] == "0"
        # round-trip float fidelity
        assert float(row0[1]) == tr.x[0, 0]

    def test_mse_schema(self, tmp_path, example1):
        sc, designs = example1
        res = distkf.run_monte_carlo(sc.model, designs, trial_config(sc, horizon=6, seed=2), 3)
        p = tmp_path / "mse.csv"
        distkf.write_mse_csv(res, p)
        lines = p.read_text().splitlines()
        assert len(lines) == 8
        header = lines[0].split(",")
        assert header[1] == "node1_mse_1"
        assert "node1_mse" in header
