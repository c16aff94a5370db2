import numpy as np
import pytest

import distkf
from distkf import numerics


def random_spectrum(rng, n, allow_unstable=True):
    """Real-matrix spectrum: real values and conjugate pairs, moduli
    bounded away from the unit circle on both sides."""
    eigs = []
    while len(eigs) < n:
        if n - len(eigs) >= 2 and rng.random() < 0.35:
            r = rng.uniform(0.15, 1.25 if allow_unstable else 0.9)
            if 0.95 < r < 1.05:
                r = 0.9
            th = rng.uniform(0.2, np.pi - 0.2)
            eigs += [r * np.exp(1j * th), r * np.exp(-1j * th)]
        else:
            lam = rng.uniform(-1.25 if allow_unstable else -0.9, 1.25 if allow_unstable else 0.9)
            if 0.95 < abs(lam) < 1.05:
                lam = np.sign(lam) * 0.9
            eigs.append(complex(lam))
    return np.array(eigs[:n])


def matrix_with_spectrum(rng, eigs):
    """Real matrix with the given conjugate-closed spectrum via a real
    block-diagonal form conjugated by a well-conditioned similarity."""
    from scipy.linalg import block_diag

    blocks = []
    used = np.zeros(len(eigs), dtype=bool)
    for i, lam in enumerate(eigs):
        if used[i]:
            continue
        if abs(lam.imag) < 1e-12:
            blocks.append(np.array([[lam.real]]))
            used[i] = True
        else:
            j = next(k for k in range(i + 1, len(eigs)) if not used[k] and abs(eigs[k] - lam.conjugate()) < 1e-9)
            used[i] = used[j] = True
            blocks.append(np.array([[lam.real, lam.imag], [-lam.imag, lam.real]]))
    D = block_diag(*blocks)
    Qmat, _ = np.linalg.qr(rng.standard_normal((len(eigs), len(eigs))))
    scale = np.diag(rng.uniform(0.6, 1.6, size=len(eigs)))
    V = Qmat @ scale
    return V @ D @ np.linalg.inv(V)


def random_observable_model(rng, n=None, m=None, allow_unstable=True):
    """Seeded random observable plant with PSD Q and PD R."""
    n = int(n if n is not None else rng.integers(1, 6))
    m = int(m if m is not None else rng.integers(1, 7))
    for _ in range(100):
        A = matrix_with_spectrum(rng, random_spectrum(rng, n, allow_unstable))
        C = rng.standard_normal((m, n))
        B = rng.standard_normal((n, n))
        Q = B @ B.T / n + 0.05 * np.eye(n)
        D = rng.standard_normal((m, m))
        R = D @ D.T / m + 0.1 * np.eye(m)
        if numerics.is_observable(A, C):
            return distkf.build_system(A, C, Q, R)
    raise RuntimeError("failed to sample an observable model")


def random_connected_graph(rng, m):
    """Random weighted undirected connected graph on m nodes."""
    for _ in range(100):
        adj = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                if rng.random() < 0.55:
                    adj[i, j] = adj[j, i] = rng.uniform(0.5, 2.0)
        try:
            return distkf.build_graph(adj)
        except distkf.DisconnectedGraphError:
            continue
    raise RuntimeError("failed to sample a connected graph")


@pytest.fixture(scope="session")
def example1():
    """Scenario, designs, and trial config for the 4-sensor ring example."""
    sc = distkf.example1_scenario()
    designs = distkf.design_pipeline(
        sc.model, sc.graph, zeta=sc.zeta, stable_poles=sc.stable_poles, variant=sc.variant
    )
    return sc, designs


@pytest.fixture(scope="session")
def example2_design():
    sc = distkf.example2_scenario()
    designs = distkf.design_pipeline(
        sc.model, sc.graph, zeta=sc.zeta, stable_poles=sc.stable_poles, variant=sc.variant
    )
    return sc, designs


def trial_config(sc, **overrides):
    base = dict(
        horizon=sc.horizon,
        seed=sc.seed,
        variant=sc.variant,
        strategy=distkf.static_strategy(),
        replace_own=sc.replace_own,
        rounds_per_sample=sc.rounds_per_sample,
        initial_state_cov=sc.initial_state_cov,
    )
    base.update(overrides)
    return distkf.TrialConfig(**base)
