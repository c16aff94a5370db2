"""Trial and Monte-Carlo simulation of the distributed estimators.

Execution is synchronous lockstep: at step k every node reads the
step-k broadcasts, then the whole network advances to k+1.  The
centralized Kalman filter is co-simulated on the same noise realization
so traces carry the optimal estimate alongside the per-node ones.

Reproducibility: every trial owns counter-based RNG streams derived from
``SeedSequence`` entropy, with separate children for plant noise and for
link failures.  Monte-Carlo trial t of master seed s uses entropy
``(s, t)``, so any trial can be replayed in isolation.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .consensus import ConsensusDesign, StaticStrategy, SyncStrategy
from .decomposition import DecompositionBundle, ReducedBundle, psd_factor
from .errors import ConfigError, DimensionMismatchError
from .kalman import KalmanDesign
from .plant import SensorGraph, SplitModel, SystemModel


def resolve_variant(variant: str, n: int, m: int) -> str:
    """``auto`` picks the variant with the smaller broadcast: alg2 when
    n < m (messages of size n), alg1 otherwise (messages of size m)."""
    if variant == "auto":
        return "alg2" if n < m else "alg1"
    if variant not in ("alg1", "alg2"):
        raise ConfigError(f"unknown variant {variant!r}")
    return variant


def message_dimension(variant: str, n: int, m: int) -> int:
    return m if variant == "alg1" else n


@dataclass(frozen=True, eq=False)
class DesignSet:
    """Everything a simulation needs, produced by the design pipeline."""

    kalman: KalmanDesign
    split: SplitModel
    bundle: DecompositionBundle
    consensus: ConsensusDesign
    graph: SensorGraph
    reduced: ReducedBundle | None = None


@dataclass(frozen=True, eq=False)
class TrialConfig:
    horizon: int
    seed: object = 0  # int, tuple of ints, or numpy SeedSequence
    variant: str = "auto"
    strategy: SyncStrategy = field(default_factory=StaticStrategy)
    replace_own: bool = False
    rounds_per_sample: int = 1
    initial_state_cov: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    x: np.ndarray        # (T+1, n) truth
    y: np.ndarray        # (T+1, m) measurements
    xhat: np.ndarray     # (T+1, n) centralized estimate
    xbreve: np.ndarray   # (T+1, m, n) per-node fused estimates
    variant: str
    horizon: int
    seed: object

    @property
    def errors(self) -> np.ndarray:
        """Per-node estimation errors xbreve_i(k) - x(k), (T+1, m, n)."""
        return self.xbreve - self.x[:, None, :]

    @property
    def deviations(self) -> np.ndarray:
        """Per-node deviations from the centralized estimate, (T+1, m, n)."""
        return self.xbreve - self.xhat[:, None, :]


_noise_factors: "weakref.WeakKeyDictionary[SystemModel, tuple]" = weakref.WeakKeyDictionary()


def _factors(model: SystemModel):
    cached = _noise_factors.get(model)
    if cached is None:
        cached = (psd_factor(model.Q), psd_factor(model.R))
        _noise_factors[model] = cached
    return cached


def step_truth(model: SystemModel, x: np.ndarray, rng: np.random.Generator):
    """One plant step: x(k+1) = Ax + w, y(k+1) = Cx(k+1) + v."""
    Lq, Lr = _factors(model)
    x_next = model.A @ x + Lq @ rng.standard_normal(Lq.shape[1])
    y_next = model.C @ x_next + Lr @ rng.standard_normal(Lr.shape[1])
    return x_next, y_next


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _rng(ss: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class NodeState:
    """Single-node state for the reference step functions."""

    index: int           # sensor index of this node
    xi: np.ndarray       # (n,) local filter state
    blocks: np.ndarray   # (m, n) inference blocks (alg1) or (n, n) (alg2)
    xbreve: np.ndarray   # (n,) fused estimate
    msg: np.ndarray      # last broadcast: (m,) for alg1, (n,) for alg2


def init_node(variant: str, n: int, m: int, index: int) -> NodeState:
    blocks = np.zeros((m, n)) if variant == "alg1" else np.zeros((n, n))
    msg = np.zeros(message_dimension(variant, n, m))
    return NodeState(index=index, xi=np.zeros(n), blocks=blocks, xbreve=np.zeros(n), msg=msg)


def node_message(state: NodeState, gamma: np.ndarray) -> np.ndarray:
    """Broadcast vector: gamma applied blockwise to the consensus state."""
    return state.blocks @ gamma


def step_node_alg1(
    state: NodeState,
    bundle: DecompositionBundle,
    design: ConsensusDesign,
    neighbor_msgs,
    y_next: float,
    replace_own: bool = False,
) -> NodeState:
    """Reference single-node update for variant 1.

    ``neighbor_msgs`` is a list of (effective_weight, message) pairs from
    the current step; the node's own message is recomputed internally.
    The fused output substitutes xi/m for the own block when
    ``replace_own`` is set; the consensus state itself is never altered.
    """
    n, m = bundle.n, bundle.m
    if state.blocks.shape != (m, n):
        raise DimensionMismatchError("node state does not match variant alg1")
    ones = np.ones(n)
    z = float(y_next) - float(bundle.beta @ state.xi)
    xi = bundle.S @ state.xi + ones * z
    own = node_message(state, design.Gamma)
    coup = np.zeros(m)
    for weight, msg in neighbor_msgs:
        msg = np.asarray(msg, dtype=float)
        if msg.shape != (m,):
            raise DimensionMismatchError("alg1 messages must have length m")
        coup += weight * (msg - own)
    blocks = state.blocks @ bundle.S.T + np.outer(coup, ones)
    blocks[state.index] += ones * z
    fused = np.einsum("jab,jb->a", bundle.F, blocks)
    if replace_own:
        fused += bundle.F[state.index] @ (xi / m - blocks[state.index])
    return NodeState(
        index=state.index, xi=xi, blocks=blocks, xbreve=m * fused, msg=blocks @ design.Gamma
    )


def step_node_alg2(
    state: NodeState,
    reduced: ReducedBundle,
    bundle: DecompositionBundle,
    design: ConsensusDesign,
    neighbor_msgs,
    y_next: float,
) -> NodeState:
    """Reference single-node update for variant 2 (order n^2 state)."""
    n, m = bundle.n, bundle.m
    if state.blocks.shape != (n, n):
        raise DimensionMismatchError("node state does not match variant alg2")
    ones = np.ones(n)
    z = float(y_next) - float(bundle.beta @ state.xi)
    xi = bundle.S @ state.xi + ones * z
    own = node_message(state, design.Gamma)
    coup = np.zeros(n)
    for weight, msg in neighbor_msgs:
        msg = np.asarray(msg, dtype=float)
        if msg.shape != (n,):
            raise DimensionMismatchError("alg2 messages must have length n")
        coup += weight * (msg - own)
    blocks = state.blocks @ bundle.S.T + reduced.T_blocks(state.index) * z + np.outer(coup, ones)
    return NodeState(
        index=state.index, xi=xi, blocks=blocks, xbreve=m * (blocks @ bundle.beta),
        msg=blocks @ design.Gamma,
    )


def run_trial(model: SystemModel, designs: DesignSet, config: TrialConfig) -> SimulationTrace:
    """Simulate one seeded trial; returns the full trace.

    Node and filter states start at zero.  x(0) is zero unless
    ``initial_state_cov`` is given, in which case it is sampled first.
    """
    n, m = model.n, model.m
    T = int(config.horizon)
    variant = resolve_variant(config.variant, n, m)
    if variant == "alg2" and designs.reduced is None:
        raise ConfigError("variant alg2 requires the reduced-order bundle")
    if config.replace_own and variant != "alg1":
        raise ConfigError("replace_own applies to variant alg1 only")
    if config.rounds_per_sample < 1:
        raise ConfigError("rounds_per_sample must be >= 1")

    ss = _seed_sequence(config.seed)
    noise_ss, link_ss = ss.spawn(2)
    noise_rng = _rng(noise_ss)
    Lq, Lr = _factors(model)
    if config.initial_state_cov is not None:
        L0 = psd_factor(np.asarray(config.initial_state_cov, dtype=float))
        x0 = L0 @ noise_rng.standard_normal(n)
    else:
        x0 = np.zeros(n)
    w = noise_rng.standard_normal((T, n)) @ Lq.T
    v = noise_rng.standard_normal((T + 1, m)) @ Lr.T
    gains = config.strategy.sample_gains(
        designs.graph.adjacency, T, config.rounds_per_sample, _rng(link_ss)
    )

    kd, bundle = designs.kalman, designs.bundle
    if variant == "alg1":
        out = _kernels.sim_alg1(
            model.A, model.C, kd.Acl, kd.K, bundle.S, bundle.beta, bundle.F,
            designs.consensus.Gamma, gains, w, v[0], v[1:], x0,
            config.replace_own, config.rounds_per_sample,
        )
    else:
        Tb = np.stack([designs.reduced.T_blocks(i) for i in range(m)])
        out = _kernels.sim_alg2(
            model.A, model.C, kd.Acl, kd.K, bundle.S, bundle.beta, Tb,
            designs.consensus.Gamma, gains, w, v[0], v[1:], x0,
            config.replace_own, config.rounds_per_sample,
        )
    x, y, xhat, xbreve, _, _ = out
    return SimulationTrace(
        x=x, y=y, xhat=xhat, xbreve=xbreve, variant=variant, horizon=T, seed=config.seed
    )


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    mse: np.ndarray        # (T+1, m, n) mean squared error vs truth
    dev_sq: np.ndarray     # (T+1, m, n) mean squared deviation vs central estimate
    trials: int
    variant: str

    def node_mse(self, steps) -> np.ndarray:
        """Per-node, per-state MSE averaged over the given step range."""
        return self.mse[steps].mean(axis=0)

    def tr_wbar(self, steps) -> float:
        """Estimate of the total deviation power sum_i E||xbreve_i - xhat||^2
        averaged over the given steps."""
        return float(self.dev_sq[steps].sum(axis=(1, 2)).mean())


def run_monte_carlo(
    model: SystemModel, designs: DesignSet, config: TrialConfig, trials: int
) -> MonteCarloResult:
    """Average squared errors over independent seeded trials.

    Trial t runs with seed entropy ``(master, t)``; trials are mutually
    independent and may be distributed across processes by partitioning
    the trial index range (aggregation is a plain mean).
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    master = config.seed
    if isinstance(master, np.random.SeedSequence):
        raise ConfigError("Monte Carlo needs an integer (or tuple) master seed")
    if isinstance(master, (tuple, list)):
        base = tuple(int(v) for v in master)
    else:
        base = (int(master),)
    acc_mse = None
    acc_dev = None
    variant = resolve_variant(config.variant, model.n, model.m)
    for t in range(trials):
        trial_cfg = replace(config, seed=base + (t,))
        trace = run_trial(model, designs, trial_cfg)
        e2 = trace.errors**2
        d2 = trace.deviations**2
        if acc_mse is None:
            acc_mse = e2
            acc_dev = d2
        else:
            acc_mse += e2
            acc_dev += d2
    return MonteCarloResult(
        mse=acc_mse / trials, dev_sq=acc_dev / trials, trials=trials, variant=variant
    )


# --- CSV export -----------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def write_trace_csv(trace: SimulationTrace, path) -> None:
    """Header: k,x_1..x_n,xhat_1..xhat_n,node<i>_xbreve_1..n,..."""
    n = trace.x.shape[1]
    m = trace.xbreve.shape[1]
    cols = ["k"]
    cols += [f"x_{s + 1}" for s in range(n)]
    cols += [f"xhat_{s + 1}" for s in range(n)]
    for i in range(m):
        cols += [f"node{i + 1}_xbreve_{s + 1}" for s in range(n)]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(trace.horizon + 1):
            row = [str(k)]
            row += [_fmt(v) for v in trace.x[k]]
            row += [_fmt(v) for v in trace.xhat[k]]
            for i in range(m):
                row += [_fmt(v) for v in trace.xbreve[k, i]]
            fh.write(",".join(row) + "\n")


def write_mse_csv(result: MonteCarloResult, path) -> None:
    """Per-step MSE per node: state columns plus a per-node total."""
    steps, m, n = result.mse.shape
    cols = ["k"]
    for i in range(m):
        cols += [f"node{i + 1}_mse_{s + 1}" for s in range(n)]
        cols.append(f"node{i + 1}_mse")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(steps):
            row = [str(k)]
            for i in range(m):
                row += [_fmt(v) for v in result.mse[k, i]]
                row.append(_fmt(result.mse[k, i].sum()))
            fh.write(",".join(row) + "\n")
