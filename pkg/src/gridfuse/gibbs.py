"""Sampling over the compiled network.

One sweep redraws the entire branch layer as a single block and then every
customer from its exact conditional. The branch block uses the tree structure
directly: an upward pass folds each subtree into a two-state message (with the
attached customers summed out through the precomputed per-group likelihoods),
the root is drawn from its exact posterior, and a downward pass samples each
branch given its parent. One sweep therefore produces an exact draw of the
full state, and successive sweeps are independent; chains, burn-in, and the
scale-reduction diagnostics keep their usual meaning and converge immediately.

Narrower update schemes were tried and measurably fail here. The cascade
factor is deterministic (a de-energized parent forces its whole subtree), so
a branch can only leave its current value once every neighbor aligns:
one-variable-at-a-time sweeps freeze for millions of iterations wherever
evidence concentrates, and even branch-at-a-time sweeps with customers
collapsed sit in modes for thousands of sweeps whenever a parent and child
must flip together. The tree block removes the coordination barrier entirely
at the same per-sweep cost (two O(n) passes).

The kernel runs on the contracted model the compiler builds: deterministic
copies (a branch whose failure probability is exactly 0, every customer when
pi2 is exactly 0) collapse into their parent variable, and evidence-forced
values are clamped inside the message pass. Messages are normalized per node,
so long chains of small likelihoods cannot underflow. Samples expand back to
all original variables, so callers see every state node regardless of
contraction.

Seeding: chain c of a run with seed s uses SeedSequence(s, spawn_key=(1, c));
the per-episode parameter draw uses spawn_key=(0,). Everything downstream is
deterministic given (seed, chain index). scan_order is accepted for interface
stability but the tree pass has a fixed draw order, so both settings produce
identical samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ValidationError, ZeroSupportError
from .evidence import EvidenceSet
from .factors import ModelParams
from .feeder import FeederTopology, select_outage_locations
from .network import BayesNet, CompiledModel, NodeKind, compile_model

__all__ = [
    "GibbsConfig",
    "PosteriorEstimate",
    "initial_state",
    "expand_samples",
    "run_chain",
    "estimate_marginals",
    "decide_and_locate",
    "infer",
    "DECISION_THRESHOLD",
]

DECISION_THRESHOLD = 0.5

_SCAN_ORDERS = ("topological", "random")


@dataclass(frozen=True)
class GibbsConfig:
    """Sampler settings.

    iterations is the per-chain sweep count M; burn_in the fraction of each
    chain discarded before counting; chains run with distinct sub-seeds and
    pool their retained samples.
    """

    iterations: int
    burn_in: float = 0.0
    scan_order: str = "topological"
    chains: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValidationError(f"burn_in must be in [0, 1), got {self.burn_in}")
        if self.scan_order not in _SCAN_ORDERS:
            raise ValidationError(
                f"scan_order must be one of {_SCAN_ORDERS}, got {self.scan_order!r}"
            )
        if self.chains < 1:
            raise ValidationError(f"chains must be >= 1, got {self.chains}")


@dataclass
class PosteriorEstimate:
    """Inference output: marginals, thresholded states, outage locations,
    and the raw per-chain samples for convergence diagnostics."""

    branch_marginals: dict
    customer_marginals: dict
    decided_branches: dict
    decided_customers: dict
    locations: tuple
    chain_samples: dict = field(repr=False)


@njit(cache=True)
def _draw_customers(g, t, d, c, cust_ptr, cust_idx, cust_q, c_uniforms):
    if d[g] == 1:
        for ji in range(cust_ptr[g], cust_ptr[g + 1]):
            c[cust_idx[ji]] = 1
    else:
        for ji in range(cust_ptr[g], cust_ptr[g + 1]):
            j = cust_idx[ji]
            c[j] = 0 if c_uniforms[t, j] < 1.0 - cust_q[j] else 1


@njit(cache=True)
def _run_sweeps(
    group_parent, child_ptr, child_idx, cust_ptr, cust_idx,
    group_p_fail, group_lik, group_forced, cust_q,
    d, c, b_uniforms, c_uniforms, out,
):
    ng = group_parent.shape[0]
    msg = np.empty((ng, 2), dtype=np.float64)
    for t in range(b_uniforms.shape[0]):
        # Upward pass, children before parents (groups are in topological
        # order). msg[g, a] is the normalized weight of g's subtree and its
        # customers' evidence given the group state a; a de-energized parent
        # forces the child, an energized one leaves it failing alone.
        for g in range(ng - 1, -1, -1):
            for a in range(2):
                w = group_lik[g, a]
                for ci in range(child_ptr[g], child_ptr[g + 1]):
                    ch = child_idx[ci]
                    pf = group_p_fail[ch]
                    if a == 1:
                        w *= msg[ch, 1]
                    else:
                        w *= pf * msg[ch, 1] + (1.0 - pf) * msg[ch, 0]
                msg[g, a] = w
            f = group_forced[g]
            if f == 0:
                msg[g, 1] = 0.0
            elif f == 1:
                msg[g, 0] = 0.0
            tot = msg[g, 0] + msg[g, 1]
            if tot <= 0.0:
                return 1
            msg[g, 0] /= tot
            msg[g, 1] /= tot
        # Downward pass, parents first: draw each group from its exact
        # conditional given the parent draw, then its customers.
        for g in range(ng):
            par = group_parent[g]
            if par >= 0 and d[par] == 1:
                d[g] = 1
            else:
                pf = group_p_fail[g]
                w1 = pf * msg[g, 1]
                w0 = (1.0 - pf) * msg[g, 0]
                tot = w0 + w1
                if tot <= 0.0:
                    return 1
                d[g] = 0 if b_uniforms[t, g] * tot < w0 else 1
            _draw_customers(g, t, d, c, cust_ptr, cust_idx, cust_q, c_uniforms)
        for g in range(ng):
            out[t, g] = d[g]
        for j in range(c.shape[0]):
            out[t, ng + j] = c[j]
    return 0


def initial_state(compiled: CompiledModel, rng: np.random.Generator):
    """A uniformly random state of the contracted model over everything the
    hard constraints leave free, with forced values honored and the cascade
    closure applied. Returns (group states, free customer states); the result
    always has positive joint probability. The tree kernel redraws the whole
    state on its first sweep, so this only seeds the working buffers."""
    ng = compiled.n_groups
    ncf = len(compiled.cust_group)
    d = np.zeros(ng, dtype=np.int8)
    c = np.zeros(ncf, dtype=np.int8)
    bits_d = rng.integers(0, 2, size=ng)
    bits_c = rng.integers(0, 2, size=ncf)
    for g in range(ng):
        par = compiled.group_parent[g]
        if par >= 0 and d[par] == 1:
            d[g] = 1
        elif compiled.group_forced[g] >= 0:
            d[g] = compiled.group_forced[g]
        elif compiled.group_p_fail[g] == 0.0:
            d[g] = 0
        elif compiled.group_p_fail[g] == 1.0:
            d[g] = 1
        else:
            d[g] = bits_d[g]
    for j in range(ncf):
        if d[compiled.cust_group[j]] == 1:
            c[j] = 1
        elif compiled.forced_c[j] >= 0:
            c[j] = compiled.forced_c[j]
        elif compiled.pi2 == 1.0:
            c[j] = 1
        else:
            c[j] = bits_c[j]
    return d, c


def expand_samples(compiled: CompiledModel, group_samples: np.ndarray) -> np.ndarray:
    """Map sweep snapshots of the contracted model back onto all original
    state nodes (branches first, then customers, matching node_refs)."""
    m = group_samples.shape[0]
    ng = compiled.n_groups
    out = np.empty((m, compiled.n_unknown), dtype=np.int8)
    out[:, : compiled.n_branches] = group_samples[:, compiled.group_of]
    if compiled.cust_free:
        out[:, compiled.n_branches :] = group_samples[:, ng:]
    else:
        out[:, compiled.n_branches :] = group_samples[
            :, compiled.group_of[compiled.cust_branch]
        ]
    return out


def _sample_chain(compiled: CompiledModel, cfg: GibbsConfig, chain_index: int) -> np.ndarray:
    """All M sweep snapshots of one chain as an (M, n_unknown) int8 matrix."""
    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(1, chain_index))
    )
    d, c = initial_state(compiled, rng)
    ng = compiled.n_groups
    ncf = len(compiled.cust_group)
    b_uniforms = rng.random((cfg.iterations, ng))
    c_uniforms = rng.random((cfg.iterations, ncf))
    out = np.empty((cfg.iterations, ng + ncf), dtype=np.int8)
    status = _run_sweeps(
        compiled.group_parent, compiled.group_child_ptr, compiled.group_child_idx,
        compiled.group_cust_ptr, compiled.group_cust_idx,
        compiled.group_p_fail, compiled.group_lik, compiled.group_forced,
        compiled.cust_q, d, c, b_uniforms, c_uniforms, out,
    )
    if status != 0:
        raise ZeroSupportError(
            "a state node lost all support during sampling; "
            "evidence contradicts the deterministic factors"
        )
    return expand_samples(compiled, out)


def run_chain(
    bn: BayesNet,
    ev: EvidenceSet,
    cfg: GibbsConfig,
    chain_index: int,
    params: ModelParams | None = None,
    compiled: CompiledModel | None = None,
) -> dict:
    """One chain's sample sequence per state node.

    Beta priors resolve at their means unless pre-resolved params (or a
    pre-compiled model) are supplied; `infer` passes the per-episode draw.
    """
    if compiled is None:
        p = params if params is not None else bn.params.resolve(None)
        compiled = compile_model(bn, ev, p)
    samples = _sample_chain(compiled, cfg, chain_index)
    return {node: samples[:, idx] for idx, node in enumerate(compiled.node_refs)}


def estimate_marginals(samples, burn_in: float = 0.0) -> dict:
    """Sample-counting estimate P(X=1|E) per node.

    `samples` maps node -> sample array, either one chain (M,) or stacked
    chains (n_chains, M); the burn-in fraction is dropped from the start of
    every chain and the rest is pooled.
    """
    if not 0.0 <= burn_in < 1.0:
        raise ValidationError(f"burn_in must be in [0, 1), got {burn_in}")
    out = {}
    for node, arr in samples.items():
        a = np.atleast_2d(np.asarray(arr))
        discard = int(a.shape[1] * burn_in)
        retained = a[:, discard:]
        if retained.size == 0:
            raise ValidationError(f"no samples left for {node} after burn-in")
        out[node] = float(retained.mean())
    return out


def decide_and_locate(bn: BayesNet, t: FeederTopology, marginals: dict):
    """Threshold marginals into states and reduce to outage locations.

    De-energized requires marginal strictly above 0.5; an exact tie decides
    energized, which avoids phantom outages.
    """
    decided_b = {}
    decided_c = {}
    for node, p in marginals.items():
        value = 1 if p > DECISION_THRESHOLD else 0
        if node.kind is NodeKind.BRANCH_STATE:
            decided_b[node.branch] = value
        elif node.kind is NodeKind.CUSTOMER_STATE:
            decided_c[node.customer] = value
        else:
            raise ValidationError(f"marginal for non-state node {node}")
    locations = select_outage_locations(t, decided_b)
    return decided_b, decided_c, locations


def infer(
    bn: BayesNet, t: FeederTopology, ev: EvidenceSet, cfg: GibbsConfig
) -> PosteriorEstimate:
    """Full inference episode: resolve parameters (one Beta draw per episode),
    run the configured chains, pool retained samples into marginals, threshold,
    and locate."""
    params_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    p = bn.params.resolve(params_rng)
    compiled = compile_model(bn, ev, p)
    chains = np.stack(
        [_sample_chain(compiled, cfg, ci) for ci in range(cfg.chains)]
    )
    chain_samples = {
        node: chains[:, :, idx] for idx, node in enumerate(compiled.node_refs)
    }
    marginals = estimate_marginals(chain_samples, cfg.burn_in)
    decided_b, decided_c, locations = decide_and_locate(bn, t, marginals)
    branch_marginals = {}
    customer_marginals = {}
    for node, value in marginals.items():
        if node.kind is NodeKind.BRANCH_STATE:
            branch_marginals[node.branch] = value
        else:
            customer_marginals[node.customer] = value
    return PosteriorEstimate(
        branch_marginals=branch_marginals,
        customer_marginals=customer_marginals,
        decided_branches=decided_b,
        decided_customers=decided_c,
        locations=locations,
        chain_samples=chain_samples,
    )
