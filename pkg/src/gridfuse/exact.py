"""Brute-force exact inference for verification on small networks.

Enumerates all 2^r joint states of the r state nodes (branches then
customers, matching the compiled layout), accumulates the log joint in a
vectorized pass per factor, normalizes with a log-sum-exp, and reads off
marginals and the MAP state. Beta priors resolve at their means so results
are deterministic; comparisons against the sampler should fix parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NetworkTooLargeError, ZeroSupportError
from .evidence import EvidenceSet
from .network import BayesNet, compile_model

__all__ = ["ExactResult", "exact_inference", "ZeroEvidenceError"]

DEFAULT_LIMIT = 20


class ZeroEvidenceError(ZeroSupportError):
    """Every enumerated assignment has probability zero."""


@dataclass
class ExactResult:
    """Exact posterior: per-node marginals, MAP assignment, log evidence."""

    marginals: dict
    map_assignment: dict
    log_evidence: float


def _log_or_neginf(p: float) -> float:
    return math.log(p) if p > 0.0 else -math.inf


def exact_inference(
    bn: BayesNet, ev: EvidenceSet, limit: int = DEFAULT_LIMIT
) -> ExactResult:
    """Enumerate the posterior over all state nodes.

    Raises NetworkTooLargeError when the unknown count exceeds `limit`
    (default 20, about a million states) and ZeroEvidenceError when no
    assignment has positive probability.
    """
    try:
        compiled = compile_model(bn, ev, bn.params.resolve(None))
    except ZeroSupportError as exc:
        # Constraint propagation proved the total evidence weight is zero
        # without enumerating; same contract, specific name.
        raise ZeroEvidenceError(str(exc)) from exc
    k = compiled.n_branches
    r = compiled.n_unknown
    if r > limit:
        raise NetworkTooLargeError(
            f"{r} unknown nodes exceed the exact enumeration limit {limit}"
        )
    n_states = 1 << r
    idx = np.arange(n_states, dtype=np.int64)

    def col(pos: int) -> np.ndarray:
        return (idx >> pos) & 1

    logp = np.zeros(n_states, dtype=np.float64)
    for i in range(k):
        d = col(i)
        pf = compiled.p_fail[i]
        own = np.where(d == 1, _log_or_neginf(pf), _log_or_neginf(1.0 - pf))
        par = compiled.parent_idx[i]
        if par >= 0:
            cascade = np.where(col(par) == 1, np.where(d == 1, 0.0, -np.inf), own)
            logp += cascade
        else:
            logp += own
    pi2 = compiled.pi2
    for j in range(compiled.n_customers):
        c = col(k + j)
        d = col(compiled.cust_branch[j])
        own = np.where(c == 1, _log_or_neginf(pi2), _log_or_neginf(1.0 - pi2))
        logp += np.where(d == 1, np.where(c == 1, 0.0, -np.inf), own)
        logp += np.where(
            c == 1,
            _log_or_neginf(compiled.lik[j, 1]),
            _log_or_neginf(compiled.lik[j, 0]),
        )
    finite = logp > -np.inf
    if not finite.any():
        raise ZeroEvidenceError(
            "all enumerated assignments have zero probability; "
            "evidence contradicts the deterministic factors"
        )
    hi = logp[finite].max()
    log_z = hi + math.log(np.exp(logp[finite] - hi).sum())
    post = np.zeros(n_states, dtype=np.float64)
    post[finite] = np.exp(logp[finite] - log_z)
    marginals = {
        node: float(post[col(pos) == 1].sum())
        for pos, node in enumerate(compiled.node_refs)
    }
    best = int(np.argmax(logp))
    map_assignment = {
        node: int((best >> pos) & 1) for pos, node in enumerate(compiled.node_refs)
    }
    return ExactResult(
        marginals=marginals,
        map_assignment=map_assignment,
        log_evidence=float(log_z),
    )
