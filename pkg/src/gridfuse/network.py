"""Bayesian network construction over a feeder, and factor evaluation.

The network has one de-energization state node per branch (D) and per
customer (C), plus evidence nodes: a human-report node per customer, a
last-gasp node per metered customer, and wind / vegetation / physical
exogenous nodes per branch. Factors bind to D, C, and the two customer
evidence kinds; exogenous branch evidence enters the D factor as fixed
conditioning values.

Two evaluation surfaces exist. `joint_log_prob` / `local_conditional` work on
explicit node-value assignments and serve as the reference semantics. For the
samplers, `compile_model` folds the observed evidence into flat arrays: a
per-branch failure probability and a per-customer evidence likelihood pair,
with hard constraints implied by deterministic factor entries propagated once
up front.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError, ZeroSupportError
from .evidence import EvidenceSet
from .factors import (
    BranchEvidence,
    ModelParams,
    branch_failure_probability,
    branch_state_factor,
    customer_state_factor,
    human_evidence_factor,
    meter_evidence_factor,
)
from .feeder import FeederTopology

__all__ = [
    "NodeKind",
    "NodeRef",
    "BayesNet",
    "build_bn",
    "joint_log_prob",
    "local_conditional",
    "non_descendants",
    "parameter_count",
    "evidence_assignment",
    "full_assignment",
    "CompiledModel",
    "compile_model",
    "parse_node_id",
]


class NodeKind(enum.Enum):
    BRANCH_STATE = "D"
    CUSTOMER_STATE = "C"
    HUMAN_EVIDENCE = "EH"
    METER_EVIDENCE = "EM"
    WIND_EVIDENCE = "EW"
    VEG_EVIDENCE = "EV"
    PHYS_EVIDENCE = "EB"


_CUSTOMER_KINDS = (
    NodeKind.CUSTOMER_STATE,
    NodeKind.HUMAN_EVIDENCE,
    NodeKind.METER_EVIDENCE,
)


@dataclass(frozen=True)
class NodeRef:
    """Reference to one network vertex.

    Branch-indexed kinds carry the branch id; customer-indexed kinds carry
    both the customer id and its branch id.
    """

    kind: NodeKind
    branch: str
    customer: str | None = None

    def __str__(self) -> str:
        ident = self.customer if self.kind in _CUSTOMER_KINDS else self.branch
        return f"{self.kind.value}:{ident}"


def parse_node_id(text: str, topology: FeederTopology) -> NodeRef:
    """Inverse of str(NodeRef) for state nodes, e.g. 'D:b3' or 'C:c7'."""
    prefix, sep, ident = text.partition(":")
    if not sep:
        raise ValidationError(f"bad node id {text!r}, expected KIND:id")
    if prefix == "D":
        topology.branch(ident)
        return NodeRef(NodeKind.BRANCH_STATE, ident)
    if prefix == "C":
        cust = topology.customer(ident)
        return NodeRef(NodeKind.CUSTOMER_STATE, cust.branch, ident)
    raise ValidationError(f"bad node id {text!r}, only D: and C: are stored states")


@dataclass
class BayesNet:
    """Immutable network: vertices, edges, and factor bindings.

    `bindings` maps each factor-bearing node to its factor kind name; the
    evaluation functions dispatch on it. Exogenous evidence nodes (wind,
    vegetation, physical) carry no factor.
    """

    topology: FeederTopology
    params: ModelParams
    metered: frozenset
    nodes: tuple
    parents: dict
    children: dict
    bindings: dict
    _branch_nodes: tuple = field(init=False, repr=False)
    _customer_nodes: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._branch_nodes = tuple(
            n for n in self.nodes if n.kind is NodeKind.BRANCH_STATE
        )
        self._customer_nodes = tuple(
            n for n in self.nodes if n.kind is NodeKind.CUSTOMER_STATE
        )

    @property
    def unknown_nodes(self) -> tuple:
        """State nodes inferred by sampling: all D, then all C, topologically."""
        return self._branch_nodes + self._customer_nodes

    @property
    def branch_nodes(self) -> tuple:
        return self._branch_nodes

    @property
    def customer_nodes(self) -> tuple:
        return self._customer_nodes


def build_bn(
    t: FeederTopology,
    params: ModelParams,
    meter_coverage=None,
) -> BayesNet:
    """Construct the network for a feeder.

    Args:
        t: validated feeder topology.
        params: model parameters bound into the factors.
        meter_coverage: optional set of customer ids carrying meters,
            overriding the topology's has_meter flags (scenario generators
            re-sample coverage per scenario). None uses the flags.
    """
    if meter_coverage is None:
        metered = frozenset(c.id for c in t.customers if c.has_meter)
    else:
        metered = frozenset(meter_coverage)
        unknown = metered - set(t.customer_ids)
        if unknown:
            raise ValidationError(
                f"meter coverage names unknown customers: {sorted(unknown)!r}"
            )
    nodes: list[NodeRef] = []
    parents: dict[NodeRef, tuple] = {}
    bindings: dict[NodeRef, str] = {}
    for b in t.branches:
        d = NodeRef(NodeKind.BRANCH_STATE, b.id)
        ew = NodeRef(NodeKind.WIND_EVIDENCE, b.id)
        ev = NodeRef(NodeKind.VEG_EVIDENCE, b.id)
        eb = NodeRef(NodeKind.PHYS_EVIDENCE, b.id)
        nodes.extend((d, ew, ev, eb))
        pa = []
        if b.parent is not None:
            pa.append(NodeRef(NodeKind.BRANCH_STATE, b.parent))
        pa.extend((ew, ev, eb))
        parents[d] = tuple(pa)
        parents[ew] = ()
        parents[ev] = ()
        parents[eb] = ()
        bindings[d] = "branch"
    for c in t.customers:
        cn = NodeRef(NodeKind.CUSTOMER_STATE, c.branch, c.id)
        eh = NodeRef(NodeKind.HUMAN_EVIDENCE, c.branch, c.id)
        nodes.extend((cn, eh))
        parents[cn] = (NodeRef(NodeKind.BRANCH_STATE, c.branch),)
        parents[eh] = (cn,)
        bindings[cn] = "customer"
        bindings[eh] = "human"
        if c.id in metered:
            em = NodeRef(NodeKind.METER_EVIDENCE, c.branch, c.id)
            nodes.append(em)
            parents[em] = (cn,)
            bindings[em] = "meter"
    children: dict[NodeRef, list] = {n: [] for n in nodes}
    for n, pa in parents.items():
        for p in pa:
            children[p].append(n)
    return BayesNet(
        topology=t,
        params=params,
        metered=metered,
        nodes=tuple(nodes),
        parents=parents,
        children={k: tuple(v) for k, v in children.items()},
        bindings=bindings,
    )


def evidence_assignment(bn: BayesNet, ev: EvidenceSet) -> dict:
    """Clamped values for every evidence node; missing observations default
    to 0 reports / 0 last gasps / calm wind / no vegetation."""
    ev.validate_against(bn.topology, bn.metered)
    a: dict[NodeRef, object] = {}
    for b in bn.topology.branches:
        a[NodeRef(NodeKind.WIND_EVIDENCE, b.id)] = ev.wind.get(b.id, 0.0)
        a[NodeRef(NodeKind.VEG_EVIDENCE, b.id)] = ev.vegetation.get(b.id)
        a[NodeRef(NodeKind.PHYS_EVIDENCE, b.id)] = b.physical
    for c in bn.topology.customers:
        a[NodeRef(NodeKind.HUMAN_EVIDENCE, c.branch, c.id)] = ev.human.get(c.id, 0)
        if c.id in bn.metered:
            a[NodeRef(NodeKind.METER_EVIDENCE, c.branch, c.id)] = ev.meter.get(c.id, 0)
    return a


def full_assignment(bn: BayesNet, ev: EvidenceSet, d_states: dict, c_states: dict) -> dict:
    """Complete assignment from evidence plus per-id state maps."""
    a = evidence_assignment(bn, ev)
    for b in bn.topology.branch_ids:
        a[NodeRef(NodeKind.BRANCH_STATE, b)] = d_states[b]
    for c in bn.topology.customers:
        a[NodeRef(NodeKind.CUSTOMER_STATE, c.branch, c.id)] = c_states[c.id]
    return a


def _branch_evidence_at(bn: BayesNet, a: dict, branch_id: str) -> BranchEvidence:
    return BranchEvidence(
        wind_speed=a[NodeRef(NodeKind.WIND_EVIDENCE, branch_id)],
        vegetation=a[NodeRef(NodeKind.VEG_EVIDENCE, branch_id)],
        physical=a[NodeRef(NodeKind.PHYS_EVIDENCE, branch_id)],
    )


def _factor_dist(bn: BayesNet, node: NodeRef, a: dict, params: ModelParams):
    """Distribution of `node` given its parents' values in `a`."""
    kind = bn.bindings[node]
    evp = params.evidence
    if kind == "branch":
        b = bn.topology.branch(node.branch)
        d_parent = a[NodeRef(NodeKind.BRANCH_STATE, b.parent)] if b.parent else 0
        return branch_state_factor(
            d_parent, _branch_evidence_at(bn, a, node.branch), params.fragility
        )
    if kind == "customer":
        d_branch = a[NodeRef(NodeKind.BRANCH_STATE, node.branch)]
        return customer_state_factor(d_branch, evp.pi2)
    if kind == "human":
        c = a[NodeRef(NodeKind.CUSTOMER_STATE, node.branch, node.customer)]
        return human_evidence_factor(c, evp)
    if kind == "meter":
        c = a[NodeRef(NodeKind.CUSTOMER_STATE, node.branch, node.customer)]
        return meter_evidence_factor(c, evp.pi4, evp.pi5)
    raise ValidationError(f"node {node} has no bound factor")


def joint_log_prob(bn: BayesNet, a: dict, params: ModelParams | None = None) -> float:
    """Log of the joint factorization at a complete assignment.

    Returns -inf when any deterministic factor entry is violated. Beta priors
    resolve at their means unless pre-resolved params are passed.
    """
    missing = [n for n in bn.nodes if n not in a]
    if missing:
        raise ValidationError(
            f"incomplete assignment, missing {len(missing)} nodes, first {missing[0]}"
        )
    p = (params if params is not None else bn.params).resolve(None)
    total = 0.0
    for node, kind in bn.bindings.items():
        value = a[node]
        if value not in (0, 1):
            raise ValidationError(f"node {node} has non-binary value {value!r}")
        prob = _factor_dist(bn, node, a, p)[value]
        if prob <= 0.0:
            return -math.inf
        total += math.log(prob)
    return total


def local_conditional(
    bn: BayesNet, x: NodeRef, a: dict, params: ModelParams | None = None
):
    """P(x | everything else) for a state node, as a (p0, p1) pair.

    Proportional to the x factor itself times the factors of x's children,
    which is all of the joint that varies with x.
    """
    if x.kind not in (NodeKind.BRANCH_STATE, NodeKind.CUSTOMER_STATE):
        raise ValidationError(f"{x} is not a state node")
    p = (params if params is not None else bn.params).resolve(None)
    local = dict(a)
    weights = []
    for v in (0, 1):
        local[x] = v
        w = _factor_dist(bn, x, local, p)[v]
        for child in bn.children[x]:
            if w == 0.0:
                break
            w *= _factor_dist(bn, child, local, p)[local[child]]
        weights.append(w)
    total = weights[0] + weights[1]
    if total <= 0.0:
        raise ZeroSupportError(
            f"no value of {x} is consistent with the deterministic factors; "
            "evidence contradicts the hard constraints"
        )
    return (weights[0] / total, weights[1] / total)


def non_descendants(bn: BayesNet, x: NodeRef) -> frozenset:
    """All nodes that are neither x nor reachable from x (test accessor)."""
    desc: set[NodeRef] = set()
    stack = list(bn.children[x])
    while stack:
        n = stack.pop()
        if n in desc:
            continue
        desc.add(n)
        stack.extend(bn.children[n])
    return frozenset(set(bn.nodes) - desc - {x})


def parameter_count(bn: BayesNet) -> int:
    """Sum of 2^|Pa| over the state nodes, the factorized parameter count."""
    return sum(
        2 ** len(bn.parents[n])
        for n in bn.nodes
        if n.kind in (NodeKind.BRANCH_STATE, NodeKind.CUSTOMER_STATE)
    )


@dataclass
class CompiledModel:
    """Array form of the network with evidence folded in.

    State vector layout: branch states first (topological order), then
    customer states (grouped by branch in topological order). `lik[j, v]` is
    the product of customer j's evidence factors at C=v. `forced_d` and
    `forced_c` hold -1 for free nodes, else the value implied by the hard
    constraints; conflicts raise during construction.

    Deterministic copies are contracted for the sampler: a branch with
    p_fail == 0 is identically its parent's state (the cascade factor
    degenerates to a copy), and with pi2 == 0 every customer is identically
    its branch's state. The group arrays describe the contracted model:
    `group_of` maps each branch to its group and groups form a tree, in
    topological order, with the representative's failure probability. Group
    samples expand back to all original variables exactly.

    Customers are leaves given their branch, so the sampler marginalizes them
    out of the branch redraw and then redraws them from their exact
    conditionals. `group_lik[g, v]` is the product over the group's customers
    of P(evidence_j | D=v) with C_j summed out, and `cust_q[j]` is
    P(C_j=1 | D=0, evidence_j) for the free customers (pi2 > 0; with pi2 == 0
    customers are glued copies and need no draw). `group_forced` clamps the
    groups whose value the evidence determines.
    """

    branch_ids: tuple
    customer_ids: tuple
    node_refs: tuple
    parent_idx: np.ndarray
    cust_branch: np.ndarray
    p_fail: np.ndarray
    pi2: float
    lik: np.ndarray
    forced_d: np.ndarray
    forced_c: np.ndarray
    group_of: np.ndarray
    group_parent: np.ndarray
    group_child_ptr: np.ndarray
    group_child_idx: np.ndarray
    group_p_fail: np.ndarray
    group_lik: np.ndarray
    group_forced: np.ndarray
    cust_free: bool
    group_cust_ptr: np.ndarray
    group_cust_idx: np.ndarray
    cust_group: np.ndarray
    cust_q: np.ndarray

    @property
    def n_branches(self) -> int:
        return len(self.branch_ids)

    @property
    def n_customers(self) -> int:
        return len(self.customer_ids)

    @property
    def n_unknown(self) -> int:
        return len(self.branch_ids) + len(self.customer_ids)

    @property
    def n_groups(self) -> int:
        return len(self.group_p_fail)

    @property
    def n_kernel_nodes(self) -> int:
        return self.n_groups + len(self.cust_group)


def _propagate_constraints(
    parent_idx, children, cust_of, cust_branch, p_fail, pi2, lik
):
    """Fixpoint of the implications of exactly-0/1 factor entries.

    Returns (forced_d, forced_c) with -1 for unconstrained nodes. Raises
    ZeroSupportError when the implications contradict, which is precisely the
    inconsistent-hard-evidence condition.
    """
    k = len(parent_idx)
    nc = len(cust_branch)
    forced_d = np.full(k, -1, dtype=np.int8)
    forced_c = np.full(nc, -1, dtype=np.int8)
    work: list[tuple[str, int, int]] = []

    def set_d(i: int, v: int) -> None:
        if forced_d[i] == v:
            return
        if forced_d[i] != -1:
            raise ZeroSupportError(
                "evidence is inconsistent with the deterministic factors "
                f"at branch state index {i}"
            )
        forced_d[i] = v
        work.append(("d", i, v))

    def set_c(j: int, v: int) -> None:
        if forced_c[j] == v:
            return
        if forced_c[j] != -1:
            raise ZeroSupportError(
                "evidence is inconsistent with the deterministic factors "
                f"at customer state index {j}"
            )
        forced_c[j] = v
        work.append(("c", j, v))

    for j in range(nc):
        if lik[j, 0] == 0.0 and lik[j, 1] == 0.0:
            raise ZeroSupportError(
                f"customer evidence at index {j} has zero likelihood for both states"
            )
        if lik[j, 1] == 0.0:
            set_c(j, 0)
        elif lik[j, 0] == 0.0:
            set_c(j, 1)
    for i in range(k):
        if p_fail[i] == 1.0:
            set_d(i, 1)
    if pi2 == 1.0:
        for j in range(nc):
            set_c(j, 1)
    while work:
        tag, idx, v = work.pop()
        if tag == "d":
            par = parent_idx[idx]
            if v == 1:
                # Cascade forward; a branch with p_fail == 0 can only be
                # de-energized through its parent.
                for ch in children[idx]:
                    set_d(ch, 1)
                for j in cust_of[idx]:
                    set_c(j, 1)
                if p_fail[idx] == 0.0 and par >= 0:
                    set_d(par, 1)
            else:
                # Energized branch: parent must be energized too, children
                # with no failure drivers of their own copy the state, and
                # fault-free customers stay energized.
                if par >= 0:
                    set_d(par, 0)
                for ch in children[idx]:
                    if p_fail[ch] == 0.0:
                        set_d(ch, 0)
                if pi2 == 0.0:
                    for j in cust_of[idx]:
                        set_c(j, 0)
        else:
            b = cust_branch[idx]
            if v == 0:
                set_d(b, 0)
            elif pi2 == 0.0:
                set_d(b, 1)
    return forced_d, forced_c


def compile_model(bn: BayesNet, ev: EvidenceSet, params: ModelParams) -> CompiledModel:
    """Fold evidence into flat arrays for the samplers and the oracle.

    `params` must be resolved (no Beta priors left); the caller decides
    whether that resolution was a prior draw or the prior mean.
    """
    if not params.is_resolved:
        raise ValidationError("compile_model needs resolved params")
    ev.validate_against(bn.topology, bn.metered)
    t = bn.topology
    evp = params.evidence
    branch_ids = t.branch_ids
    bindex = {b: i for i, b in enumerate(branch_ids)}
    k = len(branch_ids)
    parent_idx = np.array(
        [bindex[t.branch(b).parent] if t.branch(b).parent else -1 for b in branch_ids],
        dtype=np.int32,
    )
    children: list[list[int]] = [[] for _ in range(k)]
    for i, b in enumerate(branch_ids):
        if parent_idx[i] >= 0:
            children[parent_idx[i]].append(i)
    customers = [c for b in branch_ids for c in t.customers_on(b)]
    customer_ids = tuple(c.id for c in customers)
    nc = len(customers)
    cust_branch = np.array([bindex[c.branch] for c in customers], dtype=np.int32)
    cust_of: list[list[int]] = [[] for _ in range(k)]
    for j, c in enumerate(customers):
        cust_of[bindex[c.branch]].append(j)
    p_fail = np.empty(k, dtype=np.float64)
    for i, b in enumerate(branch_ids):
        bev = BranchEvidence(
            wind_speed=ev.wind.get(b, 0.0),
            vegetation=ev.vegetation.get(b),
            physical=t.branch(b).physical,
        )
        p_fail[i] = branch_failure_probability(bev, params.fragility)
    lik = np.empty((nc, 2), dtype=np.float64)
    for j, c in enumerate(customers):
        h = ev.human.get(c.id, 0)
        m = ev.meter.get(c.id, 0) if c.id in bn.metered else None
        for v in (0, 1):
            w = human_evidence_factor(v, evp)[h]
            if m is not None:
                w *= meter_evidence_factor(v, evp.pi4, evp.pi5)[m]
            lik[j, v] = w
    pi2 = float(evp.pi2)
    forced_d, forced_c = _propagate_constraints(
        parent_idx, children, cust_of, cust_branch, p_fail, pi2, lik
    )

    # Contract deterministic copies. Branch order is topological, so a single
    # pass assigns each zero-p_fail branch to its parent's group and group ids
    # come out topologically sorted as well.
    group_of = np.empty(k, dtype=np.int32)
    reps: list[int] = []
    for i in range(k):
        if parent_idx[i] >= 0 and p_fail[i] == 0.0:
            group_of[i] = group_of[parent_idx[i]]
        else:
            group_of[i] = len(reps)
            reps.append(i)
    ng = len(reps)
    rep_arr = np.array(reps, dtype=np.int32)
    group_parent = np.array(
        [group_of[parent_idx[r]] if parent_idx[r] >= 0 else -1 for r in reps],
        dtype=np.int32,
    )
    group_p_fail = p_fail[rep_arr]
    group_forced = forced_d[rep_arr]
    gchildren: list[list[int]] = [[] for _ in range(ng)]
    for g in range(1, ng):
        gchildren[group_parent[g]].append(g)
    cust_free = pi2 > 0.0
    group_lik = np.ones((ng, 2), dtype=np.float64)
    for j in range(nc):
        g = group_of[cust_branch[j]]
        group_lik[g, 1] *= lik[j, 1]
        group_lik[g, 0] *= pi2 * lik[j, 1] + (1.0 - pi2) * lik[j, 0]
    if cust_free:
        cust_group = group_of[cust_branch].astype(np.int32)
        gcust: list[list[int]] = [[] for _ in range(ng)]
        for j in range(nc):
            gcust[cust_group[j]].append(j)
        denom = pi2 * lik[:, 1] + (1.0 - pi2) * lik[:, 0]
        cust_q = pi2 * lik[:, 1] / denom
    else:
        cust_group = np.empty(0, dtype=np.int32)
        gcust = [[] for _ in range(ng)]
        cust_q = np.empty(0, dtype=np.float64)

    def csr(groups: list[list[int]]):
        ptr = np.zeros(len(groups) + 1, dtype=np.int32)
        for i, g in enumerate(groups):
            ptr[i + 1] = ptr[i] + len(g)
        idx = np.array([x for g in groups for x in g], dtype=np.int32)
        return ptr, idx

    group_child_ptr, group_child_idx = csr(gchildren)
    group_cust_ptr, group_cust_idx = csr(gcust)
    node_refs = tuple(
        [NodeRef(NodeKind.BRANCH_STATE, b) for b in branch_ids]
        + [NodeRef(NodeKind.CUSTOMER_STATE, c.branch, c.id) for c in customers]
    )
    return CompiledModel(
        branch_ids=branch_ids,
        customer_ids=customer_ids,
        node_refs=node_refs,
        parent_idx=parent_idx,
        cust_branch=cust_branch,
        p_fail=p_fail,
        pi2=pi2,
        lik=lik,
        forced_d=forced_d,
        forced_c=forced_c,
        group_of=group_of,
        group_parent=group_parent,
        group_child_ptr=group_child_ptr,
        group_child_idx=group_child_idx,
        group_p_fail=group_p_fail,
        group_lik=group_lik,
        group_forced=group_forced,
        cust_free=cust_free,
        group_cust_ptr=group_cust_ptr,
        group_cust_idx=group_cust_idx,
        cust_group=cust_group,
        cust_q=cust_q,
    )
