"""Monte-Carlo experiment harness: synthetic feeders, outage scenarios with
corrupted evidence, and the batch inference runner.

The generation protocol per scenario: place meters on a random
observability-fraction of customers, draw the outage branches, propagate
de-energization downstream, collect human reports from de-energized customers
with rate 1 - exp(-lambda_gen * delta_t), then corrupt: energized customers
file false reports at the human_false rate, collected reports are lost to
NLP errors at the nlp_error rate, and true last gasps are dropped at the
ami_failure rate. The generator's lambda_gen deliberately differs from the
model's lambda1 (default twice it) so inference never sees its own
generating distribution.

Everything is reproducible: scenario `index` under `spec.seed` fully
determines the scenario, and the per-scenario inference seed derives from the
Gibbs seed and the index, so results are identical no matter how many workers
run them.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from .errors import FormatError, GridFuseError, ValidationError
from .evidence import EvidenceSet, format_evidence, load_evidence
from .factors import ModelParams, Vegetation
from .feeder import (
    Branch,
    BranchPhysical,
    Customer,
    FeederTopology,
    natural_key,
    select_outage_locations,
)
from .gibbs import GibbsConfig, infer
from .metrics import MetricReport, aggregate, confusion, metrics
from .network import build_bn

__all__ = [
    "ScenarioSpec",
    "Scenario",
    "ScenarioResult",
    "MonteCarloResult",
    "generate_topology",
    "generate_scenario",
    "run_monte_carlo",
    "dump_scenario",
    "dump_prediction",
    "load_state_file",
    "workers_from_env",
]

WORKERS_ENV_VAR = "GRIDFUSE_WORKERS"


@dataclass(frozen=True)
class ScenarioSpec:
    """Protocol knobs for one experiment family.

    report_lambda None means "derive as 2 x the model's lambda1", resolved by
    run_monte_carlo before generation. customer_fault_rate adds service-point
    outages on energized branches to the ground truth (0 disables them).
    """

    observability: float
    n_scenarios: int
    n_outages: int = 1
    delta_t_min: float = 10.0
    human_false_rate: float = 0.10
    nlp_error_rate: float = 0.15
    ami_failure_rate: float = 0.03
    customer_fault_rate: float = 0.0
    report_lambda: float | None = None
    wind_speed: float = 10.0
    vegetation: Vegetation = Vegetation(1.0, 30.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.observability <= 1.0:
            raise ValidationError(f"observability={self.observability} outside [0, 1]")
        for name in (
            "human_false_rate",
            "nlp_error_rate",
            "ami_failure_rate",
            "customer_fault_rate",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name}={v} outside [0, 1]")
        if self.n_scenarios < 1:
            raise ValidationError(f"n_scenarios must be >= 1, got {self.n_scenarios}")
        if self.n_outages < 1:
            raise ValidationError(f"n_outages must be >= 1, got {self.n_outages}")
        if self.delta_t_min < 0:
            raise ValidationError(f"delta_t_min must be >= 0, got {self.delta_t_min}")
        if self.wind_speed < 0:
            raise ValidationError(f"wind_speed must be >= 0, got {self.wind_speed}")
        if self.report_lambda is not None and self.report_lambda <= 0:
            raise ValidationError(f"report_lambda must be positive, got {self.report_lambda}")


@dataclass(frozen=True)
class Scenario:
    """One generated outage episode with ground truth and observed evidence."""

    index: int
    meter_set: frozenset
    true_outage_branches: tuple
    true_branch_states: dict
    true_customer_states: dict
    evidence: EvidenceSet
    outage_time: float


def generate_topology(
    n_branches: int,
    branching_factor=None,
    customers_per_branch=None,
    seed: int = 0,
) -> FeederTopology:
    """Random radial feeder, deterministic given the seed.

    branching_factor and customers_per_branch are rng -> int draws; defaults
    are uniform over {1,2,3} children and {3,...,8} customers. Each new branch
    attaches to a uniformly chosen branch that still has child capacity, so a
    constant branching factor of 1 yields a chain.
    """
    if n_branches < 1:
        raise ValidationError(f"n_branches must be >= 1, got {n_branches}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draw_children = branching_factor or (lambda r: int(r.integers(1, 4)))
    draw_customers = customers_per_branch or (lambda r: int(r.integers(3, 9)))
    branches: list[Branch] = []
    capacity: list[int] = []
    open_slots: list[int] = []
    for i in range(n_branches):
        bid = f"b{i + 1}"
        if i == 0:
            parent = None
        else:
            if open_slots:
                pos = int(rng.integers(0, len(open_slots)))
                pidx = open_slots[pos]
                capacity[pidx] -= 1
                if capacity[pidx] == 0:
                    open_slots.pop(pos)
            else:
                pidx = int(rng.integers(0, len(branches)))
            parent = branches[pidx].id
        poles = int(rng.integers(2, 6))
        spans = tuple(int(rng.integers(2, 4)) for _ in range(max(poles - 1, 1)))
        length = round(float(rng.uniform(40.0, 400.0)), 1)
        p_u = round(float(rng.uniform(0.0, 0.2)), 3)
        branches.append(Branch(bid, parent, BranchPhysical(poles, spans, length, p_u)))
        cap = max(int(draw_children(rng)), 0)
        capacity.append(cap)
        if cap > 0:
            open_slots.append(i)
    customers: list[Customer] = []
    serial = 0
    for b in branches:
        for _ in range(max(int(draw_customers(rng)), 0)):
            serial += 1
            customers.append(Customer(f"c{serial}", b.id, False))
    return FeederTopology(tuple(branches), tuple(customers))


def generate_scenario(t: FeederTopology, spec: ScenarioSpec, index: int) -> Scenario:
    """Deterministic scenario `index` of the spec's family."""
    if spec.report_lambda is None:
        raise ValidationError(
            "spec.report_lambda is unset; run_monte_carlo derives it from the "
            "model params, or set it explicitly"
        )
    if spec.n_outages > len(t.branch_ids):
        raise ValidationError(
            f"n_outages={spec.n_outages} exceeds branch count {len(t.branch_ids)}"
        )
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(index,)))
    customer_ids = t.customer_ids
    n_meters = int(round(spec.observability * len(customer_ids)))
    meter_pos = rng.choice(len(customer_ids), size=n_meters, replace=False)
    meter_set = frozenset(customer_ids[p] for p in meter_pos)
    outage_pos = rng.choice(len(t.branch_ids), size=spec.n_outages, replace=False)
    outage_branches = tuple(sorted((t.branch_ids[p] for p in outage_pos), key=natural_key))
    true_d = {b: 0 for b in t.branch_ids}
    for b in outage_branches:
        true_d[b] = 1
        for desc in t.descendants(b):
            true_d[desc] = 1
    true_c = {c.id: true_d[c.branch] for c in t.customers}
    if spec.customer_fault_rate > 0.0:
        # Service-point faults on energized branches; drawn before evidence so
        # the default (rate 0) leaves the stream layout untouched.
        for c in t.customers:
            if true_c[c.id] == 0 and rng.random() < spec.customer_fault_rate:
                true_c[c.id] = 1
    p_report = 1.0 - float(np.exp(-spec.report_lambda * spec.delta_t_min))
    human: dict = {}
    for cid in customer_ids:
        if true_c[cid] == 1:
            report = 1 if rng.random() < p_report else 0
            if report == 1 and rng.random() < spec.nlp_error_rate:
                report = 0
        else:
            report = 1 if rng.random() < spec.human_false_rate else 0
        human[cid] = report
    meter: dict = {}
    for cid in customer_ids:
        if cid not in meter_set:
            continue
        if true_c[cid] == 1:
            meter[cid] = 0 if rng.random() < spec.ami_failure_rate else 1
        else:
            meter[cid] = 0
    evidence = EvidenceSet(
        human=human,
        meter=meter,
        wind={b: spec.wind_speed for b in t.branch_ids},
        vegetation={b: spec.vegetation for b in t.branch_ids},
        elapsed_window=spec.delta_t_min,
    )
    outage_time = float(rng.uniform(0.0, 24.0 * 60.0))
    return Scenario(
        index=index,
        meter_set=meter_set,
        true_outage_branches=outage_branches,
        true_branch_states=true_d,
        true_customer_states=true_c,
        evidence=evidence,
        outage_time=outage_time,
    )


@dataclass
class ScenarioResult:
    """Outcome of inference on one scenario; `error` set means it failed and
    contributed nothing to the aggregate beyond the failure count."""

    index: int
    report: MetricReport | None = None
    error: str | None = None
    locations: tuple = ()
    true_locations: tuple = ()
    decided_branches: dict = field(default_factory=dict)
    decided_customers: dict = field(default_factory=dict)
    elapsed_s: float = 0.0


@dataclass
class MonteCarloResult:
    results: list
    report: MetricReport | None
    failed: int
    mean_infer_s: float
    total_s: float


def _normalized_spec(spec: ScenarioSpec, model: ModelParams) -> ScenarioSpec:
    if spec.report_lambda is not None:
        return spec
    return replace(spec, report_lambda=2.0 * model.evidence.lambda1)


def _scenario_seed(base_seed: int, index: int) -> int:
    return int(
        np.random.SeedSequence(base_seed, spawn_key=(index,)).generate_state(
            1, np.uint64
        )[0]
    )


def run_scenario(
    t: FeederTopology,
    spec: ScenarioSpec,
    model: ModelParams,
    cfg: GibbsConfig,
    index: int,
) -> ScenarioResult:
    """Generate scenario `index`, infer, and score it."""
    spec = _normalized_spec(spec, model)
    sc = generate_scenario(t, spec, index)
    true_locations = select_outage_locations(t, sc.true_branch_states)
    started = time.perf_counter()
    try:
        bn = build_bn(t, model, meter_coverage=sc.meter_set)
        cfg_i = replace(cfg, seed=_scenario_seed(cfg.seed, index))
        est = infer(bn, t, sc.evidence, cfg_i)
    except GridFuseError as exc:
        return ScenarioResult(
            index=index, error=str(exc), true_locations=true_locations,
            elapsed_s=time.perf_counter() - started,
        )
    elapsed = time.perf_counter() - started
    fully_correct = (
        est.decided_branches == sc.true_branch_states
        and est.decided_customers == sc.true_customer_states
    )
    report = metrics(
        confusion(est.decided_branches, sc.true_branch_states),
        beta=1.0,
        fully_correct=fully_correct,
    )
    return ScenarioResult(
        index=index,
        report=report,
        locations=est.locations,
        true_locations=true_locations,
        decided_branches=est.decided_branches,
        decided_customers=est.decided_customers,
        elapsed_s=elapsed,
    )


def _run_batch(args) -> list:
    t, spec, model, cfg, indices = args
    return [run_scenario(t, spec, model, cfg, i) for i in indices]


def workers_from_env(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "")
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{WORKERS_ENV_VAR}={raw!r} is not an integer") from None
    return max(n, 1)


def run_monte_carlo(
    t: FeederTopology,
    spec: ScenarioSpec,
    model: ModelParams,
    cfg: GibbsConfig,
    workers: int | None = None,
) -> MonteCarloResult:
    """All scenarios of the spec, scored and aggregated.

    Per-scenario failures are recorded, counted, and excluded from the
    aggregate rather than aborting the run. Worker count defaults to the
    GRIDFUSE_WORKERS environment variable (else 1); results do not depend
    on it.
    """
    spec = _normalized_spec(spec, model)
    if workers is None:
        workers = workers_from_env()
    started = time.perf_counter()
    indices = list(range(spec.n_scenarios))
    if workers > 1 and spec.n_scenarios > 1:
        chunks = [indices[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            batches = list(
                pool.map(_run_batch, [(t, spec, model, cfg, c) for c in chunks])
            )
        results = sorted(
            (r for batch in batches for r in batch), key=lambda r: r.index
        )
    else:
        results = [run_scenario(t, spec, model, cfg, i) for i in indices]
    total = time.perf_counter() - started
    ok = [r for r in results if r.error is None]
    report = aggregate([r.report for r in ok]) if ok else None
    mean_infer = sum(r.elapsed_s for r in ok) / len(ok) if ok else 0.0
    return MonteCarloResult(
        results=results,
        report=report,
        failed=len(results) - len(ok),
        mean_infer_s=mean_infer,
        total_s=total,
    )


def _state_lines(prefix: str, branch_states: dict, customer_states: dict, t: FeederTopology) -> str:
    lines = []
    for b in sorted(branch_states, key=natural_key):
        lines.append(f"{prefix} D:{b} {branch_states[b]}")
    for c in sorted(customer_states, key=natural_key):
        lines.append(f"{prefix} C:{c} {customer_states[c]}")
    return "\n".join(lines) + "\n"


def dump_scenario(directory, scenario: Scenario, spec: ScenarioSpec, t: FeederTopology) -> None:
    """Write evidence.txt, truth.txt, and manifest.json for exact replay."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    (path / "evidence.txt").write_text(format_evidence(scenario.evidence))
    (path / "truth.txt").write_text(
        _state_lines("truth", scenario.true_branch_states, scenario.true_customer_states, t)
    )
    manifest = {
        "index": scenario.index,
        "seed": spec.seed,
        "spec": {
            k: v for k, v in asdict(spec).items() if k != "vegetation"
        },
        "vegetation": [spec.vegetation.species_constant, spec.vegetation.diameter_cm],
        "meter_customers": sorted(scenario.meter_set, key=natural_key),
        "true_outage_branches": list(scenario.true_outage_branches),
        "outage_time_min": scenario.outage_time,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def dump_prediction(directory, result: ScenarioResult, t: FeederTopology) -> None:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    (path / "predicted.txt").write_text(
        _state_lines("pred", result.decided_branches, result.decided_customers, t)
    )


def load_state_file(path) -> dict:
    """Parse `truth <node> <0|1>` / `pred <node> <0|1>` lines into a map
    keyed by the node id string."""
    states: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 3 or tokens[0] not in ("truth", "pred"):
            raise FormatError(f"{path}:{lineno}: expected 'truth|pred <node> <0|1>'")
        if tokens[2] not in ("0", "1"):
            raise FormatError(f"{path}:{lineno}: state must be 0 or 1")
        if tokens[1] in states:
            raise FormatError(f"{path}:{lineno}: duplicate node {tokens[1]!r}")
        states[tokens[1]] = int(tokens[2])
    if not states:
        raise FormatError(f"{path}: no state lines found")
    return states


def replay_evidence(directory, delta_t_min: float) -> EvidenceSet:
    """Load a dumped scenario's evidence file."""
    with open(Path(directory) / "evidence.txt", "rb") as fh:
        return load_evidence(fh, elapsed_window=delta_t_min)
