"""Potential scale reduction diagnostics and the iteration-count sweep.

Each chain's retained samples are split into halves and stacked into a
2n x m matrix per variable. The scale reduction factor is computed exactly
as written in the source formulation:

    B = m / (2n - 1) * sum_j (mean_j - grand_mean)^2
    V = (1 / 2n) * sum_j s_j^2
    R = sqrt(((n - 1) / n * V + B / n) / V)

with n the ORIGINAL chain count even though 2n half-sequences are averaged.
That convention is unusual (standard split-R uses the row count everywhere)
but it is what the formulation states, tests pin it against a naive
transcription, and the 1.1 acceptance threshold is calibrated to it.

V = 0 (every retained sample identical within every half-sequence) is a
degenerate-converged signal: the variable is reported with R = NaN and a
flag, never a crash, and it counts as converged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .evidence import EvidenceSet
from .gibbs import GibbsConfig, run_chain
from .network import BayesNet, compile_model

__all__ = [
    "ChainMatrix",
    "RHatStats",
    "RHatReport",
    "split_and_stack",
    "r_hat",
    "CalibrationResult",
    "SweepPoint",
    "calibrate_iterations",
]


@dataclass(frozen=True)
class ChainMatrix:
    """2n x m matrix of half-sequences from n chains of one variable."""

    rows: np.ndarray
    n_chains: int

    @property
    def m(self) -> int:
        return self.rows.shape[1]


def split_and_stack(sequences) -> ChainMatrix:
    """Split n equal-length sequences into halves, stacking to 2n rows.

    Odd lengths lose their final sample. Sequences shorter than 2 have no
    halves to compare and are rejected.
    """
    seqs = np.asarray(sequences, dtype=np.float64)
    if seqs.ndim != 2:
        raise ValidationError(f"expected an (n, length) array, got shape {seqs.shape}")
    n, length = seqs.shape
    if n < 1:
        raise ValidationError("need at least one sequence")
    if length < 2:
        raise ValidationError(f"sequences of length {length} cannot be split")
    m = length // 2
    halves = np.empty((2 * n, m), dtype=np.float64)
    halves[0::2] = seqs[:, :m]
    halves[1::2] = seqs[:, m:2 * m]
    return ChainMatrix(rows=halves, n_chains=n)


@dataclass(frozen=True)
class RHatStats:
    """Per-variable diagnostic: between/within variances and the R factor."""

    b: float
    v: float
    r: float
    degenerate: bool = False


def r_hat(matrix: ChainMatrix) -> RHatStats:
    """Scale reduction factor of one variable from its split-chain matrix."""
    rows = matrix.rows
    n = matrix.n_chains
    two_n, m = rows.shape
    if m < 2:
        raise ValidationError("need at least 2 samples per half-sequence")
    means = rows.mean(axis=1)
    grand = means.mean()
    b = m / (two_n - 1) * float(((means - grand) ** 2).sum()) if two_n > 1 else 0.0
    s2 = rows.var(axis=1, ddof=1)
    v = float(s2.sum()) / two_n
    if v == 0.0:
        return RHatStats(b=b, v=0.0, r=math.nan, degenerate=True)
    r = math.sqrt(((n - 1) / n * v + b / n) / v)
    return RHatStats(b=b, v=v, r=r)


@dataclass
class RHatReport:
    """Diagnostics for every tracked variable at one iteration count."""

    per_variable: dict
    threshold: float
    max_r: float = field(init=False)
    converged: bool = field(init=False)

    def __post_init__(self) -> None:
        finite = [s.r for s in self.per_variable.values() if not s.degenerate]
        self.max_r = max(finite) if finite else math.nan
        self.converged = all(f <= self.threshold for f in finite)


@dataclass(frozen=True)
class SweepPoint:
    iterations: int
    report: RHatReport


@dataclass
class CalibrationResult:
    """Outcome of the sweep: the chosen M and every evaluated point."""

    chosen_iterations: int
    converged: bool
    points: list


def _worst_case(reports) -> dict:
    """Per-variable worst R across evidence scenarios; a variable is
    degenerate only if it is degenerate in every scenario."""
    merged: dict = {}
    for report in reports:
        for node, stats in report.items():
            cur = merged.get(node)
            if cur is None:
                merged[node] = stats
            elif cur.degenerate and not stats.degenerate:
                merged[node] = stats
            elif not stats.degenerate and stats.r > cur.r:
                merged[node] = stats
    return merged


def calibrate_iterations(
    bn: BayesNet,
    evidence_sets,
    sweep,
    n_chains: int = 10,
    threshold: float = 1.1,
    warmup: float = 0.5,
    seed: int = 0,
    scan_order: str = "topological",
) -> CalibrationResult:
    """Find the smallest swept iteration count whose worst-case R clears the
    threshold.

    For each candidate M, every evidence scenario runs `n_chains` chains long
    enough that M samples remain after the warm-up discard; the retained
    samples are split and R computed per variable, taking the worst across
    scenarios. The sweep stops at the first converged point. If none
    converges, the largest point is returned with converged=False.
    """
    sweep = [int(m) for m in sweep]
    if not sweep:
        raise ValidationError("sweep must contain at least one iteration count")
    if any(b >= a for a, b in zip(sweep[1:], sweep)):
        raise ValidationError("sweep must be strictly increasing")
    if sweep[0] < 4:
        raise ValidationError("sweep entries must be >= 4 to form half-sequences")
    if not 0.0 <= warmup < 1.0:
        raise ValidationError(f"warmup must be in [0, 1), got {warmup}")
    evidence_sets = list(evidence_sets)
    if not evidence_sets:
        raise ValidationError("need at least one evidence scenario")
    mean_params = bn.params.resolve(None)
    compiled_sets = [compile_model(bn, ev, mean_params) for ev in evidence_sets]
    points: list[SweepPoint] = []
    for m in sweep:
        total = math.ceil(m / (1.0 - warmup))
        cfg = GibbsConfig(
            iterations=total, scan_order=scan_order, chains=n_chains, seed=seed
        )
        per_scenario = []
        for s_idx, compiled in enumerate(compiled_sets):
            per_var: dict = {}
            chains_by_node: dict = {}
            for ci in range(n_chains):
                # Distinct chains per (scenario, candidate M, chain index).
                seqs = run_chain(
                    bn, evidence_sets[s_idx],
                    replace(cfg, seed=seed + 1_000_003 * s_idx + 7 * m),
                    ci, compiled=compiled,
                )
                for node, seq in seqs.items():
                    chains_by_node.setdefault(node, []).append(seq[total - m:])
            for node, seqs_list in chains_by_node.items():
                per_var[node] = r_hat(split_and_stack(np.stack(seqs_list)))
            per_scenario.append(per_var)
        report = RHatReport(per_variable=_worst_case(per_scenario), threshold=threshold)
        points.append(SweepPoint(iterations=m, report=report))
        if report.converged:
            return CalibrationResult(chosen_iterations=m, converged=True, points=points)
    return CalibrationResult(
        chosen_iterations=sweep[-1], converged=False, points=points
    )
