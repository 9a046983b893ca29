"""Conditional probability factors of the outage fusion model.

Every factor is a pure function returning a distribution over {0, 1} as a
``(p_zero, p_one)`` tuple. Notation follows the usual fragility-analysis
conventions: a branch fails if any of its L poles or any of its K conductor
spans fails (series system), pole failure follows a lognormal fragility curve
in wind speed with median chi and log standard deviation xi, and conductor
failure combines wind loading with tree-induced damage.

Evidence reliabilities:
    pi2  customer-side fault probability while the branch is energized
    pi3  false-positive human report probability
    pi4  probability a true last gasp is delivered (AMI reliability)
    pi5  probability of a spurious last gasp from an energized customer
    lambda1, delta_t_min  report arrival rate and collection window; a
        de-energized customer reports within the window with probability
        1 - exp(-lambda1 * delta_t_min)

pi2, pi4, pi5 may carry Beta priors instead of fixed values; one draw per
inference episode then parameterizes the whole feeder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .errors import FormatError, ValidationError
from .feeder import BranchPhysical

__all__ = [
    "Vegetation",
    "BranchEvidence",
    "FragilityParams",
    "BetaPrior",
    "EvidenceParams",
    "ModelParams",
    "QuadraticForceRatio",
    "LogisticTreeModel",
    "branch_failure_probability",
    "branch_state_factor",
    "customer_state_factor",
    "human_evidence_factor",
    "meter_evidence_factor",
    "sample_parameter",
    "default_params",
    "load_params",
    "format_params",
]

BinaryDist = tuple  # (P(value=0), P(value=1))


@dataclass(frozen=True)
class Vegetation:
    """Vegetation exposure of one branch: species constant and trunk diameter."""

    species_constant: float
    diameter_cm: float


@dataclass(frozen=True)
class BranchEvidence:
    """Observed exogenous conditions of one branch."""

    wind_speed: float
    vegetation: Vegetation | None
    physical: BranchPhysical


@dataclass(frozen=True)
class BetaPrior:
    """Beta(alpha, beta) prior over a probability parameter."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValidationError(
                f"Beta prior shapes must be positive, got ({self.alpha}, {self.beta})"
            )

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


ParamValue = Union[float, BetaPrior]


@dataclass(frozen=True)
class QuadraticForceRatio:
    """Wind-to-nominal force ratio (w / w_crit)^2; drag force scales with v^2."""

    w_crit: float

    def __post_init__(self) -> None:
        if self.w_crit <= 0:
            raise ValidationError(f"w_crit must be positive, got {self.w_crit}")

    def __call__(self, wind_speed: float) -> float:
        return (wind_speed / self.w_crit) ** 2


@dataclass(frozen=True)
class LogisticTreeModel:
    """Tree-strike failure probability, logistic in species x diameter x wind."""

    slope: float
    x0: float

    def __call__(self, veg: "Vegetation", wind_speed: float) -> float:
        x = veg.species_constant * veg.diameter_cm * wind_speed
        return 1.0 / (1.0 + math.exp(-self.slope * (x - self.x0)))


@dataclass(frozen=True)
class FragilityParams:
    """Constants of the series fragility model.

    Attributes:
        chi: median wind speed of the pole fragility curve, m/s.
        xi: logarithmic standard deviation of the fragility curve.
        alpha_tree: average tree-induced damage factor in [0, 1].
        wind_force_ratio: wind speed -> F_wind / F_no, clamped at 1 in use.
        tree_fail_prob: (vegetation, wind speed) -> fallen-tree failure
            probability of one conductor.
    """

    chi: float
    xi: float
    alpha_tree: float
    wind_force_ratio: Callable[[float], float]
    tree_fail_prob: Callable[[Vegetation, float], float]

    def __post_init__(self) -> None:
        if self.chi <= 0:
            raise ValidationError(f"chi must be positive, got {self.chi}")
        if self.xi <= 0:
            raise ValidationError(f"xi must be positive, got {self.xi}")
        if not 0.0 <= self.alpha_tree <= 1.0:
            raise ValidationError(
                f"alpha_tree={self.alpha_tree} outside [0, 1]"
            )


@dataclass(frozen=True)
class EvidenceParams:
    """Evidence reliability parameters; pi2/pi4/pi5 may be Beta priors."""

    pi2: ParamValue
    pi3: ParamValue
    pi4: ParamValue
    pi5: ParamValue
    lambda1: float
    delta_t_min: float

    def __post_init__(self) -> None:
        for name in ("pi2", "pi3", "pi4", "pi5"):
            v = getattr(self, name)
            if isinstance(v, BetaPrior):
                continue
            if not 0.0 <= float(v) <= 1.0:
                raise ValidationError(f"{name}={v} outside [0, 1]")
        if self.lambda1 <= 0:
            raise ValidationError(f"lambda1 must be positive, got {self.lambda1}")
        if self.delta_t_min < 0:
            raise ValidationError(f"delta_t_min must be >= 0, got {self.delta_t_min}")

    @property
    def is_resolved(self) -> bool:
        return not any(
            isinstance(getattr(self, n), BetaPrior)
            for n in ("pi2", "pi3", "pi4", "pi5")
        )

    def resolve(self, rng: np.random.Generator | None = None) -> "EvidenceParams":
        """Replace Beta priors with concrete values.

        With an rng, each prior is sampled once (one draw per inference
        episode covers the whole feeder). Without, priors collapse to their
        means, which is what deterministic consumers like the exact oracle
        use.
        """

        def one(v: ParamValue) -> float:
            if isinstance(v, BetaPrior):
                return sample_parameter(v, rng) if rng is not None else v.mean
            return float(v)

        return replace(
            self,
            pi2=one(self.pi2),
            pi3=one(self.pi3),
            pi4=one(self.pi4),
            pi5=one(self.pi5),
        )


@dataclass(frozen=True)
class ModelParams:
    """Everything the factors need: fragility constants plus evidence params."""

    fragility: FragilityParams
    evidence: EvidenceParams

    @property
    def is_resolved(self) -> bool:
        return self.evidence.is_resolved

    def resolve(self, rng: np.random.Generator | None = None) -> "ModelParams":
        return replace(self, evidence=self.evidence.resolve(rng))


def _phi(x: float) -> float:
    # Standard normal CDF via the error function.
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def branch_failure_probability(ev: BranchEvidence, fp: FragilityParams) -> float:
    """Failure probability P_l of one branch under the series fragility model.

    P_l = 1 - (1 - p_pole)^L * (1 - P_f)^K where p_pole is the lognormal
    pole fragility at the observed wind speed, L the pole count, K the total
    conductor count over all spans, and P_f the per-conductor failure
    probability combining clamped wind force ratio and tree-induced damage:

        P_f = (1 - p_u) * max(min(F_wind / F_no, 1), alpha * P_tree)

    Zero wind is the limit Phi(-inf) = 0, not a domain error.
    """
    w = ev.wind_speed
    if w < 0:
        raise ValidationError(f"wind_speed must be >= 0, got {w}")
    if w == 0.0:
        p_pole = 0.0
    else:
        p_pole = _phi(math.log(w / fp.chi) / fp.xi)
    phys = ev.physical
    p_tree = 0.0
    if ev.vegetation is not None:
        p_tree = fp.tree_fail_prob(ev.vegetation, w)
        if not 0.0 <= p_tree <= 1.0:
            raise ValidationError(f"tree_fail_prob returned {p_tree}, outside [0, 1]")
    force = min(fp.wind_force_ratio(w), 1.0)
    p_f = (1.0 - phys.underground_probability) * max(force, fp.alpha_tree * p_tree)
    k_total = sum(phys.span_conductor_counts)
    survive = (1.0 - p_pole) ** phys.pole_count * (1.0 - p_f) ** k_total
    return min(max(1.0 - survive, 0.0), 1.0)


def branch_state_factor(
    d_parent: int, ev: BranchEvidence, fp: FragilityParams
) -> BinaryDist:
    """P(D | parent state, branch evidence).

    A de-energized parent de-energizes the branch with probability exactly 1
    (radial cascade, no smoothing); otherwise the branch fails on its own
    with the fragility probability.
    """
    if d_parent == 1:
        return (0.0, 1.0)
    p = branch_failure_probability(ev, fp)
    return (1.0 - p, p)


def customer_state_factor(d_branch: int, pi2: float) -> BinaryDist:
    """P(C | branch state): forced outage under a dead branch, else Bernoulli(pi2)."""
    if d_branch == 1:
        return (0.0, 1.0)
    return (1.0 - pi2, pi2)


def human_evidence_factor(c: int, params: EvidenceParams) -> BinaryDist:
    """P(E_h | customer state) for report collection over the elapsed window.

    A de-energized customer reports within delta_t_min with probability
    1 - exp(-lambda1 * delta_t_min); an energized one files a false positive
    with probability pi3.
    """
    if c == 1:
        p_report = 1.0 - math.exp(-params.lambda1 * params.delta_t_min)
        return (1.0 - p_report, p_report)
    pi3 = params.pi3
    if isinstance(pi3, BetaPrior):
        raise ValidationError("human_evidence_factor needs resolved params (pi3 is a prior)")
    return (1.0 - pi3, pi3)


def meter_evidence_factor(c: int, pi4: float, pi5: float) -> BinaryDist:
    """P(E_m | customer state): last gasp delivered with pi4, spurious with pi5."""
    if c == 1:
        return (1.0 - pi4, pi4)
    return (1.0 - pi5, pi5)


def sample_parameter(prior: BetaPrior, rng: np.random.Generator) -> float:
    """One draw from a Beta prior."""
    return float(rng.beta(prior.alpha, prior.beta))


_TREE_SLOPE_DEFAULT = 0.003
_TREE_X0_DEFAULT = 3000.0
_W_CRIT_DEFAULT = 110.0


def default_params() -> ModelParams:
    """Shipped defaults; placeholder reliabilities, override via config file."""
    fragility = FragilityParams(
        chi=60.0,
        xi=0.25,
        alpha_tree=0.1,
        wind_force_ratio=QuadraticForceRatio(_W_CRIT_DEFAULT),
        tree_fail_prob=LogisticTreeModel(_TREE_SLOPE_DEFAULT, _TREE_X0_DEFAULT),
    )
    evidence = EvidenceParams(
        pi2=0.02,
        pi3=0.05,
        pi4=0.97,
        pi5=0.01,
        lambda1=0.15,
        delta_t_min=10.0,
    )
    return ModelParams(fragility=fragility, evidence=evidence)


_PI_KEYS = ("pi2", "pi3", "pi4", "pi5")
_FLOAT_KEYS = (
    "lambda1",
    "delta_t_min",
    "chi",
    "xi",
    "alpha_tree",
    "w_crit",
    "tree_slope",
    "tree_x0",
)


def _parse_pi(key: str, value: str) -> ParamValue:
    if value.startswith("fixed="):
        try:
            return float(value[len("fixed="):])
        except ValueError:
            raise FormatError(f"{key}: bad fixed value {value!r}") from None
    if value.startswith("beta="):
        parts = value[len("beta="):].split(",")
        if len(parts) != 2:
            raise FormatError(f"{key}: beta needs two shapes, got {value!r}")
        try:
            return BetaPrior(float(parts[0]), float(parts[1]))
        except ValueError:
            raise FormatError(f"{key}: bad beta shapes {value!r}") from None
    raise FormatError(f"{key}: expected fixed=<p> or beta=<a>,<b>, got {value!r}")


def load_params(source) -> ModelParams:
    """Parse a model parameter config.

    One ``key = value`` pair per line, ``#`` comments. Probability keys take
    ``fixed=<p>`` or ``beta=<a>,<b>``; everything else is a float. Keys not
    present keep the shipped defaults; unknown keys are errors.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"line {lineno}: expected key = value, got {line!r}")
        key = key.strip()
        value = value.strip()
        if key in values:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        if key in _PI_KEYS:
            values[key] = _parse_pi(key, value)
        elif key in _FLOAT_KEYS:
            try:
                values[key] = float(value)
            except ValueError:
                raise FormatError(f"line {lineno}: bad float for {key!r}: {value!r}") from None
        else:
            raise FormatError(f"line {lineno}: unknown key {key!r}")
    base = default_params()
    frag = base.fragility
    chi = float(values.get("chi", frag.chi))
    xi = float(values.get("xi", frag.xi))
    alpha_tree = float(values.get("alpha_tree", frag.alpha_tree))
    w_crit = float(values.get("w_crit", _W_CRIT_DEFAULT))
    slope = float(values.get("tree_slope", _TREE_SLOPE_DEFAULT))
    x0 = float(values.get("tree_x0", _TREE_X0_DEFAULT))
    fragility = FragilityParams(
        chi=chi,
        xi=xi,
        alpha_tree=alpha_tree,
        wind_force_ratio=QuadraticForceRatio(w_crit),
        tree_fail_prob=LogisticTreeModel(slope, x0),
    )
    ev = base.evidence
    evidence = EvidenceParams(
        pi2=values.get("pi2", ev.pi2),
        pi3=values.get("pi3", ev.pi3),
        pi4=values.get("pi4", ev.pi4),
        pi5=values.get("pi5", ev.pi5),
        lambda1=float(values.get("lambda1", ev.lambda1)),
        delta_t_min=float(values.get("delta_t_min", ev.delta_t_min)),
    )
    return ModelParams(fragility=fragility, evidence=evidence)


def format_params(params: ModelParams) -> str:
    """Serialize params to the config format.

    Only the shipped callable families (quadratic force ratio, logistic tree
    model) carry their constants and can be written back out; hand-built
    callables have no config representation.
    """

    def pi(v: ParamValue) -> str:
        if isinstance(v, BetaPrior):
            return f"beta={v.alpha:g},{v.beta:g}"
        return f"fixed={v:g}"

    ev = params.evidence
    fr = params.fragility
    if not isinstance(fr.wind_force_ratio, QuadraticForceRatio):
        raise FormatError("wind_force_ratio is not config-representable")
    if not isinstance(fr.tree_fail_prob, LogisticTreeModel):
        raise FormatError("tree_fail_prob is not config-representable")
    lines = [
        f"pi2 = {pi(ev.pi2)}",
        f"pi3 = {pi(ev.pi3)}",
        f"pi4 = {pi(ev.pi4)}",
        f"pi5 = {pi(ev.pi5)}",
        f"lambda1 = {ev.lambda1:g}",
        f"delta_t_min = {ev.delta_t_min:g}",
        f"chi = {fr.chi:g}",
        f"xi = {fr.xi:g}",
        f"alpha_tree = {fr.alpha_tree:g}",
        f"w_crit = {fr.wind_force_ratio.w_crit:g}",
        f"tree_slope = {fr.tree_fail_prob.slope:g}",
        f"tree_x0 = {fr.tree_fail_prob.x0:g}",
    ]
    return "\n".join(lines) + "\n"
