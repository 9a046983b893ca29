"""Multi-source outage evidence fusion and localization for radial feeders.

Builds a Bayesian network from a feeder's tree topology, fuses human reports,
smart-meter last gasps, and weather/asset evidence through conditional
probability factors, infers per-branch and per-customer de-energization
posteriors by Gibbs sampling (with a brute-force exact oracle for small
networks), and reduces decided states to outage locations. Includes
convergence calibration, a Monte-Carlo scenario harness, and metrics.
"""

from .calibration import (
    CalibrationResult,
    ChainMatrix,
    RHatReport,
    RHatStats,
    SweepPoint,
    calibrate_iterations,
    r_hat,
    split_and_stack,
)
from .errors import (
    FormatError,
    GridFuseError,
    NetworkTooLargeError,
    ValidationError,
    ZeroSupportError,
)
from .evidence import EvidenceSet, format_evidence, load_evidence
from .exact import ExactResult, ZeroEvidenceError, exact_inference
from .factors import (
    BetaPrior,
    BranchEvidence,
    EvidenceParams,
    FragilityParams,
    LogisticTreeModel,
    ModelParams,
    QuadraticForceRatio,
    Vegetation,
    branch_failure_probability,
    branch_state_factor,
    customer_state_factor,
    default_params,
    format_params,
    human_evidence_factor,
    load_params,
    meter_evidence_factor,
    sample_parameter,
)
from .feeder import (
    Branch,
    BranchPhysical,
    Customer,
    FeederTopology,
    format_topology,
    load_topology,
    select_outage_locations,
)
from .gibbs import (
    GibbsConfig,
    PosteriorEstimate,
    decide_and_locate,
    estimate_marginals,
    infer,
    run_chain,
)
from .metrics import ConfusionCounts, MetricReport, aggregate, confusion, metrics
from .network import (
    BayesNet,
    NodeKind,
    NodeRef,
    build_bn,
    compile_model,
    joint_log_prob,
    local_conditional,
    non_descendants,
    parameter_count,
)
from .scenario import (
    MonteCarloResult,
    Scenario,
    ScenarioResult,
    ScenarioSpec,
    generate_scenario,
    generate_topology,
    run_monte_carlo,
    run_scenario,
)

__version__ = "0.1.0"
