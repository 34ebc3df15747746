"""revmon: event-driven design and blinded variance monitoring for recurrent-event trials."""

from .data import (
    AnalysisSnapshot,
    SubjectRecord,
    SubjectView,
    TrialDataset,
    load_dataset,
    snapshot,
    strip_arms,
    write_events_csv,
)
from .design import (
    DesignOutput,
    DesignSpec,
    constant_hazard_inflation,
    inflation_factor,
    ingel_events,
    mean_baseline_mu,
    plan,
    power_given_variance,
    sample_size,
    schoenfeld_events,
    target_variance,
)
from .errors import ConvergenceError, DataFormatError, DegenerateDataError, RevmonError
from .estimate import (
    FitResult,
    WaldTest,
    breslow_mu0,
    fit_beta,
    partial_score,
    partial_score_derivative,
    robust_variance,
    wald_test,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    ReplicateOutcome,
    Scenario,
    ScenarioSummary,
    run_experiment,
    run_fixed,
    run_proposed,
    run_scenario,
    summarize,
)
from .monitor import (
    BootstrapCI,
    BootstrapConfig,
    MonitorConfig,
    MonitorPoint,
    MonitorResult,
    StopDecision,
    blinded_mu0,
    blinded_variance,
    bootstrap_ci,
    monitor_trajectory,
)
from .simulate import ScenarioParams, draw_frailty, simulate_subject, simulate_trial
from .stepfun import StepFunction

__version__ = "0.1.0"
