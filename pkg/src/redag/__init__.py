"""Rate-priority multi-DAG scheduling simulator and schedulability analysis."""

from .analysis import (
    RtaResult,
    SchedReport,
    interference_bound,
    response_time,
    rm_utilization_bound,
    schedulability_report,
)
from .generate import GenSpec, GeneratedWorkload, InfeasibleSpec, generate_workload, regime_presets
from .metrics import (
    MetricsReport,
    cdf_table,
    combined_miss_rate,
    job_lateness,
    max_lateness,
    metrics_report,
    miss_rate,
    response_percentiles,
)
from .model import (
    UNBOUNDED,
    DagSpec,
    PriorityMap,
    Task,
    ValidatedWorkload,
    Workload,
    assign_rm_priorities,
    hyperperiod,
    scale_deadlines,
    total_utilization,
    validate_workload,
)
from .sim import (
    Policy,
    SimConfig,
    SimTrace,
    simulate,
    verify_enforcement,
    worst_case_response_from_trace,
)

__version__ = "0.1.0"
