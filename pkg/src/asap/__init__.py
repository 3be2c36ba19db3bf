"""Adaptive event packaging and random event removal for event-camera streams."""


from .analysis import (
    IterationTrace,
    fixed_point_bisect,
    fixed_point_iterate,
    settling_iterations,
)
from .config import AsapConfig
from .events import Event, EventPackage, PackageMetrics, read_trace, write_metrics, write_trace
from .gamma import GammaParams, GammaState, compute_gamma, filter_event, update_gamma_hat
from .packager import (
    PackageAssembler,
    PackagerParams,
    TaylorTable,
    build_taylor_table,
    calibrate,
    inflection_point,
    phi,
    phi_taylor,
    push_event,
    target_size,
)
from .pipeline import (
    DeliveryPolicy,
    PowerLaw,
    Scenario,
    Scripted,
    Sinusoid,
    SourceSpec,
    StepSchedule,
    VirtualClock,
    WallClockPipeline,
    run,
    simulate_cost,
    source_generate,
)
from .rate import RateBounds, RateTracker, update_bounds

__version__ = "0.1.0"
