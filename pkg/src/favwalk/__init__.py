"""Local times, favorite sites and stopping-time events of the asymmetric simple random walk."""

from .events import (
    Censored,
    DetectorError,
    EventVerdict,
    Outcome,
    StoppingLog,
    detect_A,
    detect_Atilde,
    detect_B,
    detect_Btilde,
    detect_C,
    detect_C_record,
    evaluate_events,
    gap_statistic,
    hitting_time,
    scan_path,
)
from .localtime import (
    LocalTimeLedger,
    SequencingError,
    StepCapExceeded,
    TotalLocalTimeSample,
    escape_distance,
    favorite_set,
    max_local_time_ratio,
    sample_total_local_time,
)
from .thick import (
    ThickPointConfig,
    count_thick_pairs,
    count_thick_pairs_naive,
    predicate_D,
    predicate_E,
)
from .walk import (
    CapacityError,
    DerivedConstants,
    ParameterError,
    ReplayExhausted,
    ReplayStream,
    StepStream,
    WalkParams,
    derive_constants,
    positions_from_steps,
    run_path,
)

__version__ = "0.1.0"
