"""Real-time lab-protocol conformance and guidance engine."""

from .alignment import (
    OFF,
    AlignmentConfig,
    AlignmentState,
    AlignmentUpdate,
    Interval,
    StepSegmentation,
    brute_force_align,
    init_alignment,
)
from .evalmetrics import (
    ErrorEvent,
    GoldAnnotation,
    ScoreReport,
    SegmentLabel,
    load_gold,
    match_segments,
    rubric_score,
    score_errors,
    score_session,
)
from .gateway import (
    EVENT_VOCABULARY,
    MeasuredParameter,
    Observation,
    SegmentDescriptor,
    SegmentGate,
    TraceBackend,
    TraceFile,
    expected_frame_count,
    load_trace,
    oracle_observe,
)
from .monitor import Deviation, DeviationMonitor, MonitorConfig
from .protocol import (
    ParameterSpec,
    Protocol,
    Step,
    ValidationReport,
    parse_protocol,
    protocol_hash,
    serialize_protocol,
    validate_protocol,
)
from .session import (
    Envelope,
    Session,
    SessionLog,
    SessionService,
    export_stepwise_protocol,
    replay_session,
    verify_replay,
)

__version__ = "0.1.0"
