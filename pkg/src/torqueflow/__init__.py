"""torqueflow: a desk-scale digital twin of a guided bolt-tightening bench.

A simulated connected torque wrench behind a line-framed JSON protocol, a
pose-validated sequence-enforcing session orchestrator with automatic
traceability reports, scripted operators for headless studies, and the
metrics stack that scores them.
"""

from .geometry import IDENTITY, Pose, compose, invert
from .metrics import (
    ErrorFlags,
    MethodSummary,
    QuestionnaireResponse,
    aggregate_study,
    classify_errors,
    invert_tlx,
    radar,
    score_sus,
    score_tlx,
)
from .operator import (
    PAPER_RATE_PROFILE,
    PERFECT_PROFILE,
    OperatorProfile,
    draw_fault_plan,
)
from .protocol import MsgType, ProtocolError, WrenchMessage, decode, encode
from .report import read_report, write_report
from .scene import (
    BoltSite,
    Part,
    Scenario,
    ScenarioStep,
    Scene,
    SceneError,
    ToolModel,
    build_bench_scene,
    load_scene,
    make_flange,
    make_grid,
    save_scene,
)
from .session import (
    EventKind,
    Method,
    ReportRow,
    Session,
    SessionEvent,
    StepPhase,
    TighteningReport,
    guidance_stream,
    read_event_log,
    write_event_log,
)
from .simulate import (
    drive,
    run_ar_session,
    run_conventional_session,
    run_session,
    write_session_artifacts,
)
from .tracking import (
    EngagementState,
    TrackingConfig,
    TrackingSimulator,
    classify_engagement,
    tip_position,
)
from .wrench import (
    LoopbackLink,
    RampConfig,
    SimulatedWrench,
    WrenchMode,
    WrenchState,
    led_state,
)

__version__ = "0.1.0"
