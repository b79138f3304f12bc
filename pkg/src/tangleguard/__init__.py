"""Topology-aware entanglement monitoring and control for multi-arm simulations."""

from .geometry import (
    ArmState,
    Obstacle,
    Polyline,
    Workspace,
    arc_length,
    curvature_profile,
    min_obstacle_clearance,
    torsion_profile,
)
from .safety import (
    RiskCoeffs,
    ScreeningOutcome,
    adaptive_discount,
    concurrency_budget,
    risk_score,
    screen_action,
)
from .topology import (
    CrossingEvent,
    CrossingSign,
    EntanglementDetector,
    TopoState,
    close_polyline,
    detect_crossings,
    linking_matrix,
    linking_number,
    topo_state,
    writhe,
)
from .braid import (
    BraidFault,
    BraidWord,
    RewriteTrace,
    append_crossings,
    confluence_oracle,
    format_word,
    inversion_count,
    parse_word,
    simplify,
)
from .env import (
    EpisodeAbort,
    MultiArmEnv,
    ScenarioConfig,
    TopScheduler,
    make_scenario,
)
from .harness import (
    MetricsReport,
    RunConfig,
    average_reports,
    metrics_from_records,
    run,
)

__version__ = "0.1.0"
