"""First visits to shrinking targets under circle and torus dynamics.

The package builds open dynamical systems at desk scale: concrete compact
metric spaces with invertible dynamics, finite truncations of stratified
center sequences, radius schedules with certified tail offsets, and
orbit sweeps that classify sample points by which shrinking ball their
trajectory enters first at each scale.
"""

from .errors import (
    ConfigurationError,
    ConstructionError,
    FirstVisitError,
    ResolutionError,
    ScheduleRangeError,
    UsageError,
)
from .space import (
    CIRCLE,
    DEFAULT_ROTATION_ANGLE,
    TORUS,
    Ball,
    CirclePoint,
    RotationMap,
    ToralAutomorphismMap,
    TorusPoint,
    apply_map,
    backward_density_score,
    distance,
    epsilon_net,
    hausdorff_distance,
    iterate,
    wrap,
)
from .anchors import AnchorFilters, AnchorSource
from .derived import (
    CenterPoint,
    ClusterEnvelope,
    SequencePair,
    StratifiedCenters,
    cb_stratify,
    centers_from_table,
    centers_to_table,
    construct_cluster_sequence,
    construct_rank_sequence,
    derived_set_approx,
    flat_centers,
    orbit_disjointness_check,
    sup_metric_distance,
)
from .targets import (
    COUNTABLE,
    NOWHERE_DENSE,
    SOMEWHERE_DENSE,
    ConstraintRecord,
    ExplicitSchedule,
    GeometricSchedule,
    HarmonicSchedule,
    SeparationCertificate,
    TargetFamily,
    build_family_somewhere_dense,
    certificate_to_csv,
    family_from_table,
    family_to_table,
    select_tails_countable,
    select_tails_nowhere_dense,
    verify_certificate,
)
from .visits import (
    BoundaryWitnessResult,
    ClassificationReport,
    HitOutcome,
    OpenWitnessResult,
    ScaleRow,
    WinnerTrace,
    WitnessParams,
    boundary_witness_search,
    classify_trace,
    collapse_diagnostic,
    first_capture,
    hit_time,
    open_witness_search,
    winner_at_scale,
    winner_trace,
    winner_trace_batch,
)
from .harness import (
    CantorEmbedding,
    DenseInterval,
    ExplicitFile,
    IsolatedFinite,
    RankCluster,
    RunResult,
    ScenarioSpec,
    build_family,
    generate_centers,
    load_outputs,
    parse_config,
    parse_config_text,
    run_scenario,
    scenario_hash,
    summarize,
    write_outputs,
)

__all__ = [name for name in dir() if not name.startswith("_")]
