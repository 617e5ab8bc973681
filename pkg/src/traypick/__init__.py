"""traypick: desk-scale bin-picking simulator and grasp planner.

Pipeline: procedural cluttered tray scenes (scenegen) -> depth and instance
masks with optional corruption (perception) -> ellipse-fit grasp candidates
with median-height filtering (planner) -> fixed/adaptive finger execution
(graspsim) -> seeded campaigns and comparisons (experiment).
"""

from .archetypes import DEFAULT_ARCHETYPES, FoodArchetype, Hardness
from .errors import FitError, ParameterError, PlacementError
from .experiment import (
    ExperimentConfig,
    SummaryStats,
    TrialRecord,
    compare_conditions,
    run_experiment,
    run_trial,
)
from .graspsim import (
    Classification,
    ExecutionParams,
    FingerKind,
    FingerModel,
    GraspOutcome,
    close_and_lift,
    execute_grasp,
    insert_fingers,
)
from .perception import (
    AgreementScore,
    CorruptionParams,
    DepthImage,
    InstanceMaskSet,
    agreement,
    corrupt_masks,
    mask_iou,
    render_depth,
    render_masks,
)
from .planner import (
    EllipseFit,
    FingerGeometry,
    GraspCandidate,
    Plan,
    contact_regions,
    derive_grasp,
    filter_grasps,
    fit_ellipse,
    plan,
    select_grasp,
)
from .scenegen import (
    PieceInstance,
    PieceStamp,
    SceneConfig,
    TrayScene,
    drop_piece,
    generate_scene,
    load_scene,
    make_stamp,
    save_scene,
)

__version__ = "0.1.0"
