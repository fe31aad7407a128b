"""2D semantic-landmark SLAM for mapping individual trees in orchard rows.

The package fuses noisy odometry, intermittent GPS, and per-frame trunk
detections: detections are localized and de-duplicated (perception),
matched to persistent tree identities through a staged association
cascade (tracking), and fused in an incrementally optimized factor graph
(factor_graph). A simulator generates reproducible orchard scenarios,
and the evaluation module scores maps against ground truth and provides
a clustering baseline for comparison.
"""

from .geometry import (
    DegenerateGeometryError,
    Point2,
    Pose2,
    Pose2Delta,
    normalize_angle,
    pose_between,
    pose_compose,
    project_range_bearing,
    range_bearing,
)
from .clustering import NOISE, dbscan
from .assignment import hungarian
from .perception import (
    Detection,
    DegenerateCloudError,
    SensorExtrinsics,
    TrunkEstimate,
    TrunkPointCloud,
    cloud_centroid,
    estimate_trunk_center,
    filter_detections,
    project_to_ground,
    range_bearing_from_cloud,
)
from .tracking import (
    AssociationResult,
    BoxKalman,
    Stage,
    Track,
    TrackerConfig,
    TrunkTracker,
    associate_cascade,
    associate_global,
    associate_stage1,
    iou,
    predict_bbox,
)
from .factor_graph import (
    Factor,
    FactorGraph,
    FactorKind,
    Key,
    NumericalFailureError,
    SolveMode,
    SolveReport,
    VarKind,
    factor_jacobian,
    factor_residual,
    landmark_key,
    pose_key,
)

__version__ = "0.1.0"
