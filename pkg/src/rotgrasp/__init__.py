"""Rotated-box grasp planning for tabletop scenes mixing rigid objects and towels."""

from .cloud import CameraModel, PointCloud, PrincipalFrame, count_in, crop, lift_box, pca, subtract
from .detect import (
    Anchor,
    Detection,
    RawPredictionGrid,
    decode_cell,
    decode_grid,
    make_gbd,
    nms_ariou,
)
from .planner import (
    GraspPose,
    GripperModel,
    PlanResult,
    PushPlan,
    collision_free,
    extract_wrinkles,
    finger_volumes,
    plan_push,
    plan_rigid,
    plan_scene,
    towel_feasible,
    towel_grasp,
)
from .rotgeom import (
    ConvexPolygon2D,
    OrientedBox3D,
    RotatedBox2D,
    ariou,
    contains2d,
    contains3d,
    corners,
    expand,
    intersection_area,
    iou,
)

__version__ = "0.1.0"
