"""Monocular 3D object detection in fisheye images through cylindrical virtual space."""

from fisheye3d.box3d import Box2D, Box3D, VirtualDetection, detection_to_box, project_box
from fisheye3d.camera_models import (
    CameraIntrinsics,
    CameraModel,
    ProjectionKind,
    angular_coords,
    project,
    unproject,
)
from fisheye3d.virtual_transform import (
    InterpretationMode,
    real_to_virtual_cyl,
    real_to_virtual_sph,
    virtual_to_real_cyl,
    virtual_to_real_sph,
)

__version__ = "0.1.0"

__all__ = [
    "Box2D",
    "Box3D",
    "CameraIntrinsics",
    "CameraModel",
    "InterpretationMode",
    "ProjectionKind",
    "VirtualDetection",
    "angular_coords",
    "detection_to_box",
    "project",
    "project_box",
    "real_to_virtual_cyl",
    "real_to_virtual_sph",
    "unproject",
    "virtual_to_real_cyl",
    "virtual_to_real_sph",
]
