"""Reserved-slot boxes in the world frame and their projection onto the
driver HMI image plane through an extrinsic/intrinsic camera model.

Camera convention: x right, y down, z forward (optical axis); the world
frame is x/y ground plane with z up. Slots are drawn on the flat road
surface (z = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, Crossed
from .world_model import PathPlan

RESERVED_RED = "reserved_red"
AVAILABLE_GREEN = "available_green"


@dataclass(frozen=True)
class SlotBox:
    """A slot rectangle on the road, placed on the ego lane.

    dist_to_conflict is measured backward from the conflict point along
    the ego path; lateral is the box center's offset within the lane.
    """

    dist_to_conflict: float
    lateral: float
    length: float
    width: float
    status: str = RESERVED_RED

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("slot box must have positive size")


@dataclass(frozen=True)
class CameraModel:
    rotation: np.ndarray  # 3x3, world -> camera
    translation: np.ndarray  # 3-vector
    focal: float  # m
    pixel_w: float  # physical pixel width, m
    pixel_h: float  # physical pixel height, m
    cx: float  # principal point, pixels
    cy: float

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-12):
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be proper (det +1)")
        if self.focal <= 0 or self.pixel_w <= 0 or self.pixel_h <= 0:
            raise ValueError("intrinsics must be positive")


@dataclass(frozen=True)
class ImageQuad:
    corners: tuple[tuple[float, float], ...]  # 4 (u, v) pixel pairs
    visible: bool
    status: str = RESERVED_RED


def adjust_slot(
    target_est_dist: float,
    ego_v: float,
    ego_lateral: float,
    ego_dist_to_conflict: float,
    target_length: float,
    target_width: float,
    time_gap: float,
    redundancy: float = 2.0,
) -> SlotBox:
    """Size and place the reserved slot of one target vehicle.

    The box sits at the target's estimated distance before the conflict
    point, in the ego lane, stretched by the speed-dependent clearance
    margin. Raises Crossed once the ego has passed the conflict point.
    """
    if ego_dist_to_conflict < 0.0:
        raise Crossed("ego already crossed the conflict point; slot reset")
    return SlotBox(
        dist_to_conflict=target_est_dist,
        lateral=ego_lateral,
        length=target_length + redundancy * ego_v * time_gap,
        width=target_width,
        status=RESERVED_RED,
    )


def world_to_camera(p_w, cam: CameraModel) -> np.ndarray:
    """Extrinsic transform of a world point into the camera frame."""
    p = np.asarray(p_w, dtype=float)
    return cam.rotation @ p + cam.translation


def camera_to_image(p_a, cam: CameraModel) -> tuple[float, float]:
    """Forward pinhole projection of a camera-frame point to pixels.

    Raises BehindCamera for non-positive depth; the caller culls the quad.
    """
    x, y, z = float(p_a[0]), float(p_a[1]), float(p_a[2])
    if z <= 0.0:
        raise BehindCamera(f"depth {z:.3f} <= 0")
    u = cam.focal * x / (cam.pixel_w * z) + cam.cx
    v = cam.focal * y / (cam.pixel_h * z) + cam.cy
    return u, v


def back_projection_matrix(cam: CameraModel, z: float) -> np.ndarray:
    """The image->camera matrix at known depth z: applying it to
    (u, v, 1) recovers the camera-frame point exactly."""
    f = cam.focal
    return np.array(
        [
            [z * cam.pixel_w / f, 0.0, -z * cam.pixel_w * cam.cx / f],
            [0.0, z * cam.pixel_h / f, -z * cam.pixel_h * cam.cy / f],
            [0.0, 0.0, z],
        ]
    )


def slot_world_corners(box: SlotBox, plan: PathPlan, conflict_s: float) -> np.ndarray:
    """Ground-plane corners (4x3) of a slot box on the plan's lane."""
    center_s = conflict_s - box.dist_to_conflict
    poly = plan.polyline
    corners = []
    for ds in (-box.length / 2.0, box.length / 2.0):
        s = center_s + ds
        px, py = poly.point_at(s)
        heading = poly.heading_at(s)
        nx, ny = -math.sin(heading), math.cos(heading)  # left normal
        base = box.lateral
        for dl in (-box.width / 2.0, box.width / 2.0):
            corners.append((px + (base + dl) * nx, py + (base + dl) * ny, 0.0))
    # order: rear-right, rear-left, front-left, front-right
    corners[2], corners[3] = corners[3], corners[2]
    return np.array(corners)


def project_slot(
    box: SlotBox,
    plan: PathPlan,
    conflict_s: float,
    cam: CameraModel,
) -> ImageQuad:
    """Project the slot's four ground corners onto the image plane.

    Quads with any corner behind the camera come back invisible.
    """
    world = slot_world_corners(box, plan, conflict_s)
    pix = []
    for corner in world:
        p_a = world_to_camera(corner, cam)
        if p_a[2] <= 0.0:
            return ImageQuad(corners=((0.0, 0.0),) * 4, visible=False, status=box.status)
        pix.append(camera_to_image(p_a, cam))
    return ImageQuad(corners=tuple(pix), visible=True, status=box.status)


def pose_camera(
    position: tuple[float, float, float],
    heading: float,
    pitch: float,
    focal: float,
    pixel_w: float,
    pixel_h: float,
    cx: float,
    cy: float,
) -> CameraModel:
    """Camera at a world position looking along heading, pitched down.

    heading is the yaw of the optical axis in the ground plane (radians);
    pitch > 0 tilts the axis toward the road.
    """
    ch, sh = math.cos(heading), math.sin(heading)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([ch * cp, sh * cp, -sp])
    right = np.array([sh, -ch, 0.0])
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    translation = -rotation @ np.asarray(position, dtype=float)
    return CameraModel(
        rotation=rotation,
        translation=translation,
        focal=focal,
        pixel_w=pixel_w,
        pixel_h=pixel_h,
        cx=cx,
        cy=cy,
    )
