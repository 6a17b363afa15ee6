"""Camera models, pinhole projection, and skeleton topology definitions.

All 3D poses are (N, 3) float arrays in meters; 2D poses are (N, 2) arrays
in pixels.  World-to-camera transforms follow the usual computer-vision
convention: x right, y down, z forward (into the scene).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, NonPositiveDepth, ShapeMismatch

MIN_DEPTH = 1e-9  # meters; joints closer than this to the camera plane are rejected


class Frame(Enum):
    WORLD = "world"
    CAMERA = "camera"


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics plus a world-to-camera rigid transform.

    Attributes:
        fx, fy: Focal lengths in pixels (> 0).
        cx, cy: Principal point in pixels.
        rotation: 3x3 orthonormal world-to-camera rotation.
        translation: 3-vector, meters; p_cam = R @ p_world + t.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if R.shape != (3, 3):
            raise ConfigError(f"rotation must be 3x3, got {R.shape}")
        if t.shape != (3,):
            raise ConfigError(f"translation must be a 3-vector, got {t.shape}")
        if not np.all(np.abs(R.T @ R - np.eye(3)) < 1e-9):
            raise ConfigError("rotation is not orthonormal within 1e-9")
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) world-frame points into the camera frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint layout plus the body segments used as occluders.

    Attributes:
        name: Preset or file identifier.
        joint_names: N joint names; defines joint order everywhere.
        parent: Parent index per joint; the root has parent -1.
        root_index: Pelvis index used for root-centering.
        head_segment: (top, bottom) joint indices of the head.
        limb_segments: (a, b, width_scale) per limb bone; width_scale
            multiplies the base box half-width (1.0 = standard limb).
        torso_quad: Four joint indices spanning hips and shoulders.
    """

    name: str
    joint_names: tuple[str, ...]
    parent: tuple[int, ...]
    root_index: int
    head_segment: tuple[int, int]
    limb_segments: tuple[tuple[int, int, float], ...]
    torso_quad: tuple[int, int, int, int]

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    def __post_init__(self) -> None:
        n = self.joint_count
        if len(self.parent) != n:
            raise ConfigError(f"parent list length {len(self.parent)} != joint count {n}")
        if not 0 <= self.root_index < n:
            raise ConfigError(f"root_index {self.root_index} out of range")
        if self.parent[self.root_index] != -1:
            raise ConfigError("root joint must have parent -1")
        for j, p in enumerate(self.parent):
            if j == self.root_index:
                continue
            if not 0 <= p < n:
                raise ConfigError(f"joint {j} has invalid parent {p}")
        self._check_tree()
        for idx in (*self.head_segment, *self.torso_quad):
            if not 0 <= idx < n:
                raise ConfigError(f"segment joint index {idx} out of range")
        for a, b, w in self.limb_segments:
            if not (0 <= a < n and 0 <= b < n):
                raise ConfigError(f"limb segment ({a}, {b}) out of range")
            if w <= 0:
                raise ConfigError(f"limb segment ({a}, {b}) has non-positive width scale {w}")

    def _check_tree(self) -> None:
        # every joint must reach the root without cycles
        n = self.joint_count
        for j in range(n):
            seen = set()
            cur = j
            while cur != self.root_index:
                if cur in seen:
                    raise ConfigError(f"parent links contain a cycle through joint {j}")
                seen.add(cur)
                cur = self.parent[cur]

    def bones(self) -> list[tuple[int, int]]:
        """(child, parent) pairs for every non-root joint."""
        return [(j, p) for j, p in enumerate(self.parent) if p != -1]


# Human3.6M-style 17-joint layout.  Joints 9/10 are the bottom/top of the
# head; 1, 4, 11, 14 (the hips and shoulders) span the torso box.
_H36M17 = SkeletonTopology(
    name="h36m17",
    joint_names=(
        "pelvis", "r_hip", "r_knee", "r_ankle",
        "l_hip", "l_knee", "l_ankle",
        "spine", "thorax", "neck", "head_top",
        "l_shoulder", "l_elbow", "l_wrist",
        "r_shoulder", "r_elbow", "r_wrist",
    ),
    parent=(-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15),
    root_index=0,
    head_segment=(10, 9),
    limb_segments=(
        (1, 2, 1.0), (2, 3, 1.0), (4, 5, 1.0), (5, 6, 1.0),
        (11, 12, 1.0), (12, 13, 1.0), (14, 15, 1.0), (15, 16, 1.0),
    ),
    torso_quad=(1, 4, 11, 14),
)

# HumanEva-style 15-joint layout.
_HUMANEVA15 = SkeletonTopology(
    name="humaneva15",
    joint_names=(
        "pelvis", "thorax",
        "l_shoulder", "l_elbow", "l_wrist",
        "r_shoulder", "r_elbow", "r_wrist",
        "l_hip", "l_knee", "l_ankle",
        "r_hip", "r_knee", "r_ankle",
        "head",
    ),
    parent=(-1, 0, 1, 2, 3, 1, 5, 6, 0, 8, 9, 0, 11, 12, 1),
    root_index=0,
    head_segment=(14, 1),
    limb_segments=(
        (2, 3, 1.0), (3, 4, 1.0), (5, 6, 1.0), (6, 7, 1.0),
        (8, 9, 1.0), (9, 10, 1.0), (11, 12, 1.0), (12, 13, 1.0),
    ),
    torso_quad=(8, 11, 5, 2),
)

_PRESETS = {"h36m17": _H36M17, "humaneva15": _HUMANEVA15}


def topology_presets() -> tuple[str, ...]:
    return tuple(sorted(_PRESETS))


def load_topology(name_or_path: str) -> SkeletonTopology:
    """Resolve a topology by preset name or JSON config file path.

    The file format mirrors the SkeletonTopology fields:
    ``{"name": ..., "joint_names": [...], "parent": [...], "root_index": ...,
    "head_segment": [a, b], "limb_segments": [[a, b, w], ...],
    "torso_quad": [a, b, c, d]}``
    """
    if name_or_path in _PRESETS:
        return _PRESETS[name_or_path]
    try:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(
            f"unknown topology '{name_or_path}' (presets: {', '.join(topology_presets())})"
        ) from exc
    try:
        return SkeletonTopology(
            name=raw.get("name", name_or_path),
            joint_names=tuple(raw["joint_names"]),
            parent=tuple(int(p) for p in raw["parent"]),
            root_index=int(raw["root_index"]),
            head_segment=tuple(raw["head_segment"]),
            limb_segments=tuple((int(a), int(b), float(w)) for a, b, w in raw["limb_segments"]),
            torso_quad=tuple(raw["torso_quad"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid topology file '{name_or_path}': {exc}") from exc


def project(pose: np.ndarray, cam: CameraModel, frame: Frame = Frame.CAMERA) -> np.ndarray:
    """Project an (N, 3) pose to (N, 2) image coordinates.

    Args:
        pose: Joint positions; world or camera frame per ``frame``.
        cam: Camera intrinsics/extrinsics.
        frame: Which frame ``pose`` is expressed in.

    Returns:
        (N, 2) pixel coordinates (u, v) = (fx*x/z + cx, fy*y/z + cy).

    Raises:
        NonPositiveDepth: If any joint has z <= 1e-9 m in the camera frame.
    """
    pts = np.asarray(pose, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeMismatch("pose must be (N, 3)", pts.shape)
    if frame is Frame.WORLD:
        pts = cam.world_to_camera(pts)
    z = pts[:, 2]
    bad = np.nonzero(z <= MIN_DEPTH)[0]
    if bad.size:
        raise NonPositiveDepth(int(bad[0]), float(z[bad[0]]))
    u = cam.fx * pts[:, 0] / z + cam.cx
    v = cam.fy * pts[:, 1] / z + cam.cy
    return np.stack([u, v], axis=1)


def root_center(pose: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Subtract the root joint from every joint; the root becomes (0, 0, 0)."""
    pts = np.asarray(pose, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] != topo.joint_count:
        raise ShapeMismatch(
            f"pose must be ({topo.joint_count}, 3) for topology '{topo.name}'", pts.shape
        )
    return pts - pts[topo.root_index]
