"""Motion sequences: synthetic walking generation, the POSEQ1 JSON-lines
file format, and train/validation splitting.

A POSEQ1 file holds one or more sequences.  Each sequence starts with a
header line::

    {"format": "POSEQ1", "topology": "humaneva15", "fps": 50.0,
     "subject": "S1", "action": "Walk", "camera_id": "C0",
     "camera": {"fx":..., "fy":..., "cx":..., "cy":...,
                "R": [9 floats row-major], "t": [3 floats]}}

followed by one line per frame::

    {"t": 0, "joints3d": [[x, y, z], ...]}          (meters, world frame)

with optional "joints2d" ([N][2] pixels) and "occ" ([N] ints) fields.
Frames with any non-finite 3D coordinate are discarded on load, and a
sequence is split into sub-sequences at every gap so temporal windows
never straddle a discarded frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ParseError, TopologyMismatch
from .geometry import CameraModel, SkeletonTopology, load_topology

POSEQ1_FORMAT = "POSEQ1"


@dataclass(frozen=True)
class MotionSequence:
    """An ordered block of world-frame 3D poses with capture metadata.

    Attributes:
        frames: (F, N, 3) world-frame joints, meters.
        joints2d: Optional (F, N, 2) pixel coordinates (e.g. after `label`).
        occlusions: Optional (F, N) binary labels.
    """

    frames: np.ndarray
    fps: float
    subject: str
    action: str
    camera_id: str
    camera: CameraModel
    topology: SkeletonTopology
    joints2d: np.ndarray | None = None
    occlusions: np.ndarray | None = None

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        n = self.topology.joint_count
        if frames.ndim != 3 or frames.shape[1] != n or frames.shape[2] != 3:
            raise TopologyMismatch(
                f"frames shape {frames.shape} does not match topology "
                f"'{self.topology.name}' ({n} joints)"
            )
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class GaitParams:
    stride_m: float = 0.65
    cadence_hz: float = 1.4
    arm_swing_rad: float = 0.6
    hip_sway_m: float = 0.03

    def __post_init__(self) -> None:
        for name in ("stride_m", "cadence_hz", "arm_swing_rad", "hip_sway_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"gait parameter {name} must be positive")


@dataclass(frozen=True)
class OrbitParams:
    """Relative camera/walker geometry: camera distance and height from the
    path center, and the minimum relative sweep rate (rad/s)."""

    radius_m: float = 3.5
    height_m: float = 1.4
    angular_speed: float = 0.7

    def __post_init__(self) -> None:
        for name in ("radius_m", "height_m", "angular_speed"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"orbit parameter {name} must be positive")


@dataclass(frozen=True)
class SynthConfig:
    """Settings for the synthetic walking generator."""

    seed: int = 0
    n_frames: int = 2000
    fps: float = 50.0
    gait: GaitParams = field(default_factory=GaitParams)
    orbit: OrbitParams = field(default_factory=OrbitParams)
    topology: str = "humaneva15"

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")


# Fixed body proportions (meters).  All joints hang off the pelvis/thorax
# by rotations and constant offsets, so bone lengths never drift.  The hip
# joints sit slightly above the pelvis root and the shoulder joints
# slightly below the thorax landmark, so the trunk keypoints fall just
# outside the hips/shoulders torso box and occlusion-free frames exist.
_BODY = {
    "pelvis_height": 0.95,
    "hip_halfwidth": 0.11,
    "hip_rise": 0.03,
    "shoulder_halfwidth": 0.18,
    "shoulder_drop": 0.04,
    "torso_len": 0.50,
    "thigh_len": 0.42,
    "shin_len": 0.43,
    "upper_arm_len": 0.30,
    "forearm_len": 0.27,
    "neck_len": 0.10,
    "head_len": 0.26,
}

_SYNTH_INTRINSICS = dict(fx=1000.0, fy=1000.0, cx=500.0, cy=500.0)


def synth_walk(
    cfg: SynthConfig,
    subject: str = "S1",
    action: str = "Walk",
    camera_id: str = "C0",
) -> MotionSequence:
    """Generate a deterministic kinematic walking sequence.

    The pelvis advances at stride * cadence with lateral sway; legs and
    arms swing as phase-offset sinusoids about fixed bone lengths.  The
    walker follows a circular path in front of a static camera, which
    gives the same relative viewpoint sweep as a camera orbiting a
    straight-line walker while staying representable by the one static
    camera a sequence file can record.  The sweep guarantees both side-on
    phases (limbs overlapping the torso in projection) and frontal,
    occlusion-free phases.  Identical configs produce bit-identical
    sequences.
    """
    topo = load_topology(cfg.topology)
    rng = np.random.default_rng(cfg.seed)
    gait_phase0 = rng.uniform(0.0, 2.0 * math.pi)
    path_phase0 = rng.uniform(0.0, 2.0 * math.pi)

    speed = cfg.gait.stride_m * cfg.gait.cadence_hz
    # keep the walker inside a comfortable viewing band of the camera;
    # the relative sweep rate rises above angular_speed if the cap binds
    path_radius = min(speed / cfg.orbit.angular_speed, 0.42 * cfg.orbit.radius_m)
    omega = speed / path_radius

    times = np.arange(cfg.n_frames) / cfg.fps
    frames = np.empty((cfg.n_frames, topo.joint_count, 3))
    for k, t in enumerate(times):
        frames[k] = _walk_pose(t, cfg.gait, gait_phase0, path_radius, omega, path_phase0, topo)

    camera = _look_at_camera(
        position=np.array([cfg.orbit.radius_m, 0.0, cfg.orbit.height_m]),
        target=np.array([0.0, 0.0, _BODY["pelvis_height"]]),
    )
    return MotionSequence(
        frames=frames,
        fps=cfg.fps,
        subject=subject,
        action=action,
        camera_id=camera_id,
        camera=camera,
        topology=topo,
    )


def _walk_pose(
    t: float,
    gait: GaitParams,
    phase0: float,
    path_radius: float,
    omega: float,
    path_phase0: float,
    topo: SkeletonTopology,
) -> np.ndarray:
    b = _BODY
    phase = 2.0 * math.pi * gait.cadence_hz * t + phase0

    # circular path: pelvis moves at stride*cadence along the circle,
    # heading along the tangent
    theta = omega * t + path_phase0
    path_point = np.array([path_radius * math.cos(theta), path_radius * math.sin(theta), 0.0])
    yaw = theta + 0.5 * math.pi  # tangent heading for counter-clockwise travel
    cy, sy = math.cos(yaw), math.sin(yaw)
    heading = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])

    def local(v) -> np.ndarray:
        return heading @ np.asarray(v)

    pelvis = path_point + local([0.0, gait.hip_sway_m * math.sin(phase), 0.0])
    pelvis = pelvis + np.array([0.0, 0.0, b["pelvis_height"] + 0.02 * math.cos(2.0 * phase)])
    thorax = pelvis + np.array([0.0, 0.0, b["torso_len"]])

    leg_amp = min(0.9, gait.stride_m / (2.0 * (b["thigh_len"] + b["shin_len"])))
    pose: dict[str, np.ndarray] = {"pelvis": pelvis, "thorax": thorax}

    for side, sign, leg_ph in (("l", 1.0, math.pi), ("r", -1.0, 0.0)):
        hip = pelvis + local([0.0, sign * b["hip_halfwidth"], b["hip_rise"]])
        swing = leg_amp * math.sin(phase + leg_ph)
        knee_bend = 0.5 * leg_amp * max(0.0, math.sin(phase + leg_ph + 0.5 * math.pi))
        knee = hip + b["thigh_len"] * local(_sagittal(swing))
        ankle = knee + b["shin_len"] * local(_sagittal(swing - knee_bend))
        pose[f"{side}_hip"] = hip
        pose[f"{side}_knee"] = knee
        pose[f"{side}_ankle"] = ankle

        shoulder = thorax + local([0.0, sign * b["shoulder_halfwidth"], -b["shoulder_drop"]])
        arm = gait.arm_swing_rad * math.sin(phase + leg_ph + math.pi)
        elbow = shoulder + b["upper_arm_len"] * local(_sagittal(arm))
        wrist = elbow + b["forearm_len"] * local(_sagittal(arm + 0.35))
        pose[f"{side}_shoulder"] = shoulder
        pose[f"{side}_elbow"] = elbow
        pose[f"{side}_wrist"] = wrist

    pose["neck"] = thorax + np.array([0.0, 0.0, b["neck_len"]])
    pose["head"] = thorax + np.array([0.0, 0.0, b["head_len"]])
    pose["head_top"] = thorax + np.array([0.0, 0.0, b["neck_len"] + b["head_len"]])
    pose["spine"] = pelvis + 0.5 * (thorax - pelvis)

    return np.stack([pose[name] for name in topo.joint_names])


def _sagittal(angle: float) -> np.ndarray:
    """Unit vector hanging downward, pitched by `angle` in the x-z plane."""
    return np.array([math.sin(angle), 0.0, -math.cos(angle)])


def _look_at_camera(position: np.ndarray, target: np.ndarray) -> CameraModel:
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(forward @ up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    translation = -rotation @ position
    return CameraModel(rotation=rotation, translation=translation, **_SYNTH_INTRINSICS)


def synth_dataset(cfg: SynthConfig, n_sequences: int) -> list[MotionSequence]:
    """Generate several sequences with derived seeds and varied metadata.

    Sequence i uses seed cfg.seed + i, subject S{1..4} cycling, and
    alternates Walk/Jog gaits (Jog = faster cadence and stride).  This
    gives the sequence-granular train/val split something to split.
    """
    if n_sequences < 1:
        raise ConfigError(f"n_sequences must be >= 1, got {n_sequences}")
    sequences = []
    for i in range(n_sequences):
        jog = i % 2 == 1
        gait = replace(
            cfg.gait,
            stride_m=cfg.gait.stride_m * (1.25 if jog else 1.0),
            cadence_hz=cfg.gait.cadence_hz * (1.6 if jog else 1.0),
            arm_swing_rad=cfg.gait.arm_swing_rad * (1.2 if jog else 1.0),
        )
        seq_cfg = replace(cfg, seed=cfg.seed + i, gait=gait)
        sequences.append(
            synth_walk(
                seq_cfg,
                subject=f"S{i % 4 + 1}",
                action="Jog" if jog else "Walk",
                camera_id=f"C{i % 3}",
            )
        )
    return sequences


# ---------------------------------------------------------------------------
# POSEQ1 I/O


def save_sequences(path: str, sequences: list[MotionSequence]) -> None:
    """Write sequences as POSEQ1 JSON lines (floats round-trip exactly)."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            cam = seq.camera
            header = {
                "format": POSEQ1_FORMAT,
                "topology": seq.topology.name,
                "fps": seq.fps,
                "subject": seq.subject,
                "action": seq.action,
                "camera_id": seq.camera_id,
                "camera": {
                    "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                    "R": [float(v) for v in cam.rotation.reshape(-1)],
                    "t": [float(v) for v in cam.translation],
                },
            }
            fh.write(json.dumps(header) + "\n")
            for k in range(len(seq)):
                rec = {"t": k, "joints3d": seq.frames[k].tolist()}
                if seq.joints2d is not None:
                    rec["joints2d"] = seq.joints2d[k].tolist()
                if seq.occlusions is not None:
                    rec["occ"] = [int(v) for v in seq.occlusions[k]]
                fh.write(json.dumps(rec) + "\n")


def load_sequences(path: str) -> tuple[list[MotionSequence], int]:
    """Read a POSEQ1 file.

    Frames containing non-finite coordinates are discarded; each discard
    (or a jump in the frame index) splits the surrounding sequence so no
    temporal window can cross the gap.  Frame order is preserved.

    Returns:
        (sequences, discarded_frame_count)
    """
    sequences: list[MotionSequence] = []
    discarded = 0

    header: dict | None = None
    topo: SkeletonTopology | None = None
    chunk: list[dict] = []
    prev_t: int | None = None

    def flush() -> None:
        nonlocal chunk
        if header is not None and chunk:
            sequences.append(_make_sequence(header, topo, chunk))
        chunk = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc}") from exc
            if obj.get("format") == POSEQ1_FORMAT:
                flush()
                header = _validate_header(obj, lineno)
                topo = load_topology(header["topology"])
                prev_t = None
                continue
            if header is None:
                raise ParseError(lineno, "frame record before any POSEQ1 header")
            joints = obj.get("joints3d")
            if joints is None:
                raise ParseError(lineno, "frame record missing 'joints3d'")
            arr = np.asarray(joints, dtype=np.float64)
            if arr.shape != (topo.joint_count, 3):
                raise TopologyMismatch(
                    f"line {lineno}: joints3d shape {arr.shape} does not match "
                    f"topology '{topo.name}'"
                )
            t_idx = obj.get("t")
            if t_idx is None:
                raise ParseError(lineno, "frame record missing 't'")
            if not np.all(np.isfinite(arr)):
                discarded += 1
                flush()
                prev_t = None
                continue
            if prev_t is not None and t_idx != prev_t + 1:
                flush()
            prev_t = int(t_idx)
            chunk.append({"joints3d": arr,
                          "joints2d": obj.get("joints2d"),
                          "occ": obj.get("occ"),
                          "line": lineno})
    flush()
    return sequences, discarded


def _validate_header(obj: dict, lineno: int) -> dict:
    for key in ("topology", "fps", "subject", "action", "camera_id", "camera"):
        if key not in obj:
            raise ParseError(lineno, f"header missing '{key}'")
    cam = obj["camera"]
    for key in ("fx", "fy", "cx", "cy", "R", "t"):
        if key not in cam:
            raise ParseError(lineno, f"camera missing '{key}'")
    if len(cam["R"]) != 9 or len(cam["t"]) != 3:
        raise ParseError(lineno, "camera R must have 9 entries and t 3")
    return obj


def _make_sequence(header: dict, topo: SkeletonTopology, chunk: list[dict]) -> MotionSequence:
    cam = header["camera"]
    camera = CameraModel(
        fx=float(cam["fx"]), fy=float(cam["fy"]),
        cx=float(cam["cx"]), cy=float(cam["cy"]),
        rotation=np.asarray(cam["R"], dtype=np.float64).reshape(3, 3),
        translation=np.asarray(cam["t"], dtype=np.float64),
    )
    frames = np.stack([rec["joints3d"] for rec in chunk])
    joints2d = None
    if all(rec["joints2d"] is not None for rec in chunk):
        joints2d = np.asarray([rec["joints2d"] for rec in chunk], dtype=np.float64)
        if joints2d.shape != (len(chunk), topo.joint_count, 2):
            raise ParseError(chunk[0]["line"], f"joints2d shape {joints2d.shape} invalid")
    occ = None
    if all(rec["occ"] is not None for rec in chunk):
        occ = np.asarray([rec["occ"] for rec in chunk], dtype=np.int64)
        if occ.shape != (len(chunk), topo.joint_count):
            raise ParseError(chunk[0]["line"], f"occ shape {occ.shape} invalid")
    return MotionSequence(
        frames=frames,
        fps=float(header["fps"]),
        subject=str(header["subject"]),
        action=str(header["action"]),
        camera_id=str(header["camera_id"]),
        camera=camera,
        topology=topo,
        joints2d=joints2d,
        occlusions=occ,
    )


def split_train_val(
    sequences: list[MotionSequence],
    fraction: float = 0.5,
    seed: int = 0,
) -> tuple[list[MotionSequence], list[MotionSequence]]:
    """Deterministically split whole sequences into train/validation sets.

    ``fraction`` is the training share.  Sequences are shuffled with the
    seed and assigned whole; a sequence never straddles both sets.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(sequences))
    n_train = int(round(fraction * len(sequences)))
    train_idx = set(order[:n_train].tolist())
    train = [s for i, s in enumerate(sequences) if i in train_idx]
    val = [s for i, s in enumerate(sequences) if i not in train_idx]
    return train, val
