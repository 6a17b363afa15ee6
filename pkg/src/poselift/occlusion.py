"""Occlusion labeling heuristics.

Two labelers produce per-joint binary occlusion vectors (1 = occluded):

* ``cluster_occlusions`` works on camera-frame 3D joints: joints within a
  planar epsilon of each other form a cluster, and only the cluster member
  closest to the camera stays visible.
* ``boxed_man_occlusions`` works purely in 2D: head and limb bones are
  inflated into boxes, the torso is a quadrilateral spanned by hips and
  shoulders, and any joint inside a box it does not belong to is occluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateSegment, ShapeMismatch
from .geometry import SkeletonTopology

DEPTH_TIE_EPS = 1e-12  # z values closer than this are a tie; lowest index wins
HEAD_WIDTH_SCALE = 2.0  # head box is twice as wide as a standard limb box


@dataclass(frozen=True)
class ClusterConfig:
    """Settings for the clustered depth heuristic.

    Attributes:
        epsilon: Planar (x, y) distance below which two joints cluster,
            in the same units as the 3D pose (meters).
        transitive: If True, overlapping neighborhoods are merged into
            connected components before picking one visible joint per
            component.  Default is the per-neighborhood rule.
    """

    epsilon: float = 0.06
    transitive: bool = False

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class BoxedManConfig:
    """Settings for the boxed-man labeler.

    Box half-widths default to a fraction of the pose's mean 2D bone
    length (resolution independent): ``limb_width_frac`` for limbs and
    twice that for the head.  Passing ``delta`` switches to an absolute
    half-width in pose units.  ``per_segment_overrides`` maps an
    (a, b) joint-index pair to an absolute half-width for that segment.
    """

    delta: float | None = None
    limb_width_frac: float = 0.13
    per_segment_overrides: dict[tuple[int, int], float] = field(default_factory=dict)
    include_torso: bool = True

    def __post_init__(self) -> None:
        if self.delta is not None and not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if not self.limb_width_frac > 0:
            raise ConfigError(f"limb_width_frac must be positive, got {self.limb_width_frac}")
        for seg, d in self.per_segment_overrides.items():
            if not d > 0:
                raise ConfigError(f"override for segment {seg} must be positive, got {d}")


@dataclass(frozen=True)
class Quad:
    """A simple quadrilateral in 2D, corners in consistent winding order."""

    corners: np.ndarray  # (4, 2)

    def __post_init__(self) -> None:
        c = np.asarray(self.corners, dtype=np.float64)
        if c.shape != (4, 2):
            raise ShapeMismatch("quad corners must be (4, 2)", c.shape)
        if not np.all(np.isfinite(c)):
            raise ConfigError("quad corners must be finite")
        object.__setattr__(self, "corners", c)

    @property
    def centroid(self) -> np.ndarray:
        return self.corners.mean(axis=0)


def cluster_occlusions(pose3d: np.ndarray, cfg: ClusterConfig = ClusterConfig()) -> np.ndarray:
    """Label occluded joints from camera-frame 3D coordinates.

    For each joint i, the neighborhood S_i holds i plus every joint within
    ``cfg.epsilon`` of it in the (x, y) plane.  Inside each neighborhood
    the joint with minimal depth z stays visible; any joint that is not
    the depth argmin of some neighborhood containing it is occluded.
    Depth ties (within 1e-12) go to the lowest joint index.

    Returns:
        (N,) int array of 0/1 labels, 1 = occluded.
    """
    pts = np.asarray(pose3d, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeMismatch("pose must be (N, 3)", pts.shape)
    n = pts.shape[0]
    planar = pts[:, :2]
    z = pts[:, 2]
    diff = planar[:, None, :] - planar[None, :, :]
    near = np.sqrt((diff ** 2).sum(axis=2)) < cfg.epsilon  # includes the diagonal

    if cfg.transitive:
        groups = _connected_components(near)
    else:
        groups = [np.nonzero(near[i])[0] for i in range(n)]

    occluded = np.zeros(n, dtype=np.int64)
    for members in groups:
        winner = _depth_winner(z, members)
        occluded[members[members != winner]] = 1
    return occluded


def _depth_winner(z: np.ndarray, members: np.ndarray) -> int:
    zmin = z[members].min()
    tied = members[z[members] <= zmin + DEPTH_TIE_EPS]
    return int(tied.min())


def _connected_components(adj: np.ndarray) -> list[np.ndarray]:
    n = adj.shape[0]
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in np.nonzero(adj[i])[0]:
            ri, rj = find(i), find(int(j))
            if ri != rj:
                parent[rj] = ri
    comps: dict[int, list[int]] = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    return [np.asarray(v) for v in comps.values()]


def build_segment_quad(a, b, delta: float) -> Quad:
    """Inflate segment ab into a box of half-width delta.

    The corners are the endpoints offset by +/- delta along the unit
    normal of ab, ordered so the polygon traces the box perimeter.
    Direction-vector arithmetic keeps the construction total for
    vertical and horizontal segments where slope formulas break down.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    length = float(np.hypot(d[0], d[1]))
    if length <= 1e-12:
        raise DegenerateSegment((tuple(a), tuple(b)), length)
    normal = np.array([-d[1], d[0]]) / length
    off = normal * delta
    return Quad(np.array([a - off, a + off, b + off, b - off]))


def quad_from_points(points) -> Quad:
    """Build a simple quadrilateral from four unordered corner points.

    Corners are sorted by angle about their centroid so that raw joint
    orders which would trace a self-intersecting bowtie still produce a
    simple polygon.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (4, 2):
        raise ShapeMismatch("need exactly four 2D points", pts.shape)
    center = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
    return Quad(pts[np.argsort(ang, kind="stable")])


def point_in_quad(p, quad: Quad) -> bool:
    """True iff p lies inside or on the boundary of the quad."""
    return bool(points_in_quad(np.asarray(p, dtype=np.float64)[None, :], quad)[0])


def points_in_quad(points: np.ndarray, quad: Quad) -> np.ndarray:
    """Vectorized containment test; boundary counts as inside.

    Uses the even-odd crossing rule with a half-open vertex convention,
    plus an explicit on-edge check so boundary points are never lost to
    the ray-casting tie rules.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeMismatch("points must be (M, 2)", pts.shape)
    corners = quad.corners
    nxt = np.roll(corners, -1, axis=0)

    inside = np.zeros(pts.shape[0], dtype=bool)
    on_edge = np.zeros(pts.shape[0], dtype=bool)
    scale = max(1.0, float(np.abs(corners).max()))
    edge_tol = 1e-12 * scale

    for (x1, y1), (x2, y2) in zip(corners, nxt):
        ex, ey = x2 - x1, y2 - y1
        px = pts[:, 0] - x1
        py = pts[:, 1] - y1
        cross = ex * py - ey * px
        seg_len2 = ex * ex + ey * ey
        if seg_len2 > 0:
            t = (px * ex + py * ey) / seg_len2
            dist = np.abs(cross) / np.sqrt(seg_len2)
            on_edge |= (dist <= edge_tol) & (t >= -1e-12) & (t <= 1 + 1e-12)
        # half-open rule: count the edge when y1 <= py < y2 (or mirrored)
        crosses = ((y1 <= pts[:, 1]) & (pts[:, 1] < y2)) | ((y2 <= pts[:, 1]) & (pts[:, 1] < y1))
        if not np.any(crosses):
            continue
        x_hit = x1 + (pts[:, 1] - y1) * ex / ey  # ey != 0 whenever crosses holds
        inside[crosses] ^= pts[crosses, 0] < x_hit[crosses]

    return inside | on_edge


def occluder_quads(
    pose2d: np.ndarray,
    topo: SkeletonTopology,
    cfg: BoxedManConfig = BoxedManConfig(),
) -> list[tuple[Quad, frozenset[int]]]:
    """Construct every occluder box for a 2D pose.

    Returns (quad, owner_joints) pairs; owner joints are exempt from being
    occluded by that quad.  Raises DegenerateSegment (with the segment's
    joint indices attached) if a bone collapses in projection.
    """
    pts = np.asarray(pose2d, dtype=np.float64)
    if pts.shape != (topo.joint_count, 2):
        raise ShapeMismatch(
            f"pose must be ({topo.joint_count}, 2) for topology '{topo.name}'", pts.shape
        )
    base = cfg.delta if cfg.delta is not None else cfg.limb_width_frac * _mean_bone_length(pts, topo)

    quads: list[tuple[Quad, frozenset[int]]] = []
    segments = [(topo.head_segment[0], topo.head_segment[1], HEAD_WIDTH_SCALE)]
    segments += list(topo.limb_segments)
    for ja, jb, width_scale in segments:
        delta = cfg.per_segment_overrides.get((ja, jb), base * width_scale)
        try:
            quad = build_segment_quad(pts[ja], pts[jb], delta)
        except DegenerateSegment as exc:
            raise DegenerateSegment((ja, jb), exc.length) from None
        quads.append((quad, frozenset((ja, jb))))
    if cfg.include_torso:
        quads.append((quad_from_points(pts[list(topo.torso_quad)]), frozenset(topo.torso_quad)))
    return quads


def boxed_man_occlusions(
    pose2d: np.ndarray,
    topo: SkeletonTopology,
    cfg: BoxedManConfig = BoxedManConfig(),
) -> np.ndarray:
    """Label occluded joints from a 2D pose using the boxed-man heuristic.

    A joint is occluded iff it lies inside at least one box whose defining
    segment (or torso corner set) does not include the joint itself.
    Depth is deliberately ignored: the test is purely 2D.

    Returns:
        (N,) int array of 0/1 labels, 1 = occluded.
    """
    pts = np.asarray(pose2d, dtype=np.float64)
    occluded = np.zeros(topo.joint_count, dtype=np.int64)
    for quad, owners in occluder_quads(pts, topo, cfg):
        hits = points_in_quad(pts, quad)
        for j in np.nonzero(hits)[0]:
            if int(j) not in owners:
                occluded[j] = 1
    return occluded


def _mean_bone_length(pose2d: np.ndarray, topo: SkeletonTopology) -> float:
    bones = topo.bones()
    lengths = [np.hypot(*(pose2d[c] - pose2d[p])) for c, p in bones]
    mean = float(np.mean(lengths))
    if mean <= 0:
        raise DegenerateSegment("whole pose", mean)
    return mean


def validate_occlusion_vector(labels: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Check a label vector is binary and sized for the topology."""
    arr = np.asarray(labels)
    if arr.shape != (topo.joint_count,):
        raise ShapeMismatch(f"expected ({topo.joint_count},) labels", arr.shape)
    if not np.all((arr == 0) | (arr == 1)):
        raise ConfigError("occlusion labels must be exactly 0 or 1")
    return arr.astype(np.int64)
