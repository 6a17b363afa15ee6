"""Position error (MPJPE), the occlusion loss term, the combined training
loss, and evaluation report assembly.

MPJPE root-centers both poses at the pelvis before averaging per-joint
Euclidean distances.  User-facing numbers are millimeters; the training
loss keeps meters internally so gradient magnitudes stay sane.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, EmptyEvaluation, ShapeMismatch
from .geometry import SkeletonTopology

M_TO_MM = 1000.0


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the position term and the occlusion term."""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError(f"loss weights must be >= 0, got {self.lambda1}, {self.lambda2}")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise ConfigError("at least one loss weight must be positive")


def mpjpe(pred: np.ndarray, gt: np.ndarray, topo: SkeletonTopology) -> float:
    """Mean per-joint position error in millimeters.

    Both arrays are (B, N, 3) in meters (a single (N, 3) pose is also
    accepted).  Poses are centered at the root joint before comparison, so
    any rigid translation of either side cancels.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeMismatch("pred/gt shapes differ", p.shape, g.shape)
    if p.ndim == 2:
        p, g = p[None], g[None]
    if p.ndim != 3 or p.shape[1] != topo.joint_count or p.shape[2] != 3:
        raise ShapeMismatch(f"expected (B, {topo.joint_count}, 3)", p.shape)
    r = topo.root_index
    p = p - p[:, r:r + 1, :]
    g = g - g[:, r:r + 1, :]
    return float(np.linalg.norm(p - g, axis=2).mean() * M_TO_MM)


def per_frame_mpjpe(pred: np.ndarray, gt: np.ndarray, root_index: int) -> np.ndarray:
    """Per-example MPJPE (B,) in millimeters; same conventions as mpjpe."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 3:
        raise ShapeMismatch("expected matching (B, N, 3) batches", p.shape, g.shape)
    r = root_index
    p = p - p[:, r:r + 1, :]
    g = g - g[:, r:r + 1, :]
    return np.linalg.norm(p - g, axis=2).mean(axis=1) * M_TO_MM


def occlusion_loss(occ_pred: np.ndarray, occ_gt: np.ndarray) -> float:
    """Mean absolute difference between predicted probabilities and labels.

    occ_gt must broadcast against occ_pred: the one-vector variant compares
    (B, N, 1) predictions to (B, N) center-frame labels; many-vectors
    compares (B, N, T) to the full window.
    """
    p = np.asarray(occ_pred, dtype=np.float64)
    g = np.asarray(occ_gt, dtype=np.float64)
    if g.ndim == p.ndim - 1:
        g = g[..., None]
    try:
        diff = np.broadcast_arrays(p, g)
    except ValueError as exc:
        raise ShapeMismatch("occlusion pred/gt not broadcastable", p.shape, g.shape) from exc
    return float(np.abs(diff[0] - diff[1]).mean())


def position_loss_t(pred3d: Tensor, gt3d: np.ndarray, root_index: int) -> Tensor:
    """Differentiable MPJPE in meters over a (B, 3N) prediction batch."""
    b, three_n = pred3d.shape
    n = three_n // 3
    gt = np.asarray(gt3d, dtype=np.float64).reshape(b, n, 3)
    p = ad.reshape(pred3d, (b, n, 3))
    p_root = ad.take_joints(p, [root_index], axis=1)
    p_rel = ad.sub(p, p_root)
    g_rel = gt - gt[:, root_index:root_index + 1, :]
    return ad.tmean(ad.l2norm(ad.sub(p_rel, g_rel), axis=2))


def occlusion_loss_t(occ_pred: Tensor, occ_gt: np.ndarray) -> Tensor:
    """Differentiable mean |o - o_pred| with sign(0) treated as 0."""
    g = np.asarray(occ_gt, dtype=np.float64)
    if g.ndim == occ_pred.ndim - 1:
        g = g[..., None]
    g = np.broadcast_to(g, occ_pred.shape)
    return ad.tmean(ad.absolute(ad.sub(occ_pred, g)))


def combined_loss_t(
    pred3d: Tensor,
    gt3d: np.ndarray,
    occ_pred: Tensor,
    occ_gt: np.ndarray,
    weights: LossWeights,
    root_index: int,
) -> Tensor:
    """lambda1 * position term (meters) + lambda2 * occlusion term."""
    loss = ad.mul(position_loss_t(pred3d, gt3d, root_index), weights.lambda1)
    if weights.lambda2 != 0.0:
        loss = ad.add(loss, ad.mul(occlusion_loss_t(occ_pred, occ_gt), weights.lambda2))
    return loss


@dataclass(frozen=True)
class ReportRow:
    subject: str
    action: str
    frames: int
    mpjpe_mm: float


@dataclass(frozen=True)
class EvalReport:
    """Per-(subject, action) MPJPE table plus the frame-weighted average."""

    rows: tuple[ReportRow, ...]
    overall_mpjpe_mm: float
    total_frames: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("subject,action,frames,mpjpe_mm\n")
        for row in self.rows:
            buf.write(f"{row.subject},{row.action},{row.frames},{row.mpjpe_mm:.6f}\n")
        buf.write(f"Average,,{self.total_frames},{self.overall_mpjpe_mm:.6f}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        headers = ("Subject", "Action", "Frames", "MPJPE (mm)")
        body = [(r.subject, r.action, str(r.frames), f"{r.mpjpe_mm:.2f}") for r in self.rows]
        body.append(("Average", "", str(self.total_frames), f"{self.overall_mpjpe_mm:.2f}"))
        widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
        return "\n".join(lines) + "\n"


def build_report(per_frame_errors_mm, metadata) -> EvalReport:
    """Group per-frame errors by (subject, action) and average.

    Args:
        per_frame_errors_mm: Iterable of per-frame errors in millimeters.
        metadata: Matching iterable of (subject, action) tags.

    Returns:
        EvalReport with rows sorted by subject then action; the overall
        average is frame-weighted.
    """
    errors = np.asarray(list(per_frame_errors_mm), dtype=np.float64)
    tags = list(metadata)
    if errors.size == 0:
        raise EmptyEvaluation("no frames to evaluate")
    if len(tags) != errors.size:
        raise ShapeMismatch("errors/metadata lengths differ", (errors.size,), (len(tags),))

    groups: dict[tuple[str, str], list[float]] = {}
    for err, (subject, action) in zip(errors, tags):
        groups.setdefault((str(subject), str(action)), []).append(float(err))

    rows = tuple(
        ReportRow(subject=s, action=a, frames=len(v), mpjpe_mm=float(np.mean(v)))
        for (s, a), v in sorted(groups.items())
    )
    return EvalReport(
        rows=rows,
        overall_mpjpe_mm=float(errors.mean()),
        total_frames=int(errors.size),
    )
