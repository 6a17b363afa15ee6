"""Windowed training and evaluation: sequences -> occlusion labels ->
network -> combined loss, all fully seeded and reproducible.

Each training example is one receptive-field-wide window: projected and
normalized 2D keypoints, the occlusion labels the chosen heuristic
assigns to those frames, and the center frame's root-centered camera-frame
3D pose as the target.  Only full windows are used (valid convolutions,
no padding), and windows never cross sequence boundaries.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .data import MotionSequence
from .errors import ConfigError, EmptyEvaluation, NonFiniteGradient, SequenceTooShort
from .geometry import CameraModel, Frame, project, root_center
from .losses import (
    EvalReport,
    LossWeights,
    build_report,
    combined_loss_t,
    occlusion_loss,
    per_frame_mpjpe,
)
from .occlusion import BoxedManConfig, ClusterConfig, boxed_man_occlusions, cluster_occlusions
from .tcn import ParameterStore, TcnConfig, init_tcn_params, save_checkpoint, save_config, sgd_step, tcn_forward

LABELERS = ("clustered", "boxedman")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    lr_decay: float = 0.95
    loss_weights: LossWeights = field(default_factory=LossWeights)
    labeler: str = "boxedman"
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    boxed: BoxedManConfig = field(default_factory=BoxedManConfig)
    tcn: TcnConfig = field(default_factory=lambda: TcnConfig(channels=64))
    seed: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.labeler not in LABELERS:
            raise ConfigError(f"labeler must be one of {LABELERS}, got {self.labeler!r}")


@dataclass(frozen=True)
class Window:
    """One training example spanning ``rf`` consecutive frames."""

    inputs2d: np.ndarray      # (2N, rf) normalized, joint-interleaved x/y
    occ_window: np.ndarray    # (N, rf) heuristic labels over the window
    target3d: np.ndarray      # (N, 3) root-centered camera-frame center pose
    subject: str
    action: str
    center_frame: int


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_mpjpe_mm: float
    val_occ_loss: float
    lr: float


@dataclass(frozen=True)
class TrainLog:
    records: tuple[EpochRecord, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,val_mpjpe_mm,val_occ_loss,lr\n")
        for r in self.records:
            buf.write(f"{r.epoch},{r.train_loss!r},{r.val_mpjpe_mm!r},{r.val_occ_loss!r},{r.lr!r}\n")
        return buf.getvalue()

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]


def normalize_2d(points2d: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Map pixel coordinates into roughly [-1, 1] about the principal point.

    The camera model carries no image size, so the principal point doubles
    as the half-extent (cameras here are centered).
    """
    half = max(cam.cx, cam.cy)
    out = np.empty_like(points2d)
    out[..., 0] = (points2d[..., 0] - cam.cx) / half
    out[..., 1] = (points2d[..., 1] - cam.cy) / half
    return out


def label_frames(
    seq: MotionSequence,
    labeler: str,
    cluster_cfg: ClusterConfig = ClusterConfig(),
    boxed_cfg: BoxedManConfig = BoxedManConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Project a sequence and label every frame with the chosen heuristic.

    Returns:
        (joints2d, occ): (F, N, 2) pixel coordinates and (F, N) labels.
        The clustered heuristic sees camera-frame 3D joints; the boxed-man
        heuristic sees the projected 2D joints.
    """
    if labeler not in LABELERS:
        raise ConfigError(f"labeler must be one of {LABELERS}, got {labeler!r}")
    cam = seq.camera
    f, n = seq.frames.shape[:2]
    joints2d = np.empty((f, n, 2))
    occ = np.empty((f, n), dtype=np.int64)
    for k in range(f):
        cam_pts = cam.world_to_camera(seq.frames[k])
        joints2d[k] = project(cam_pts, cam, Frame.CAMERA)
        if labeler == "clustered":
            occ[k] = cluster_occlusions(cam_pts, cluster_cfg)
        else:
            occ[k] = boxed_man_occlusions(joints2d[k], seq.topology, boxed_cfg)
    return joints2d, occ


def make_windows(
    seq: MotionSequence,
    labeler: str,
    rf: int,
    cluster_cfg: ClusterConfig = ClusterConfig(),
    boxed_cfg: BoxedManConfig = BoxedManConfig(),
) -> list[Window]:
    """Slide a receptive-field window over a sequence.

    Raises:
        SequenceTooShort: If the sequence has fewer than rf frames.
    """
    f = len(seq)
    if f < rf:
        raise SequenceTooShort(f"sequence has {f} frames < receptive field {rf}")
    joints2d, occ = label_frames(seq, labeler, cluster_cfg, boxed_cfg)
    norm2d = normalize_2d(joints2d, seq.camera)
    topo = seq.topology
    n = topo.joint_count

    windows = []
    half = rf // 2
    for start in range(f - rf + 1):
        center = start + half
        # (rf, N, 2) -> joint-interleaved (2N, rf)
        win2d = norm2d[start:start + rf].transpose(1, 2, 0).reshape(2 * n, rf)
        target = root_center(seq.camera.world_to_camera(seq.frames[center]), topo)
        windows.append(
            Window(
                inputs2d=win2d,
                occ_window=occ[start:start + rf].T.astype(np.float64),
                target3d=target,
                subject=seq.subject,
                action=seq.action,
                center_frame=center,
            )
        )
    return windows


def windows_from_sequences(
    sequences: list[MotionSequence],
    labeler: str,
    rf: int,
    cluster_cfg: ClusterConfig = ClusterConfig(),
    boxed_cfg: BoxedManConfig = BoxedManConfig(),
    skip_short: bool = True,
) -> list[Window]:
    """Windows for every sequence; short sequences are skipped (or raise)."""
    out: list[Window] = []
    for seq in sequences:
        if len(seq) < rf:
            if skip_short:
                continue
            raise SequenceTooShort(f"sequence '{seq.subject}/{seq.action}' has {len(seq)} frames")
        out.extend(make_windows(seq, labeler, rf, cluster_cfg, boxed_cfg))
    return out


def _stack_batch(windows: list[Window], variant: str) -> tuple[np.ndarray, ...]:
    x = np.stack([w.inputs2d for w in windows])
    occ_in = np.stack([w.occ_window for w in windows])
    gt3 = np.stack([w.target3d.reshape(-1) for w in windows])
    if variant == "one_vector":
        center = windows[0].occ_window.shape[1] // 2
        occ_gt = occ_in[:, :, center]
    else:
        occ_gt = occ_in
    return x, occ_in, gt3, occ_gt


def train(
    train_windows: list[Window],
    val_windows: list[Window],
    cfg: TrainConfig,
    n_joints: int,
    root_index: int,
) -> tuple[ParameterStore, TrainLog]:
    """Momentum-SGD training against the combined loss.

    Per epoch: seeded shuffle, batched forward/backward/update, then an
    eval-mode validation pass.  The best-validation-MPJPE parameters are
    written to cfg.checkpoint_path (if set).  Reruns with the same config
    and data reproduce the log and checkpoint bit for bit.

    Raises:
        NonFiniteGradient: Annotated with the epoch/step where it happened.
    """
    if not train_windows or not val_windows:
        raise EmptyEvaluation("train and validation sets must be nonempty")
    params = init_tcn_params(cfg.tcn, n_joints, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    velocity: dict[str, np.ndarray] = {}
    records = []
    best_val = np.inf

    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr * cfg.lr_decay ** (epoch - 1)
        order = rng.permutation(len(train_windows))
        epoch_loss = 0.0
        for step, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [train_windows[i] for i in order[lo:lo + cfg.batch_size]]
            x, occ_in, gt3, occ_gt = _stack_batch(batch, cfg.tcn.variant)
            params.zero_grad()
            pose3d, occ_pred = tcn_forward(x, occ_in, cfg.tcn, params, mode="train", rng=rng)
            loss = combined_loss_t(pose3d, gt3, occ_pred, occ_gt, cfg.loss_weights, root_index)
            loss.backward()
            try:
                sgd_step(params, params.gradients(), lr, cfg.momentum, velocity)
            except NonFiniteGradient as exc:
                raise NonFiniteGradient(exc.name, f"epoch {epoch}, step {step}") from None
            epoch_loss += loss.item() * len(batch)
        epoch_loss /= len(train_windows)

        val_mpjpe, val_occ = validate(val_windows, params, cfg.tcn, n_joints, root_index,
                                      batch_size=cfg.batch_size)
        records.append(EpochRecord(epoch, epoch_loss, val_mpjpe, val_occ, lr))
        if val_mpjpe < best_val:
            best_val = val_mpjpe
            if cfg.checkpoint_path:
                save_checkpoint(cfg.checkpoint_path, params)
                save_config(cfg.checkpoint_path + ".cfg", cfg.tcn, n_joints,
                            extra={"root_index": root_index, "labeler": cfg.labeler})
    return params, TrainLog(tuple(records))


def validate(
    windows: list[Window],
    params: ParameterStore,
    tcn_cfg: TcnConfig,
    n_joints: int,
    root_index: int,
    batch_size: int = 64,
) -> tuple[float, float]:
    """Eval-mode validation: (MPJPE mm, occlusion loss) over all windows."""
    errors, occ_losses, counts = [], [], []
    for preds, probs, batch in _eval_batches(windows, params, tcn_cfg, batch_size):
        gt = np.stack([w.target3d for w in batch])
        pred = preds.reshape(len(batch), n_joints, 3)
        _, _, _, occ_gt = _stack_batch(batch, tcn_cfg.variant)
        errors.append(per_frame_mpjpe(pred, gt, root_index))
        occ_losses.append(occlusion_loss(probs, occ_gt))
        counts.append(len(batch))
    all_err = np.concatenate(errors)
    occ = float(np.average(occ_losses, weights=counts))
    return float(all_err.mean()), occ


def _eval_batches(windows, params, tcn_cfg: TcnConfig, batch_size: int):
    for lo in range(0, len(windows), batch_size):
        batch = windows[lo:lo + batch_size]
        x, occ_in, _, _ = _stack_batch(batch, tcn_cfg.variant)
        pose3d, occ_pred = tcn_forward(x, occ_in, tcn_cfg, params, mode="eval")
        yield pose3d.values, occ_pred.values, batch


def evaluate(
    sequences: list[MotionSequence],
    params: ParameterStore,
    tcn_cfg: TcnConfig,
    labeler: str,
    root_index: int,
    cluster_cfg: ClusterConfig = ClusterConfig(),
    boxed_cfg: BoxedManConfig = BoxedManConfig(),
    batch_size: int = 64,
) -> EvalReport:
    """Eval-mode run over whole sequences, grouped by (subject, action)."""
    windows = windows_from_sequences(sequences, labeler, tcn_cfg.receptive_field,
                                     cluster_cfg, boxed_cfg)
    if not windows:
        raise EmptyEvaluation("no usable windows in the evaluation set")
    n_joints = windows[0].occ_window.shape[0]
    errors: list[float] = []
    tags: list[tuple[str, str]] = []
    for preds, _, batch in _eval_batches(windows, params, tcn_cfg, batch_size):
        gt = np.stack([w.target3d for w in batch])
        pred = preds.reshape(len(batch), n_joints, 3)
        errors.extend(per_frame_mpjpe(pred, gt, root_index).tolist())
        tags.extend((w.subject, w.action) for w in batch)
    return build_report(errors, tags)
