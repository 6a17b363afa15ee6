"""Gaussian keypoint heatmaps: rendering, center crop + resize, and the
HMS1 binary stack format.

Each joint gets its own channel; occluded joints render as all-zero
channels.  Pixel (r, c) is centered at image coordinates (u=c, v=r), so a
joint sitting exactly on integer coordinates peaks at exactly 1.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NoVisibleJoints, ParseError, ShapeMismatch

HMS1_MAGIC = b"HMS1"
CROP_MARGIN = 1.25  # crop side = margin * max(bbox width, bbox height)


@dataclass(frozen=True)
class HeatmapStack:
    """Per-joint heatmap channels plus provenance metadata.

    Attributes:
        channels: (N, H, W) float array, values in [0, 1].
        source_hw: (H, W) of the image the joints were rendered against.
        crop_window: (u_min, v_min, side) of the crop in source pixels,
            or None if the stack is uncropped.
        joint_order: Topology joint index per channel.
    """

    channels: np.ndarray
    source_hw: tuple[int, int]
    crop_window: tuple[float, float, float] | None = None
    joint_order: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 3:
            raise ShapeMismatch("channels must be (N, H, W)", ch.shape)
        object.__setattr__(self, "channels", ch)
        if self.joint_order is None:
            object.__setattr__(self, "joint_order", tuple(range(ch.shape[0])))
        elif len(self.joint_order) != ch.shape[0]:
            raise ShapeMismatch("joint_order length != channel count",
                                (len(self.joint_order),), ch.shape)

    @property
    def joint_count(self) -> int:
        return self.channels.shape[0]

    def max_projection(self) -> np.ndarray:
        """Collapse channels into one grayscale image (white blobs on black)."""
        return self.channels.max(axis=0)


def render_heatmaps(
    pose2d: np.ndarray,
    occluded: np.ndarray,
    height: int,
    width: int,
    sigma: float = 2.0,
) -> HeatmapStack:
    """Render one Gaussian channel per visible joint.

    Channel j holds exp(-((u-u_j)^2 + (v-v_j)^2) / (2 sigma^2)) sampled at
    pixel centers; occluded joints produce all-zero channels.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if height < 1 or width < 1:
        raise ConfigError(f"output size must be >= 1, got {height}x{width}")
    pts = np.asarray(pose2d, dtype=np.float64)
    occ = np.asarray(occluded)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeMismatch("pose must be (N, 2)", pts.shape)
    if occ.shape != (pts.shape[0],):
        raise ShapeMismatch("occlusion vector must be (N,)", occ.shape, pts.shape)

    us = np.arange(width, dtype=np.float64)
    vs = np.arange(height, dtype=np.float64)
    # (N, H, W) via broadcasting: du over columns, dv over rows
    du2 = (us[None, None, :] - pts[:, 0, None, None]) ** 2
    dv2 = (vs[None, :, None] - pts[:, 1, None, None]) ** 2
    channels = np.exp(-(du2 + dv2) / (2.0 * sigma * sigma))
    channels[occ == 1] = 0.0
    return HeatmapStack(channels=channels, source_hw=(height, width))


def center_crop_resize(stack: HeatmapStack, pose2d: np.ndarray, out_size: int = 128) -> HeatmapStack:
    """Crop a square window around the visible joints and resize.

    The window is centered on the visible-joint bounding box, with side
    1.25x the larger bbox extent, clamped to the image bounds, then
    bilinearly resampled to out_size x out_size.

    Raises:
        NoVisibleJoints: If every channel is identically zero.
    """
    if out_size < 1:
        raise ConfigError(f"out_size must be >= 1, got {out_size}")
    pts = np.asarray(pose2d, dtype=np.float64)
    if pts.shape[0] != stack.joint_count:
        raise ShapeMismatch("pose joints != stack channels", pts.shape, stack.channels.shape)
    visible = stack.channels.reshape(stack.joint_count, -1).max(axis=1) > 0
    if not np.any(visible):
        raise NoVisibleJoints("cannot crop: every joint is occluded")

    h, w = stack.channels.shape[1:]
    vis = pts[visible]
    lo = vis.min(axis=0)
    hi = vis.max(axis=0)
    center = (lo + hi) / 2.0
    side = CROP_MARGIN * float(max(hi[0] - lo[0], hi[1] - lo[1]))
    side = max(side, 1.0)  # a single visible joint still needs a window
    side = min(side, float(min(h, w) - 1))

    # shift the window so it stays inside [0, W-1] x [0, H-1]
    u0 = float(np.clip(center[0] - side / 2.0, 0.0, (w - 1) - side))
    v0 = float(np.clip(center[1] - side / 2.0, 0.0, (h - 1) - side))

    resized = _bilinear_window(stack.channels, u0, v0, side, out_size)
    return HeatmapStack(
        channels=resized,
        source_hw=stack.source_hw,
        crop_window=(u0, v0, side),
        joint_order=stack.joint_order,
    )


def _bilinear_window(channels: np.ndarray, u0: float, v0: float, side: float, out: int) -> np.ndarray:
    """Sample an axis-aligned square window with bilinear interpolation.

    Output pixel (r, c) samples source coordinates
    (v0 + r*side/(out-1), u0 + c*side/(out-1)); when the window equals the
    full image and out matches the source size this is an exact identity.
    """
    h, w = channels.shape[1:]
    step = side / (out - 1) if out > 1 else 0.0
    us = u0 + step * np.arange(out)
    vs = v0 + step * np.arange(out)
    us = np.clip(us, 0.0, w - 1)
    vs = np.clip(vs, 0.0, h - 1)

    u_lo = np.floor(us).astype(np.int64)
    v_lo = np.floor(vs).astype(np.int64)
    u_lo = np.minimum(u_lo, w - 2) if w > 1 else np.zeros_like(u_lo)
    v_lo = np.minimum(v_lo, h - 2) if h > 1 else np.zeros_like(v_lo)
    fu = us - u_lo
    fv = vs - v_lo
    u_hi = np.minimum(u_lo + 1, w - 1)
    v_hi = np.minimum(v_lo + 1, h - 1)

    c00 = channels[:, v_lo[:, None], u_lo[None, :]]
    c01 = channels[:, v_lo[:, None], u_hi[None, :]]
    c10 = channels[:, v_hi[:, None], u_lo[None, :]]
    c11 = channels[:, v_hi[:, None], u_hi[None, :]]
    wv = fv[:, None]
    wu = fu[None, :]
    return (
        c00 * (1 - wv) * (1 - wu)
        + c01 * (1 - wv) * wu
        + c10 * wv * (1 - wu)
        + c11 * wv * wu
    )


def save_hms1(path: str, stack: HeatmapStack) -> None:
    """Write a heatmap stack as HMS1: magic, u32 N/H/W, then f32 LE values."""
    n, h, w = stack.channels.shape
    with open(path, "wb") as fh:
        fh.write(HMS1_MAGIC)
        fh.write(struct.pack("<III", n, h, w))
        fh.write(stack.channels.astype("<f4").tobytes())


def load_hms1(path: str) -> HeatmapStack:
    """Read an HMS1 stack back; inverse of save_hms1 up to f32 precision."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != HMS1_MAGIC:
            raise ParseError(0, f"bad HMS1 magic {magic!r}")
        n, h, w = struct.unpack("<III", fh.read(12))
        raw = fh.read(4 * n * h * w)
        if len(raw) != 4 * n * h * w:
            raise ParseError(0, "truncated HMS1 payload")
    channels = np.frombuffer(raw, dtype="<f4").reshape(n, h, w).astype(np.float64)
    return HeatmapStack(channels=channels, source_hw=(h, w))


def save_png(path: str, image: np.ndarray) -> None:
    """Write a [0, 1] grayscale image as an 8-bit PNG."""
    from PIL import Image

    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255).astype(np.uint8), mode="L").save(path)
