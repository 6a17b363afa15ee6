"""The occlusion-aware temporal convolutional lifting network.

The trunk lifts a window of 2D keypoints to the center frame's 3D pose
with valid (unpadded) temporal convolutions: an input convolution of
kernel W, B residual blocks (kernel W then kernel 1, each conv followed by
batchnorm/ReLU/dropout), and a kernel-1 output convolution down to 3N
coordinates.  Every block shrinks the window by W-1 frames, so an input of
exactly ``receptive_field`` frames leaves a single center-frame output.

An occlusion branch runs ahead of the trunk: it convolves the input
occlusion vectors into logits, and joints whose sigmoid probability
exceeds a threshold have their (x, y) channels zeroed before the trunk
sees them.  Two variants differ in the branch's temporal shape:

* ``one_vector``: kernel-W convolutions collapse the window to a single
  occlusion vector (supervised against the center frame's labels).
* ``many_vectors``: kernel-1 convolutions keep one vector per frame
  (supervised against the whole window).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NonFiniteGradient, ParseError, ShapeMismatch

VARIANTS = ("one_vector", "many_vectors")
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class TcnConfig:
    """Network hyperparameters.

    ``channels`` defaults to the full-scale 1024; desk-scale experiments
    use 64.  ``receptive_field`` is derived: (W-1)*(1+B) + 1.
    """

    kernel_w: int = 3
    channels: int = 1024
    blocks: int = 2
    dropout_p: float = 0.25
    gate_tau: float = 0.5
    variant: str = "many_vectors"

    def __post_init__(self) -> None:
        if self.kernel_w < 1 or self.kernel_w % 2 == 0:
            raise ConfigError(f"kernel_w must be odd and >= 1, got {self.kernel_w}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.blocks < 0:
            raise ConfigError(f"blocks must be >= 0, got {self.blocks}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if not 0.0 < self.gate_tau < 1.0:
            raise ConfigError(f"gate_tau must be in (0, 1), got {self.gate_tau}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def receptive_field(self) -> int:
        return (self.kernel_w - 1) * (1 + self.blocks) + 1


class ParameterStore:
    """Named tensors with a deterministic iteration order.

    Holds both trainable parameters (conv kernels/biases, batchnorm
    scale/shift) and non-trainable buffers (batchnorm running stats).
    """

    def __init__(self) -> None:
        self._tensors: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, values: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name '{name}'")
        t = Tensor(np.asarray(values, dtype=np.float64))
        self._tensors[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def trainable_items(self):
        return ((n, t) for n, t in self._tensors.items() if self._trainable[n])

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Collect gradients of all trainable parameters (missing -> zeros)."""
        out = {}
        for name, t in self.trainable_items():
            out[name] = t.grad if t.grad is not None else np.zeros_like(t.values)
        return out

    def copy_values(self) -> dict[str, np.ndarray]:
        return {n: t.values.copy() for n, t in self._tensors.items()}


def init_tcn_params(cfg: TcnConfig, n_joints: int, seed: int = 0) -> ParameterStore:
    """Build a freshly initialized parameter store for the network.

    Conv weights use Kaiming fan-in scaling (std = sqrt(2 / fan_in)) from a
    seeded generator; biases start at zero, batchnorm at identity.
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore()

    def conv(name: str, c_out: int, c_in: int, w: int) -> None:
        std = np.sqrt(2.0 / (c_in * w))
        store.add(f"{name}.weight", rng.normal(0.0, std, size=(c_out, c_in, w)))
        store.add(f"{name}.bias", np.zeros(c_out))

    def bn(name: str, c: int) -> None:
        store.add(f"{name}.scale", np.ones(c))
        store.add(f"{name}.shift", np.zeros(c))
        store.add(f"{name}.running_mean", np.zeros(c), trainable=False)
        store.add(f"{name}.running_var", np.ones(c), trainable=False)

    occ_w = cfg.kernel_w if cfg.variant == "one_vector" else 1
    for i in range(cfg.blocks + 1):
        conv(f"occ.conv{i}", n_joints, n_joints, occ_w)

    conv("input.conv", cfg.channels, 2 * n_joints, cfg.kernel_w)
    bn("input.bn", cfg.channels)
    for b in range(cfg.blocks):
        conv(f"block{b}.conv1", cfg.channels, cfg.channels, cfg.kernel_w)
        bn(f"block{b}.bn1", cfg.channels)
        conv(f"block{b}.conv2", cfg.channels, cfg.channels, 1)
        bn(f"block{b}.bn2", cfg.channels)
    conv("output.conv", 3 * n_joints, cfg.channels, 1)
    return store


def _conv_bn_relu_drop(
    x: Tensor,
    store: ParameterStore,
    conv_name: str,
    bn_name: str,
    cfg: TcnConfig,
    mode: str,
    rng: np.random.Generator | None,
) -> Tensor:
    x = ad.conv1d(x, store[f"{conv_name}.weight"], store[f"{conv_name}.bias"])
    x = ad.batchnorm_1d(
        x,
        store[f"{bn_name}.scale"],
        store[f"{bn_name}.shift"],
        store[f"{bn_name}.running_mean"].values,
        store[f"{bn_name}.running_var"].values,
        mode,
        momentum=BN_MOMENTUM,
        eps=BN_EPS,
    )
    x = ad.relu(x)
    return ad.dropout(x, cfg.dropout_p, rng, mode)


def tcn_forward(
    seq2d,
    occ_in,
    cfg: TcnConfig,
    store: ParameterStore,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the network on a window (or batch of windows).

    Args:
        seq2d: (2N, T) or (B, 2N, T) joint-interleaved 2D coordinates.
        occ_in: (N, T) or (B, N, T) binary occlusion inputs in [0, 1].
        cfg: Hyperparameters; T must equal cfg.receptive_field.
        store: Parameters from init_tcn_params (same cfg/joint count).
        mode: 'train' (batch statistics, dropout) or 'eval'.
        rng: Generator for dropout; required in train mode when
            dropout_p > 0.

    Returns:
        (pose3d, occ_pred): (B, 3N) center-frame coordinates (or (3N,) for
        unbatched input) and (B, N, T_out) occlusion probabilities, where
        T_out is 1 for the one_vector variant and T for many_vectors.
    """
    seq2d, occ_in = ad.as_tensor(seq2d), ad.as_tensor(occ_in)
    unbatched = seq2d.ndim == 2
    if unbatched:
        seq2d = ad.reshape(seq2d, (1, *seq2d.shape))
        occ_in = ad.reshape(occ_in, (1, *occ_in.shape))
    if seq2d.ndim != 3 or occ_in.ndim != 3:
        raise ShapeMismatch("expected (B, 2N, T) and (B, N, T)", seq2d.shape, occ_in.shape)
    b_sz, n2, t = seq2d.shape
    n = occ_in.shape[1]
    if n2 != 2 * n or occ_in.shape[0] != b_sz or occ_in.shape[2] != t:
        raise ShapeMismatch("seq2d/occ_in disagree", seq2d.shape, occ_in.shape)
    if t != cfg.receptive_field:
        raise ConfigError(
            f"window length {t} != receptive field {cfg.receptive_field} "
            f"(kernel_w={cfg.kernel_w}, blocks={cfg.blocks})"
        )

    # occlusion branch: logits over the window, then hard gating
    h = occ_in
    for i in range(cfg.blocks + 1):
        h = ad.conv1d(h, store[f"occ.conv{i}.weight"], store[f"occ.conv{i}.bias"])
        if i < cfg.blocks:
            h = ad.relu(h)
    gated, occ_prob = ad.occlusion_gate(seq2d, h, cfg.gate_tau)

    # trunk
    x = _conv_bn_relu_drop(gated, store, "input.conv", "input.bn", cfg, mode, rng)
    crop = (cfg.kernel_w - 1) // 2
    for b in range(cfg.blocks):
        skip = ad.slice_time(x, crop, x.shape[-1] - crop)
        y = _conv_bn_relu_drop(x, store, f"block{b}.conv1", f"block{b}.bn1", cfg, mode, rng)
        y = _conv_bn_relu_drop(y, store, f"block{b}.conv2", f"block{b}.bn2", cfg, mode, rng)
        x = ad.add(skip, y)
    out = ad.conv1d(x, store["output.conv.weight"], store["output.conv.bias"])
    pose3d = ad.reshape(out, (b_sz, 3 * n))

    if unbatched:
        pose3d = ad.reshape(pose3d, (3 * n,))
        occ_prob = ad.reshape(occ_prob, occ_prob.shape[1:])
    return pose3d, occ_prob


def sgd_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float = 0.0,
    velocity: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Classic momentum SGD: v <- mu*v + g; p <- p - lr*v.

    Updates parameter values in place, in store iteration order, and
    returns the (mutated) velocity map so callers can carry it across
    steps.

    Raises:
        NonFiniteGradient: If any gradient contains NaN or infinity.
    """
    if lr < 0:
        raise ConfigError(f"lr must be >= 0, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
    if velocity is None:
        velocity = {}
    for name, tensor in store.trainable_items():
        if name not in grads:
            continue
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(tensor.values)
        v = momentum * v + g
        velocity[name] = v
        tensor.values -= lr * v
    return velocity


# ---------------------------------------------------------------------------
# TCN1 checkpoint format

TCN1_MAGIC = b"TCN1"
TCN1_VERSION = 1


def save_checkpoint(path: str, store: ParameterStore) -> None:
    """Serialize every tensor (parameters and buffers) as TCN1.

    Layout, all little endian: magic "TCN1", u32 version, u32 count, then
    per tensor: u16 name length, name bytes, u32 rank, u32 dims..., f64
    values.
    """
    with open(path, "wb") as fh:
        fh.write(TCN1_MAGIC)
        fh.write(struct.pack("<II", TCN1_VERSION, len(store)))
        for name, tensor in store.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            arr = tensor.values
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    """Read a TCN1 file back into an ordered name -> array map."""
    with open(path, "rb") as fh:
        if fh.read(4) != TCN1_MAGIC:
            raise ParseError(0, "bad TCN1 magic")
        version, count = struct.unpack("<II", fh.read(8))
        if version != TCN1_VERSION:
            raise ParseError(0, f"unsupported TCN1 version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            n_vals = int(np.prod(dims)) if dims else 1
            raw = fh.read(8 * n_vals)
            if len(raw) != 8 * n_vals:
                raise ParseError(0, f"truncated values for '{name}'")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return out


def restore_params(path: str, cfg: TcnConfig, n_joints: int) -> ParameterStore:
    """Rebuild a ParameterStore from a checkpoint, validating shapes."""
    loaded = load_checkpoint(path)
    store = init_tcn_params(cfg, n_joints, seed=0)
    if set(loaded) != set(store.names()):
        missing = set(store.names()) ^ set(loaded)
        raise ParseError(0, f"checkpoint does not match config; mismatched names: {sorted(missing)}")
    for name, tensor in store.items():
        if loaded[name].shape != tensor.values.shape:
            raise ShapeMismatch(f"checkpoint shape for '{name}'", loaded[name].shape,
                                tensor.values.shape)
        tensor.values[...] = loaded[name]
    return store


def save_config(path: str, cfg: TcnConfig, n_joints: int, extra: dict | None = None) -> None:
    """Write the network config as a key=value text file next to a checkpoint."""
    fields = {
        "kernel_w": cfg.kernel_w,
        "channels": cfg.channels,
        "blocks": cfg.blocks,
        "dropout_p": cfg.dropout_p,
        "gate_tau": cfg.gate_tau,
        "variant": cfg.variant,
        "n_joints": n_joints,
    }
    if extra:
        fields.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in fields.items():
            fh.write(f"{key}={value}\n")


def load_config(path: str) -> tuple[TcnConfig, int, dict[str, str]]:
    """Parse a key=value config file; returns (cfg, n_joints, extras)."""
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(lineno, f"expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
    try:
        cfg = TcnConfig(
            kernel_w=int(raw["kernel_w"]),
            channels=int(raw["channels"]),
            blocks=int(raw["blocks"]),
            dropout_p=float(raw["dropout_p"]),
            gate_tau=float(raw["gate_tau"]),
            variant=raw["variant"],
        )
        n_joints = int(raw["n_joints"])
    except KeyError as exc:
        raise ParseError(0, f"config file missing key {exc}") from exc
    known = {"kernel_w", "channels", "blocks", "dropout_p", "gate_tau", "variant", "n_joints"}
    extras = {k: v for k, v in raw.items() if k not in known}
    return cfg, n_joints, extras
