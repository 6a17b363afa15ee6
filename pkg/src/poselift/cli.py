"""Command-line interface.

Subcommands cover the full pipeline: ``synth`` (generate sequences),
``label`` (occlusion labeling), ``render`` (heatmap PNG + HMS1 stacks),
``train``, ``eval``, and ``gradcheck``.  Every run prints its resolved
configuration first, and all randomness funnels through --seed, so
identical invocations produce identical outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .data import (
    GaitParams,
    MotionSequence,
    OrbitParams,
    SynthConfig,
    load_sequences,
    save_sequences,
    synth_dataset,
)
from .errors import DataError, NumericalError, PoseliftError
from .heatmap import center_crop_resize, render_heatmaps, save_hms1, save_png
from .losses import LossWeights
from .occlusion import BoxedManConfig, ClusterConfig
from .tcn import TcnConfig, load_config, restore_params
from .train import TrainConfig, evaluate, train, windows_from_sequences

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; remap to this tool's code 1."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("formatter_class", argparse.ArgumentDefaultsHelpFormatter)
        super().__init__(*args, **kwargs)

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--topology", default="humaneva15",
                   help="topology preset or config file")
    p.add_argument("--out", default=None, help="output path (subcommand specific)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poselift",
                     description="Occlusion-aware 2D-to-3D pose lifting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate synthetic walking sequences")
    _common_flags(p)
    p.add_argument("--frames", type=int, default=250, help="frames per sequence")
    p.add_argument("--sequences", type=int, default=8, help="number of sequences")
    p.add_argument("--fps", type=float, default=50.0, help="frames per second")
    p.add_argument("--stride", type=float, default=0.65, help="stride length, m")
    p.add_argument("--cadence", type=float, default=1.4, help="steps per second")
    p.add_argument("--arm-swing", type=float, default=0.6, help="arm swing amplitude, rad")
    p.add_argument("--hip-sway", type=float, default=0.03, help="hip sway amplitude, m")
    p.add_argument("--cam-radius", type=float, default=3.5, help="camera distance, m")
    p.add_argument("--cam-height", type=float, default=1.4, help="camera height, m")
    p.add_argument("--cam-speed", type=float, default=0.7, help="min relative sweep rate, rad/s")

    p = sub.add_parser("label", help="add 2D joints + occlusion labels to a sequence file")
    _common_flags(p)
    p.add_argument("--in", dest="input", required=True, help="POSEQ1 input file")
    p.add_argument("--labeler", choices=["clustered", "boxedman"], default="clustered")
    p.add_argument("--epsilon", type=float, default=0.06,
                   help="clustered: planar distance tolerance, m")
    p.add_argument("--transitive", action="store_true",
                   help="clustered: merge overlapping neighborhoods before labeling")
    p.add_argument("--delta", type=float, default=None,
                   help="boxedman: absolute box half-width in pixels "
                        "(default: 0.13 x mean bone length)")

    p = sub.add_parser("render", help="render labeled sequences to PNG + HMS1 heatmap stacks")
    _common_flags(p)
    p.add_argument("--in", dest="input", required=True, help="labeled POSEQ1 input file")
    p.add_argument("--size", type=int, default=128, help="output heatmap size")
    p.add_argument("--sigma", type=float, default=2.0, help="gaussian sigma, px")
    p.add_argument("--max-frames", type=int, default=8,
                   help="render at most this many frames per sequence")

    p = sub.add_parser("train", help="train the lifting network")
    _common_flags(p)
    p.add_argument("--train", dest="train_file", required=True, help="POSEQ1 training file")
    p.add_argument("--val", dest="val_file", required=True, help="POSEQ1 validation file")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--lr-decay", type=float, default=0.95)
    p.add_argument("--lambda1", type=float, default=1.0, help="position loss weight")
    p.add_argument("--lambda2", type=float, default=1.0, help="occlusion loss weight")
    p.add_argument("--labeler", choices=["clustered", "boxedman"], default="boxedman")
    p.add_argument("--epsilon", type=float, default=0.06)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--variant", choices=["one_vector", "many_vectors"], default="many_vectors")
    p.add_argument("--channels", type=int, default=64, help="hidden channels")
    p.add_argument("--blocks", type=int, default=2, help="residual blocks")
    p.add_argument("--kernel", type=int, default=3, help="temporal kernel width")
    p.add_argument("--dropout", type=float, default=0.25)
    p.add_argument("--tau", type=float, default=0.5, help="occlusion gate threshold")
    p.add_argument("--checkpoint", default=None, help="checkpoint output path (TCN1)")
    p.add_argument("--log", default=None, help="training log CSV output path")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a sequence file")
    _common_flags(p)
    p.add_argument("--in", dest="input", required=True, help="POSEQ1 evaluation file")
    p.add_argument("--checkpoint", required=True, help="TCN1 checkpoint path")
    p.add_argument("--labeler", choices=["clustered", "boxedman"], default=None,
                   help="default: labeler recorded in the checkpoint config")
    p.add_argument("--epsilon", type=float, default=0.06)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--csv", default=None, help="also write the report as CSV here")

    p = sub.add_parser("gradcheck", help="finite-difference check of gradients")
    _common_flags(p)
    p.add_argument("--joints", type=int, default=3)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--step", type=float, default=1e-5)

    return parser


def _print_config(args: argparse.Namespace) -> None:
    print("resolved config:")
    for key in sorted(vars(args)):
        if key == "command":
            continue
        print(f"  {key} = {getattr(args, key)}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    print(f"poselift {args.command}")
    _print_config(args)
    handler = {
        "synth": _cmd_synth,
        "label": _cmd_label,
        "render": _cmd_render,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "gradcheck": _cmd_gradcheck,
    }[args.command]
    try:
        return handler(args)
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PoseliftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _cmd_synth(args) -> int:
    if not args.out:
        print("synth requires --out", file=sys.stderr)
        return EXIT_USAGE
    cfg = SynthConfig(
        seed=args.seed,
        n_frames=args.frames,
        fps=args.fps,
        gait=GaitParams(stride_m=args.stride, cadence_hz=args.cadence,
                        arm_swing_rad=args.arm_swing, hip_sway_m=args.hip_sway),
        orbit=OrbitParams(radius_m=args.cam_radius, height_m=args.cam_height,
                          angular_speed=args.cam_speed),
        topology=args.topology,
    )
    sequences = synth_dataset(cfg, args.sequences)
    save_sequences(args.out, sequences)
    total = sum(len(s) for s in sequences)
    print(f"wrote {len(sequences)} sequences ({total} frames) to {args.out}")
    return EXIT_OK


def _labeler_configs(args) -> tuple[ClusterConfig, BoxedManConfig]:
    cluster = ClusterConfig(epsilon=args.epsilon, transitive=getattr(args, "transitive", False))
    boxed = BoxedManConfig(delta=args.delta)
    return cluster, boxed


def _cmd_label(args) -> int:
    if not args.out:
        print("label requires --out", file=sys.stderr)
        return EXIT_USAGE
    from .train import label_frames

    sequences, discarded = load_sequences(args.input)
    if discarded:
        print(f"discarded {discarded} invalid frames")
    cluster, boxed = _labeler_configs(args)
    labeled = []
    occluded_frames = 0
    for seq in sequences:
        joints2d, occ = label_frames(seq, args.labeler, cluster, boxed)
        occluded_frames += int((occ.sum(axis=1) > 0).sum())
        labeled.append(MotionSequence(
            frames=seq.frames, fps=seq.fps, subject=seq.subject, action=seq.action,
            camera_id=seq.camera_id, camera=seq.camera, topology=seq.topology,
            joints2d=joints2d, occlusions=occ,
        ))
    save_sequences(args.out, labeled)
    total = sum(len(s) for s in labeled)
    print(f"labeled {total} frames ({occluded_frames} with >=1 occluded joint) -> {args.out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    if not args.out:
        print("render requires --out (an output directory)", file=sys.stderr)
        return EXIT_USAGE
    sequences, _ = load_sequences(args.input)
    os.makedirs(args.out, exist_ok=True)
    written = 0
    for seq in sequences:
        if seq.joints2d is None or seq.occlusions is None:
            raise DataError(
                f"sequence '{seq.subject}/{seq.action}' has no joints2d/occ fields; "
                "run `poselift label` first"
            )
        h = int(round(2 * seq.camera.cy))
        w = int(round(2 * seq.camera.cx))
        step = max(1, len(seq) // args.max_frames)
        for k in range(0, len(seq), step):
            if written >= args.max_frames * len(sequences):
                break
            stack = render_heatmaps(seq.joints2d[k], seq.occlusions[k], h, w, sigma=args.sigma)
            if not np.any(stack.channels):
                continue  # every joint occluded; nothing to crop
            cropped = center_crop_resize(stack, seq.joints2d[k], out_size=args.size)
            stem = f"{seq.subject}_{seq.action}_{seq.camera_id}_f{k:05d}"
            save_png(os.path.join(args.out, stem + ".png"), cropped.max_projection())
            save_hms1(os.path.join(args.out, stem + ".hms1"), cropped)
            written += 1
    print(f"rendered {written} frames to {args.out}/")
    return EXIT_OK


def _cmd_train(args) -> int:
    train_seqs, d1 = load_sequences(args.train_file)
    val_seqs, d2 = load_sequences(args.val_file)
    if d1 or d2:
        print(f"discarded {d1} train / {d2} val invalid frames")
    cluster, boxed = _labeler_configs(args)
    tcn_cfg = TcnConfig(kernel_w=args.kernel, channels=args.channels, blocks=args.blocks,
                        dropout_p=args.dropout, gate_tau=args.tau, variant=args.variant)
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        momentum=args.momentum, lr_decay=args.lr_decay,
        loss_weights=LossWeights(lambda1=args.lambda1, lambda2=args.lambda2),
        labeler=args.labeler, cluster=cluster, boxed=boxed,
        tcn=tcn_cfg, seed=args.seed, checkpoint_path=args.checkpoint,
    )
    if not train_seqs or not val_seqs:
        raise DataError("train/val files contain no usable sequences")
    topo = train_seqs[0].topology
    rf = tcn_cfg.receptive_field
    train_windows = windows_from_sequences(train_seqs, cfg.labeler, rf, cluster, boxed)
    val_windows = windows_from_sequences(val_seqs, cfg.labeler, rf, cluster, boxed)
    print(f"{len(train_windows)} train windows, {len(val_windows)} val windows, "
          f"receptive field {rf}")
    params, log = train(train_windows, val_windows, cfg, topo.joint_count, topo.root_index)
    for rec in log.records:
        print(f"epoch {rec.epoch:3d}  loss {rec.train_loss:.6f}  "
              f"val mpjpe {rec.val_mpjpe_mm:8.2f} mm  val occ {rec.val_occ_loss:.4f}  "
              f"lr {rec.lr:.2e}")
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write(log.to_csv())
        print(f"wrote training log to {args.log}")
    if args.checkpoint:
        print(f"best-validation checkpoint at {args.checkpoint}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    sequences, discarded = load_sequences(args.input)
    if discarded:
        print(f"discarded {discarded} invalid frames")
    if not sequences:
        raise DataError("no usable sequences in input")
    tcn_cfg, n_joints, extras = load_config(args.checkpoint + ".cfg")
    params = restore_params(args.checkpoint, tcn_cfg, n_joints)
    labeler = args.labeler or extras.get("labeler", "boxedman")
    root_index = int(extras.get("root_index", sequences[0].topology.root_index))
    cluster, boxed = _labeler_configs(args)
    report = evaluate(sequences, params, tcn_cfg, labeler, root_index, cluster, boxed)
    print(report.to_text())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(f"wrote report CSV to {args.csv}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_text())
        print(f"wrote report to {args.out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .gradcheck import composed_network_check, primitive_checks

    worst_prim = 0.0
    for name, err in primitive_checks(seed=args.seed, step=args.step):
        print(f"  {name:<24} max rel err {err:.3e}")
        worst_prim = max(worst_prim, err)
    net_err = composed_network_check(
        n_joints=args.joints, channels=args.channels, blocks=args.blocks,
        seed=args.seed, step=args.step,
    )
    print(f"  {'composed network':<24} max rel err {net_err:.3e}")
    ok = worst_prim < 1e-4 and net_err < 1e-3
    print(f"gradcheck {'PASSED' if ok else 'FAILED'} "
          f"(primitives {worst_prim:.3e} < 1e-4, network {net_err:.3e} < 1e-3)")
    return EXIT_OK if ok else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
