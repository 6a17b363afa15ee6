"""Occlusion-aware 2D-to-3D human pose lifting.

The toolkit covers the full desk-scale pipeline: synthetic articulated
walking data, two occlusion-labeling heuristics (clustered depth and
boxed-man), Gaussian keypoint heatmaps, a from-scratch differentiable
temporal convolutional lifting network with occlusion gating, and MPJPE
evaluation reports.
"""

from .data import (
    GaitParams,
    MotionSequence,
    OrbitParams,
    SynthConfig,
    load_sequences,
    save_sequences,
    split_train_val,
    synth_dataset,
    synth_walk,
)
from .geometry import CameraModel, Frame, SkeletonTopology, load_topology, project, root_center
from .heatmap import HeatmapStack, center_crop_resize, load_hms1, render_heatmaps, save_hms1
from .losses import EvalReport, LossWeights, build_report, mpjpe, occlusion_loss
from .occlusion import (
    BoxedManConfig,
    ClusterConfig,
    Quad,
    boxed_man_occlusions,
    build_segment_quad,
    cluster_occlusions,
    point_in_quad,
)
from .tcn import (
    ParameterStore,
    TcnConfig,
    init_tcn_params,
    load_checkpoint,
    restore_params,
    save_checkpoint,
    sgd_step,
    tcn_forward,
)
from .train import TrainConfig, TrainLog, Window, evaluate, make_windows, train

__version__ = "0.1.0"
