"""Rope rearrangement with graph-conditioned pick-and-place imitation."""

from ._core import (
    BadMagic,
    ConfigError,
    DegenerateGraph,
    Error,
    InsufficientForeground,
    InsufficientUnits,
    InvalidGeometry,
    IoError,
    Model,
    ModelHyper,
    NoGraph,
    NoSupport,
    OutOfWorkspace,
    RopeState,
    ShapeMismatch,
    SimConfig,
    Topology,
    TrainingDiverged,
    TruncatedFile,
    VersionMismatch,
    apply_pick_place,
    best_correspondence,
    completion_distance,
    evaluate,
    extract_keypoints,
    gaussian_mask,
    generate_dataset,
    init_state,
    oracle_action,
    pixel_to_world,
    read_episode,
    render,
    rollout_success_rate,
    scramble,
    train,
    world_to_pixel,
)

__version__ = "0.1.0"
