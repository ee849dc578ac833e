"""Expression-conditioned portrait video diffusion toolkit (C++ core)."""

from ._core import (
    ConfigError,
    CorruptCheckpointError,
    CurationConfig,
    DivergedError,
    DuplicateIdentityError,
    EmptyTrackError,
    Error,
    EvaluationError,
    IncompleteCheckpointError,
    IncompleteInputError,
    InsufficientFramesError,
    InvalidShapeError,
    IoError,
    MalformedManifestError,
    PlacementError,
    RunConfig,
    aed,
    apd,
    blur_score,
    curate_manifest,
    decode,
    encode,
    lmd,
    mae_angular,
    psnr,
    psnr_from_mse,
    read_clip,
    run_cli,
    sample_t,
    ssim,
    synthetic_scene,
    write_clip,
)

__version__ = "0.1.0"
