"""Python bindings for the PIDNet C++ core."""

from ._pidnet import (  # noqa: F401
    DivergenceError,
    FormatError,
    IoError,
    Model,
    ShapeError,
    bas_loss,
    boundary_f_score,
    cross_entropy,
    extract_boundary_gt,
    frequency_response,
    from_bytes,
    gen_scene,
    load,
    locality_ratio,
    miou,
    ohem_cross_entropy,
    poly_lr,
    run_cli,
    simulate_step,
    train_desk,
    weighted_bce,
)

__version__ = "0.1.0"
