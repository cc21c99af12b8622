"""Lake prompt benchmark synthesis and prompt-enhanced segmentation."""

from ._core import (
    ContractError,
    FormatError,
    Model,
    NumericError,
    build_benchmark,
    close,
    compute_metrics,
    dbscan,
    dilate,
    erode,
    fill_contours,
    gen_box,
    gen_center_points,
    gen_filled_mask,
    gen_random_points,
    gen_unfilled_mask,
    load_mask,
    metrics_from_confusion,
    save_mask,
    synth,
    trace_contours,
)

__all__ = [
    "ContractError",
    "FormatError",
    "Model",
    "NumericError",
    "build_benchmark",
    "close",
    "compute_metrics",
    "dbscan",
    "dilate",
    "erode",
    "fill_contours",
    "gen_box",
    "gen_center_points",
    "gen_filled_mask",
    "gen_random_points",
    "gen_unfilled_mask",
    "load_mask",
    "metrics_from_confusion",
    "save_mask",
    "synth",
    "trace_contours",
]
