"""Black-box saliency generation and causal-metric evaluation bench."""

__version__ = "0.1.0"

from .errors import (
    ContractViolationError,
    EnumerationBoundError,
    FormatError,
    ProtocolError,
    ResourceError,
    TransportError,
    ValidationError,
)
from .images import DatasetHandle, ImageTensor, load_image, save_image, scan_dataset
from .masks import (
    Mask,
    MaskConfig,
    MaskSet,
    empirical_zero_rate,
    enumerate_binary_grids,
    generate_grid,
    generate_mask_set,
    grid_probabilities,
    load_mask_set,
    save_mask_set,
    upsample_mask,
)
from .metrics import (
    EvalReport,
    GameConfig,
    ProbabilityCurve,
    auc,
    deletion_curve,
    insertion_curve,
    rank_pixels,
    run_benchmark,
    write_curve_csv,
)
from .render import export_curve_plot, render_heatmap
from .saliency import (
    SaliencyMap,
    config_digest,
    evaluate_masks,
    exact_necessity,
    load_external_map,
    load_map,
    prediction_shift,
    rise_scores,
    save_map,
    shape_scores,
)
from .scorers import (
    Scorer,
    SyntheticSpec,
    linear_ground_truth,
    linear_logit_scorer,
    linear_softmax_scorer,
    region_indicator,
    region_mean_scorer,
    remote_scorer,
)

__all__ = [
    "ContractViolationError",
    "DatasetHandle",
    "EnumerationBoundError",
    "EvalReport",
    "FormatError",
    "GameConfig",
    "ImageTensor",
    "Mask",
    "MaskConfig",
    "MaskSet",
    "ProbabilityCurve",
    "ProtocolError",
    "ResourceError",
    "SaliencyMap",
    "Scorer",
    "SyntheticSpec",
    "TransportError",
    "ValidationError",
    "auc",
    "config_digest",
    "deletion_curve",
    "empirical_zero_rate",
    "enumerate_binary_grids",
    "evaluate_masks",
    "exact_necessity",
    "export_curve_plot",
    "generate_grid",
    "generate_mask_set",
    "grid_probabilities",
    "insertion_curve",
    "linear_ground_truth",
    "linear_logit_scorer",
    "linear_softmax_scorer",
    "load_external_map",
    "load_image",
    "load_map",
    "load_mask_set",
    "prediction_shift",
    "rank_pixels",
    "region_indicator",
    "region_mean_scorer",
    "remote_scorer",
    "render_heatmap",
    "rise_scores",
    "run_benchmark",
    "save_image",
    "save_map",
    "save_mask_set",
    "scan_dataset",
    "shape_scores",
    "upsample_mask",
    "write_curve_csv",
]
