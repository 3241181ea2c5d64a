"""Low-complexity wavelet image codec with tunable sub-band weights.

The codec splits an image into 10 wavelet sub-bands, truncates coefficient
bitplanes under per-precinct rate control steered by a gain/priority table,
and embeds that table in the bitstream header.  The harness adapts the
table to a target metric and content set with CMA-ES.
"""

from xstw.pixel_io import (
    LabelMap,
    PlanarImage,
    RasterImage,
    load_image,
    load_label_map,
    rgb_to_ycbcr_reversible,
    store_image,
    ycbcr_to_rgb_reversible,
)
from xstw.dwt import (
    SubbandLayout,
    SubbandSet,
    forward_dwt,
    inverse_dwt,
    layout_for,
    synthesis_gain,
)
from xstw.weights import (
    WeightTable,
    default_table,
    parse_config,
    table_to_config,
    table_to_vector,
    vector_to_table,
)
from xstw.codec import (
    Bitstream,
    BitstreamError,
    BudgetError,
    Precinct,
    PrecinctQuant,
    allocate_rate,
    code_precinct,
    decode,
    decode_header,
    dequantize_band,
    encode,
    precinct_cost,
    quantize_band,
    truncation_position,
)
from xstw.cma import CmaConfig, CmaState, ask, default_population, optimize, tell
from xstw.metrics import MetricScore, iou, ms_ssim, psnr
from xstw.harness import (
    Evaluator,
    FitnessSpec,
    FoldPlan,
    RunRecord,
    evaluate_weights,
    external_fitness,
    interpolate_bitrates,
    run_folds,
    run_optimization,
)

__all__ = [
    "LabelMap",
    "PlanarImage",
    "RasterImage",
    "load_image",
    "load_label_map",
    "rgb_to_ycbcr_reversible",
    "store_image",
    "ycbcr_to_rgb_reversible",
    "SubbandLayout",
    "SubbandSet",
    "forward_dwt",
    "inverse_dwt",
    "layout_for",
    "synthesis_gain",
    "WeightTable",
    "default_table",
    "parse_config",
    "table_to_config",
    "table_to_vector",
    "vector_to_table",
    "Bitstream",
    "BitstreamError",
    "BudgetError",
    "Precinct",
    "PrecinctQuant",
    "allocate_rate",
    "code_precinct",
    "decode",
    "decode_header",
    "dequantize_band",
    "encode",
    "precinct_cost",
    "quantize_band",
    "truncation_position",
    "CmaConfig",
    "CmaState",
    "ask",
    "default_population",
    "optimize",
    "tell",
    "MetricScore",
    "iou",
    "ms_ssim",
    "psnr",
    "Evaluator",
    "FitnessSpec",
    "FoldPlan",
    "RunRecord",
    "evaluate_weights",
    "external_fitness",
    "interpolate_bitrates",
    "run_folds",
    "run_optimization",
]
