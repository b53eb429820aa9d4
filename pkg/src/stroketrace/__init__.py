"""stroketrace: recover ordered, directed stroke trajectories from bitmaps."""

from .binarize import HistogramReport, NoSecondPeakError, binarize, find_two_peaks, histogram
from .metrics import EvalReport, MatchedPair, direction_agreement, dtw, evaluate, match_strokes
from .raster import (
    BinaryImage,
    GrayImage,
    ImageFormatError,
    load_image,
    median_filter_5x5,
    save_image,
)
from .synth import CorpusParams, ScriptSpec, SpecValidationError, corpus, rasterize
from .trace_model import (
    OnlineTrace,
    Stroke,
    TraceSchemaError,
    from_json,
    resample,
    to_csv,
    to_json,
    to_svg,
)
from .tracer import (
    TraversalMask,
    TruckGeometry,
    TruckState,
    derive_geometry,
    find_start,
    initial_heading,
    steer_step,
    trace_all,
    trace_stroke,
    wheel_balance,
)
from .width import (
    EmptySignatureError,
    SectionalWidths,
    WidthEstimate,
    WidthMode,
    average_width,
    sectional_widths,
)

__version__ = "0.1.0"
