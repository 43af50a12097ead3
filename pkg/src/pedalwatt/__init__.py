"""Per-stroke cycling power estimation from cleat force and IMU signals.

The package covers the whole path from raw samples to a watt figure:
synthetic rides with known power, streaming stroke segmentation and
featurisation, a small dense regressor trained with plain SGD, its int8
post-training quantisation with an integer-only kernel, and the accuracy
and latency harnesses around them.
"""

__version__ = "0.1.0"

from .errors import (
    AlignmentError,
    BadMagicError,
    BenchmarkError,
    CalibrationError,
    ChecksumError,
    ConfigurationError,
    InvalidSegmentError,
    ModelFormatError,
    NumericError,
    ParseError,
    PedalwattError,
    ShapeError,
    TimestampError,
    TrainingError,
    TruncatedModelError,
)
from .stream import SAMPLE_RATE_HZ, SensorSample, SensorStream
from .features import (
    NormalizationBounds,
    StrokeFeatures,
    StrokeSegment,
    ValidationCriteria,
    extract_features,
    featurize,
    normalize,
    resample_to_length,
    validate_candidate,
)
from .pipeline import (
    LowpassFilter,
    PipelineConfig,
    RingBuffer,
    Segmenter,
    StrokePipeline,
    lowpass_filter,
    process_stream,
    segment_stream,
)
from .peaks import detect_peaks
from .model import DenseModel, forward_f32, neuron_count, param_count, predict
from .quant import QuantizedModel, forward_i8, predict_i8, quantize_model
from .modelio import deserialize_model, load_model, save_model, serialize_model
from .train import TrainConfig, TrainHistory, backprop_gradients, early_stop_check, lr_schedule, split_dataset, train
from .synth import (
    GroundTruthStroke,
    NoiseLevels,
    ReferencePowerSample,
    RideProfile,
    generate_ride,
    protocol_profile,
    reference_meter,
)
from .dataset import LabeledStroke, align_streams, balance_histogram, label_ride, read_dataset, write_dataset
from .metrics import EvalReport, avg_power_diff, evaluate, mae
from .bench import LatencyReport, bench_latency
