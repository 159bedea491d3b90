"""Low-bit fixed-point quantization of feed-forward networks with
sensitivity-ordered, gradient-free neuroevolution fine-tuning."""

from .errors import (
    ConfigError,
    ContainerFormatError,
    DatasetFormatError,
    DimensionError,
    EvaluationError,
    ModelValidationError,
    QuantevoError,
    TruncatedBlobError,
)
from .evolution import (
    Candidate,
    IterationRecord,
    MutationConfig,
    RankEntry,
    SensitivityRanking,
    finetune_layer,
    finetune_model,
    mutate,
    sample_mask,
    sample_steps,
    sensitivity_rank,
    spawn_rng,
)
from .metrics import EvalReport, evaluate, make_evaluator, metric_value
from .model_io import (
    DatasetHandle,
    load_csv,
    load_idx,
    load_model,
    load_schemes,
    make_dataset,
    make_teacher_fixture,
    save_csv_dataset,
    save_model,
    save_schemes,
)
from .netgraph import (
    ComplexityReport,
    LayerSpec,
    Model,
    complexity,
    conv,
    cycle_ratio,
    dense,
    flatten_layer,
    forward,
    maxpool_layer,
    relu_layer,
    set_layer_weights,
)
from .quantizer import (
    QuantScheme,
    QuantizedLayer,
    clamp_to_range,
    derive_scheme,
    quantize,
    quantize_model,
)
from .tensor_ops import Tensor, add_bias, conv2d, flatten, matmul, maxpool2d, relu

__version__ = "0.1.0"
