from .blocks import (
    cat_attention,
    conditioned_span_predictor,
    context_query_attention,
    feature_encoder,
    positional_encoding,
    project_inputs,
    query_guided_highlighting,
    recurrent_encoder,
    sentence_representation,
    similarity,
)
from .checkpoint import load_checkpoint, model_from_checkpoint, read_checkpoint, save_checkpoint
from .config import ATTENTIONS, ENCODERS, INFINITY, VARIANTS, ModelConfig, format_alpha, parse_alpha
from .highlight import highlight_labels
from .network import ModelOutput, VSLModel, init_parameters, parameter_shapes, span_loss, total_loss
