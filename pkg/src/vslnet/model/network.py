from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as nx
from ..errors import ConfigError, LabelError, UsageError
from . import blocks
from .blocks import subgroup
from .config import ModelConfig


@dataclass
class ModelOutput:
    p_start: nx.Tensor
    p_end: nx.Tensor
    logits_start: nx.Tensor
    logits_end: nx.Tensor
    similarity: nx.Tensor | None
    highlight: nx.Tensor | None = None
    mask: np.ndarray | None = None


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def parameter_shapes(cfg: ModelConfig) -> dict:
    """Ordered name -> shape for every learned tensor; a pure function of the config."""
    d, k = cfg.hidden, cfg.kernel_size
    shapes = {
        "proj_v.w": (cfg.video_dim, d),
        "proj_v.b": (d,),
        "proj_q.w": (cfg.query_dim, d),
        "proj_q.b": (d,),
    }
    if cfg.encoder == "cmf":
        for i in range(cfg.conv_layers):
            shapes[f"encoder.conv{i}.ln.g"] = (d,)
            shapes[f"encoder.conv{i}.ln.b"] = (d,)
            shapes[f"encoder.conv{i}.k"] = (k, d, d)
            shapes[f"encoder.conv{i}.b"] = (d,)
        shapes["encoder.attn_ln.g"] = (d,)
        shapes["encoder.attn_ln.b"] = (d,)
        for name in ("q", "k", "v", "o"):
            shapes[f"encoder.attn.w{name}"] = (d, d)
            shapes[f"encoder.attn.b{name}"] = (d,)
        shapes["encoder.ffn_ln.g"] = (d,)
        shapes["encoder.ffn_ln.b"] = (d,)
        shapes["encoder.ffn.w"] = (d, d)
        shapes["encoder.ffn.b"] = (d,)
    else:
        h = d // 2
        for side in ("fwd", "bwd"):
            shapes[f"encoder.{side}.w"] = (d, 4 * h)
            shapes[f"encoder.{side}.u"] = (h, 4 * h)
            shapes[f"encoder.{side}.b"] = (4 * h,)
    if cfg.attention == "cqa":
        shapes["cqa.w_v"] = (d, 1)
        shapes["cqa.w_q"] = (d, 1)
        shapes["cqa.w_m"] = (d,)
        shapes["cqa.ffn.w"] = (4 * d, d)
        shapes["cqa.ffn.b"] = (d,)
    else:
        shapes["cat.proj.w"] = (2 * d, d)
        shapes["cat.proj.b"] = (d,)
    d_f = d
    if cfg.variant == "net":
        shapes["qgh.attn.w"] = (d, d)
        shapes["qgh.attn.b"] = (d,)
        shapes["qgh.attn.v"] = (d, 1)
        shapes["qgh.conv.k"] = (cfg.highlight_kernel, 2 * d, 1)
        shapes["qgh.conv.b"] = (1,)
        d_f = 2 * d
    shapes["pred.start.w"] = (d_f, 4 * d)
    shapes["pred.start.u"] = (d, 4 * d)
    shapes["pred.start.b"] = (4 * d,)
    shapes["pred.end.w"] = (d, 4 * d)
    shapes["pred.end.u"] = (d, 4 * d)
    shapes["pred.end.b"] = (4 * d,)
    shapes["pred.start_head.w"] = (d + d_f, 1)
    shapes["pred.start_head.b"] = (1,)
    shapes["pred.end_head.w"] = (d + d_f, 1)
    shapes["pred.end_head.b"] = (1,)
    return shapes


_LSTM_BIASES = ("pred.start.b", "pred.end.b", "encoder.fwd.b", "encoder.bwd.b")


def init_parameters(cfg: ModelConfig, rng) -> dict:
    """Fan-in scaled uniform weights, zero biases, unit norm gains, forget-gate bias 1."""
    params = {}
    for name, shape in parameter_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            value = np.ones(shape)
        elif leaf.startswith("b"):
            value = np.zeros(shape)
            if name in _LSTM_BIASES:
                h = shape[0] // 4
                value[h : 2 * h] = 1.0
        elif leaf == "u":
            value = rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(shape[0])
        elif leaf == "k":
            value = _uniform(rng, shape, shape[0] * shape[1])
        else:
            value = _uniform(rng, shape, shape[0])
        params[name] = nx.Tensor(value, requires_grad=True, name=name)
    return params


class VSLModel:
    """VSLBase / VSLNet over a frozen embedding table."""

    def __init__(self, cfg: ModelConfig, embeddings: np.ndarray, rng=None, params=None):
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.ndim != 2 or embeddings.shape[1] != cfg.query_dim:
            raise ConfigError(
                f"embedding width {embeddings.shape} does not match query_dim={cfg.query_dim}"
            )
        self.cfg = cfg
        self.embeddings = embeddings
        if params is None:
            params = init_parameters(cfg, rng if rng is not None else np.random.default_rng(0))
        self.params = params

    def parameters(self):
        return list(self.params.values())

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def group(self, prefix):
        return subgroup(self.params, prefix)

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict):
        for k, v in state.items():
            self.params[k].data[...] = v

    def encode(self, x, mask, rng=None, training=False):
        if self.cfg.encoder == "cmf":
            return blocks.feature_encoder(x, mask, self.group("encoder."), self.cfg, rng, training)
        return blocks.recurrent_encoder(x, mask, self.group("encoder."))

    def forward(self, features, v_mask, token_ids, q_mask, training=False, rng=None) -> ModelOutput:
        cfg = self.cfg
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 3 or features.shape[-1] != cfg.video_dim:
            raise ConfigError(f"features {features.shape} do not match video_dim={cfg.video_dim}")
        if training and cfg.dropout > 0 and rng is None:
            raise UsageError("training forward with dropout needs an rng")
        v_mask = np.asarray(v_mask, dtype=bool)
        q_mask = np.asarray(q_mask, dtype=bool)
        q_vec = self.embeddings[np.asarray(token_ids)]
        v, q = blocks.project_inputs(features, q_vec, self.params)
        v = self.encode(v, v_mask, rng, training)
        q = self.encode(q, q_mask, rng, training)
        if cfg.attention == "cqa":
            vq, sim = blocks.context_query_attention(
                v, q, v_mask, q_mask, self.group("cqa."), cfg, rng, training
            )
        else:
            sim = None
            cat = blocks.cat_attention(v, q, q_mask)
            vq = nx.linear(cat, self.params["cat.proj.w"], self.params["cat.proj.b"])
            vq = nx.mul(nx.dropout(vq, cfg.dropout, rng, training), v_mask[..., None].astype(float))
        s_h = None
        if cfg.variant == "net":
            h_q = blocks.sentence_representation(q, q_mask, self.group("qgh.attn."))
            s_h, vq = blocks.query_guided_highlighting(vq, h_q, v_mask, self.group("qgh."))
        logit_s, logit_e = blocks.conditioned_span_predictor(vq, v_mask, self.group("pred."))
        p_s = nx.softmax(logit_s, axis=-1, mask=v_mask)
        p_e = nx.softmax(logit_e, axis=-1, mask=v_mask)
        return ModelOutput(p_s, p_e, logit_s, logit_e, sim, s_h, v_mask)

    def forward_batch(self, batch, training=False, rng=None) -> ModelOutput:
        return self.forward(
            batch.features, batch.feature_mask, batch.token_ids, batch.token_mask, training, rng
        )


def span_loss(p_start, p_end, y_start, y_end, mask=None):
    """Mean of the start and end cross-entropies."""
    if mask is not None:
        rows = np.asarray(mask, dtype=bool).reshape(-1, np.shape(mask)[-1])
        for labels in (y_start, y_end):
            lab = np.asarray(labels).reshape(-1)
            if np.any(lab < 0) or np.any(lab >= rows.shape[1]):
                raise IndexError("span label out of range")
            if not rows[np.arange(lab.size), lab].all():
                raise LabelError("span label points at a padded position")
    ce_s = nx.cross_entropy(p_start, y_start)
    ce_e = nx.cross_entropy(p_end, y_end)
    return nx.mul(nx.add(ce_s, ce_e), 0.5)


def total_loss(output: ModelOutput, y_start, y_end, y_high=None, variant="net"):
    loss = span_loss(output.p_start, output.p_end, y_start, y_end, output.mask)
    if variant == "base":
        return loss
    if y_high is None or output.highlight is None:
        raise UsageError("VSLNet loss needs highlight scores and highlight labels")
    return nx.add(loss, nx.binary_cross_entropy(output.highlight, y_high, output.mask))
