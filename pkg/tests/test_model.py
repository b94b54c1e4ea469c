import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vslnet import numerics as nx
from vslnet.errors import ConfigError, LabelError, UsageError
from vslnet.model import (
    INFINITY,
    ModelConfig,
    ModelOutput,
    VSLModel,
    cat_attention,
    conditioned_span_predictor,
    context_query_attention,
    highlight_labels,
    load_checkpoint,
    model_from_checkpoint,
    parameter_shapes,
    project_inputs,
    query_guided_highlighting,
    recurrent_encoder,
    save_checkpoint,
    sentence_representation,
    span_loss,
    total_loss,
)
from vslnet.model.config import format_alpha, parse_alpha
from vslnet.numerics import Tensor

D = 8


def tiny_cfg(**kw):
    base = dict(video_dim=5, query_dim=4, hidden=D, heads=2, conv_layers=2, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


def tiny_model(seed=0, **kw):
    cfg = tiny_cfg(**kw)
    emb = np.random.default_rng(99).normal(size=(12, cfg.query_dim))
    emb[0] = 0
    return VSLModel(cfg, emb, np.random.default_rng(seed))


def random_inputs(rng, b=3, n_max=7, m_max=4, d_v=5, vocab=12):
    lengths = rng.integers(1, n_max + 1, size=b)
    lengths[0] = n_max
    q_lengths = rng.integers(1, m_max + 1, size=b)
    q_lengths[0] = m_max
    v_mask = np.arange(n_max)[None] < lengths[:, None]
    q_mask = np.arange(m_max)[None] < q_lengths[:, None]
    feats = rng.normal(size=(b, n_max, d_v)) * v_mask[..., None]
    toks = rng.integers(2, vocab, size=(b, m_max)) * q_mask
    return feats, v_mask, toks, q_mask


# -- config ------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(hidden=10, heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(alpha=-0.1)
    with pytest.raises(ConfigError):
        ModelConfig(variant="huge")
    with pytest.raises(ConfigError):
        ModelConfig(kernel_size=6)
    assert ModelConfig(alpha="inf").alpha == INFINITY


def test_alpha_text_round_trip():
    assert format_alpha(parse_alpha("inf")) == "inf"
    assert parse_alpha(format_alpha(0.05)) == 0.05
    assert ModelConfig.from_dict(ModelConfig(alpha=math.inf).to_dict()).alpha == math.inf


def test_parameter_count_pure_and_variant_specific():
    base, net = ModelConfig(video_dim=64, variant="base"), ModelConfig(video_dim=64, variant="net")
    assert parameter_shapes(base) == parameter_shapes(ModelConfig(video_dim=64, variant="base"))
    assert not any(k.startswith("qgh.") for k in parameter_shapes(base))
    assert any(k.startswith("qgh.") for k in parameter_shapes(net))
    count = lambda cfg: sum(math.prod(s) for s in parameter_shapes(cfg).values())
    assert count(base) == 919_938
    assert count(net) == 1_002_627


def test_initialization():
    m = tiny_model(encoder="recurrent")
    for name, p in m.params.items():
        assert np.all(np.isfinite(p.data))
        if name.endswith(".b") and name.startswith(("pred.start.", "pred.end.", "encoder.fwd.", "encoder.bwd.")):
            h = p.shape[0] // 4
            assert np.all(p.data[h : 2 * h] == 1.0) and np.all(p.data[:h] == 0.0)
        elif name.endswith(".ln.g"):
            assert np.all(p.data == 1.0)
    assert np.all(m.params["proj_v.b"].data == 0)


# -- projection and encoders -------------------------------------------------


def test_project_inputs_examples():
    rng = np.random.default_rng(0)
    v, q = rng.normal(size=(1, 3, D)), rng.normal(size=(1, 2, 6))
    params = {"proj_v.w": np.eye(D), "proj_v.b": np.zeros(D), "proj_q.w": np.zeros((6, D)), "proj_q.b": np.zeros(D)}
    pv, pq = project_inputs(v, q, {k: Tensor(a) for k, a in params.items()})
    np.testing.assert_array_equal(pv.data, v)
    assert np.all(pq.data == 0)


def test_default_hidden_shapes():
    m = VSLModel(ModelConfig(video_dim=6, query_dim=5, dropout=0.0), np.zeros((3, 5)), np.random.default_rng(0))
    v, q = project_inputs(np.ones((1, 7, 6)), np.ones((1, 2, 5)), m.params)
    assert v.shape == (1, 7, 128) and q.shape == (1, 2, 128)


def test_feature_encoder_shape_and_determinism():
    m = tiny_model()
    x = np.random.default_rng(1).normal(size=(2, 6, D))
    mask = np.array([[True] * 6, [True] * 4 + [False] * 2])
    a = m.encode(Tensor(x), mask).data
    b = m.encode(Tensor(x), mask).data
    assert a.shape == x.shape
    np.testing.assert_array_equal(a, b)
    assert np.all(a[1, 4:] == 0)


def test_dropout_changes_training_pass_only():
    m = tiny_model(dropout=0.3)
    x = Tensor(np.random.default_rng(1).normal(size=(1, 6, D)))
    mask = np.ones((1, 6), bool)
    train = m.encode(x, mask, np.random.default_rng(0), training=True).data
    assert not np.allclose(train, m.encode(x, mask).data)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["cmf", "recurrent"]), st.sampled_from(["cqa", "cat"]), st.integers(0, 2**31 - 1))
def test_encoder_parameters_shared(encoder, attention, seed):
    m = tiny_model(seed % 1000, encoder=encoder, attention=attention)
    calls = []
    orig = m.encode

    def spy(x, mask, rng=None, training=False):
        calls.append({k: id(v) for k, v in m.group("encoder.").items()})
        return orig(x, mask, rng, training)

    m.encode = spy
    feats, vm, toks, qm = random_inputs(np.random.default_rng(seed))
    m.forward(feats, vm, toks, qm)
    assert len(calls) == 2 and calls[0] == calls[1]
    enc_names = [k for k in m.params if k.startswith("encoder.")]
    assert not any(("video" in k) or ("query" in k) for k in enc_names)


def test_recurrent_encoder_reversal_swaps_halves():
    rng = np.random.default_rng(5)
    h = D // 2
    w, u, b = rng.normal(size=(D, 4 * h)), rng.normal(size=(h, 4 * h)), rng.normal(size=4 * h)
    params = {f"{side}.{k}": Tensor(a) for side in ("fwd", "bwd") for k, a in (("w", w), ("u", u), ("b", b))}
    x = rng.normal(size=(1, 5, D))
    mask = np.ones((1, 5), bool)
    out = recurrent_encoder(Tensor(x), mask, params).data
    rev = recurrent_encoder(Tensor(x[:, ::-1]), mask, params).data[:, ::-1]
    np.testing.assert_allclose(rev[..., :h], out[..., h:])
    np.testing.assert_allclose(rev[..., h:], out[..., :h])


def test_recurrent_forward_half_ignores_tail():
    m = tiny_model(encoder="recurrent")
    rng = np.random.default_rng(6)
    x = rng.normal(size=(1, 6, D))
    mask = np.array([[True] * 4 + [False] * 2])
    y = x.copy()
    y[0, 4:] = 50.0
    a = m.encode(Tensor(x), mask).data
    b = m.encode(Tensor(y), mask).data
    assert a.shape == x.shape
    np.testing.assert_array_equal(a[0, :4], b[0, :4])


# -- attention ---------------------------------------------------------------


def _cqa_params(rng, select=None):
    p = {"w_v": rng.normal(size=(D, 1)), "w_q": rng.normal(size=(D, 1)), "w_m": rng.normal(size=D)}
    if select is None:
        p["ffn.w"] = rng.normal(size=(4 * D, D))
    else:
        p["ffn.w"] = np.zeros((4 * D, D))
        p["ffn.w"][select * D : (select + 1) * D] = np.eye(D)
    p["ffn.b"] = np.zeros(D)
    return {k: Tensor(v) for k, v in p.items()}


def test_cqa_single_query_token():
    rng = np.random.default_rng(7)
    v, q = rng.normal(size=(1, 4, D)), rng.normal(size=(1, 1, D))
    out, s = context_query_attention(Tensor(v), Tensor(q), np.ones((1, 4), bool), np.ones((1, 1), bool),
                                     _cqa_params(rng, select=1), tiny_cfg())
    np.testing.assert_allclose(out.data[0], np.tile(q[0, 0], (4, 1)))
    assert s.shape == (1, 4, 1)


def _softmax(x, axis):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def test_cqa_matches_matrix_oracle():
    rng = np.random.default_rng(8)
    v = np.ones((1, 2, D))
    q = rng.normal(size=(1, 2, D))
    masks = np.ones((1, 2), bool), np.ones((1, 2), bool)
    cfg = tiny_cfg()
    a_out, s = context_query_attention(Tensor(v), Tensor(q), *masks, _cqa_params(np.random.default_rng(1), 1), cfg)
    b_out, _ = context_query_attention(Tensor(v), Tensor(q), *masks, _cqa_params(np.random.default_rng(1), 3), cfg)
    S = s.data[0]
    w = {k: p.data for k, p in _cqa_params(np.random.default_rng(1)).items()}
    for i in range(2):
        for j in range(2):
            expect = v[0, i] @ w["w_v"][:, 0] + q[0, j] @ w["w_q"][:, 0] + (v[0, i] * q[0, j]) @ w["w_m"]
            assert S[i, j] == pytest.approx(expect)
    s_r, s_c = _softmax(S, 1), _softmax(S, 0)
    np.testing.assert_allclose(s_r.sum(1), 1.0)
    np.testing.assert_allclose(a_out.data[0], s_r @ q[0])
    np.testing.assert_allclose(b_out.data[0], s_r @ s_c.T @ v[0])


def test_cat_attention_examples():
    rng = np.random.default_rng(9)
    v, q = rng.normal(size=(1, 3, D)), rng.normal(size=(1, 1, D))
    out = cat_attention(Tensor(v), Tensor(q), np.ones((1, 1), bool)).data
    assert out.shape == (1, 3, 2 * D)
    np.testing.assert_array_equal(out[0, :, D:], np.tile(q[0, 0], (3, 1)))
    c = rng.normal(size=D)
    q2 = np.tile(c, (1, 4, 1))
    q2[0, 3] = 100.0  # padded, must be ignored
    out = cat_attention(Tensor(v), Tensor(q2), np.array([[True, True, True, False]])).data
    np.testing.assert_array_equal(out[0, 0, D:], c)


def test_cat_model_forward():
    m = tiny_model(attention="cat", encoder="recurrent")
    out = m.forward(*random_inputs(np.random.default_rng(0)))
    assert out.similarity is None
    assert out.p_start.shape == (3, 7)


# -- sentence representation and highlighting --------------------------------


def _sent_params(rng):
    return {"w": Tensor(rng.normal(size=(D, D))), "b": Tensor(rng.normal(size=D)), "v": Tensor(rng.normal(size=(D, 1)))}


def test_sentence_representation_examples():
    rng = np.random.default_rng(10)
    p = _sent_params(rng)
    q1 = rng.normal(size=(1, 1, D))
    np.testing.assert_allclose(sentence_representation(Tensor(q1), np.ones((1, 1), bool), p).data[0], q1[0, 0])
    row = rng.normal(size=D)
    same = np.tile(row, (1, 4, 1))
    np.testing.assert_allclose(sentence_representation(Tensor(same), np.ones((1, 4), bool), p).data[0], row)
    q = rng.normal(size=(2, 5, D))
    mask = np.array([[True] * 5, [True, True, False, False, False]])
    _, w = sentence_representation(Tensor(q), mask, p, return_weights=True)
    np.testing.assert_allclose(w.data.sum(1), 1.0)
    assert np.all(w.data[1, 2:] == 0)


def test_highlight_label_examples():
    np.testing.assert_array_equal(highlight_labels((4, 6), 10, 0.5), [0, 0, 0, 1, 1, 1, 1, 1, 0, 0])
    np.testing.assert_array_equal(highlight_labels((4, 6), 10, 0.0), [0, 0, 0, 0, 1, 1, 1, 0, 0, 0])
    np.testing.assert_array_equal(highlight_labels((4, 6), 10, INFINITY), np.ones(10))
    np.testing.assert_array_equal(highlight_labels((0, 1), 4, 10.0), np.ones(4))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 80), st.data(), st.floats(0, 5), st.floats(0, 5))
def test_highlight_monotone_and_covering(n, data, a1, a2):
    a_s = data.draw(st.integers(0, n - 1))
    a_e = data.draw(st.integers(a_s, n - 1))
    lo, hi = sorted((a1, a2))
    y_lo, y_hi = highlight_labels((a_s, a_e), n, lo), highlight_labels((a_s, a_e), n, hi)
    assert np.all(y_lo <= y_hi)
    assert np.all(y_lo[a_s : a_e + 1] == 1)


def test_qgh_zero_conv_gives_half():
    rng = np.random.default_rng(11)
    vq, hq = rng.normal(size=(1, 3, D)), rng.normal(size=(1, D))
    params = {"conv.k": Tensor(np.zeros((1, 2 * D, 1))), "conv.b": Tensor(np.zeros(1))}
    s_h, out = query_guided_highlighting(Tensor(vq), Tensor(hq), np.ones((1, 3), bool), params)
    np.testing.assert_array_equal(s_h.data, 0.5)
    vbar = np.concatenate([vq, np.tile(hq[:, None], (1, 3, 1))], axis=-1)
    np.testing.assert_allclose(out.data, 0.5 * vbar)


def test_qgh_matches_scalar_oracle():
    rng = np.random.default_rng(12)
    vq, hq = rng.normal(size=(1, 3, D)), rng.normal(size=(1, D))
    k, b = rng.normal(size=(1, 2 * D, 1)), rng.normal(size=1)
    s_h, out = query_guided_highlighting(Tensor(vq), Tensor(hq), np.ones((1, 3), bool),
                                         {"conv.k": Tensor(k), "conv.b": Tensor(b)})
    for i in range(3):
        row = list(vq[0, i]) + list(hq[0])
        z = sum(row[c] * k[0, c, 0] for c in range(2 * D)) + b[0]
        s = 1.0 / (1.0 + math.exp(-z))
        assert s_h.data[0, i] == pytest.approx(s)
        assert 0 < s < 1
        np.testing.assert_allclose(out.data[0, i], [s * r for r in row])
        assert np.linalg.norm(out.data[0, i]) <= np.linalg.norm(row)


# -- span predictor and losses -----------------------------------------------


def _lstm_oracle(xs, w, u, b):
    h_dim = u.shape[0]
    h, c, out = np.zeros(h_dim), np.zeros(h_dim), []
    sig = lambda z: 1 / (1 + np.exp(-z))
    for x in xs:
        z = x @ w + h @ u + b
        i, f, g, o = (z[k * h_dim : (k + 1) * h_dim] for k in range(4))
        c = sig(f) * c + sig(i) * np.tanh(g)
        h = sig(o) * np.tanh(c)
        out.append(h)
    return np.array(out)


def test_predictor_matches_unrolled_recurrence():
    rng = np.random.default_rng(13)
    d_f, h = 3, 2
    p = {
        "start.w": rng.normal(size=(d_f, 4 * h)), "start.u": rng.normal(size=(h, 4 * h)), "start.b": rng.normal(size=4 * h),
        "end.w": rng.normal(size=(h, 4 * h)), "end.u": rng.normal(size=(h, 4 * h)), "end.b": rng.normal(size=4 * h),
        "start_head.w": rng.normal(size=(h + d_f, 1)), "start_head.b": rng.normal(size=1),
        "end_head.w": rng.normal(size=(h + d_f, 1)), "end_head.b": rng.normal(size=1),
    }
    x = rng.normal(size=(1, 2, d_f))
    ls, le = conditioned_span_predictor(Tensor(x), np.ones((1, 2), bool), {k: Tensor(v) for k, v in p.items()})
    hs = _lstm_oracle(x[0], p["start.w"], p["start.u"], p["start.b"])
    he = _lstm_oracle(hs, p["end.w"], p["end.u"], p["end.b"])
    np.testing.assert_allclose(ls.data[0], (np.hstack([hs, x[0]]) @ p["start_head.w"])[:, 0] + p["start_head.b"])
    np.testing.assert_allclose(le.data[0], (np.hstack([he, x[0]]) @ p["end_head.w"])[:, 0] + p["end_head.b"])


def test_predictor_masks_tail():
    m = tiny_model()
    feats, vm, toks, qm = random_inputs(np.random.default_rng(1))
    out = m.forward(feats, vm, toks, qm)
    assert out.logits_start.shape == out.logits_end.shape == vm.shape
    assert np.all(out.logits_start.data[~vm] <= -1e29)
    assert np.all(out.p_end.data[~vm] == 0)


def test_span_loss_examples():
    onehot = np.eye(5)[[2]]
    assert span_loss(Tensor(onehot), Tensor(onehot), np.array([2]), np.array([2])).item() == 0.0
    uni = np.full((1, 8), 1 / 8)
    assert span_loss(Tensor(uni), Tensor(uni), np.array([1]), np.array([6])).item() == pytest.approx(math.log(8))
    rng = np.random.default_rng(2)
    ps, pe = (rng.dirichlet(np.ones(6), size=2) for _ in range(2))
    ys, ye = np.array([0, 3]), np.array([4, 5])
    ce = lambda p, y: nx.cross_entropy(Tensor(p), y).item()
    assert span_loss(Tensor(ps), Tensor(pe), ys, ye).item() == pytest.approx(0.5 * (ce(ps, ys) + ce(pe, ye)))


def test_span_loss_label_on_padding():
    p = np.array([[0.5, 0.5, 0.0]])
    with pytest.raises(LabelError):
        span_loss(Tensor(p), Tensor(p), np.array([2]), np.array([2]), mask=np.array([[True, True, False]]))


def test_total_loss_variants():
    m = tiny_model()
    feats, vm, toks, qm = random_inputs(np.random.default_rng(3))
    out = m.forward(feats, vm, toks, qm)
    ys = np.zeros(3, dtype=int)
    ye = vm.sum(1) - 1
    y_h = np.stack([highlight_labels((0, e), vm.shape[1], 0.1) * vm[i] for i, e in enumerate(ye)])
    span = span_loss(out.p_start, out.p_end, ys, ye, vm).item()
    assert total_loss(out, ys, ye, None, "base").item() == span
    assert total_loss(out, ys, ye, y_h, "net").item() >= span
    perfect = ModelOutput(out.p_start, out.p_end, out.logits_start, out.logits_end, None, Tensor(y_h), vm)
    assert total_loss(perfect, ys, ye, y_h, "net").item() == pytest.approx(span, abs=1e-10)
    with pytest.raises(UsageError):
        total_loss(out, ys, ye, None, "net")


# -- forward contract and invariants -----------------------------------------


def test_forward_contract():
    feats, vm, toks, qm = random_inputs(np.random.default_rng(4))
    base = tiny_model(variant="base").forward(feats, vm, toks, qm)
    net = tiny_model(variant="net").forward(feats, vm, toks, qm)
    assert base.highlight is None
    assert net.highlight.shape == vm.shape
    assert np.all((net.highlight.data > 0) & (net.highlight.data < 1))
    for out in (base, net):
        np.testing.assert_allclose(out.p_start.data.sum(1), 1.0, atol=1e-12)
        assert out.similarity.shape == (3, 7, 4)


def test_forward_rejects_wrong_feature_width():
    with pytest.raises(ConfigError):
        tiny_model().forward(np.zeros((1, 3, 6)), np.ones((1, 3), bool), np.ones((1, 2), int), np.ones((1, 2), bool))


MODEL_SETTINGS = dict(max_examples=100, deadline=None)
arch = st.tuples(st.sampled_from(["base", "net"]), st.sampled_from(["cmf", "recurrent"]), st.sampled_from(["cqa", "cat"]))


@settings(**MODEL_SETTINGS)
@given(arch, st.integers(0, 2**31 - 1))
def test_masked_positions_do_not_influence(a, seed):
    variant, encoder, attention = a
    m = tiny_model(seed % 97, variant=variant, encoder=encoder, attention=attention)
    rng = np.random.default_rng(seed)
    feats, vm, toks, qm = random_inputs(rng)
    ref = m.forward(feats, vm, toks, qm)
    feats2 = feats.copy()
    feats2[~vm] = rng.normal(scale=10.0, size=feats2[~vm].shape)
    toks2 = toks.copy()
    toks2[~qm] = rng.integers(0, 12, size=toks2[~qm].shape)
    alt = m.forward(feats2, vm, toks2, qm)
    np.testing.assert_allclose(alt.p_start.data[vm], ref.p_start.data[vm], rtol=0, atol=1e-12)
    np.testing.assert_allclose(alt.p_end.data[vm], ref.p_end.data[vm], rtol=0, atol=1e-12)
    assert np.all(alt.p_start.data[~vm] == 0) and np.all(alt.p_end.data[~vm] == 0)


@settings(**MODEL_SETTINGS)
@given(arch, st.integers(0, 2**31 - 1))
def test_probabilities_normalized(a, seed):
    variant, encoder, attention = a
    m = tiny_model(seed % 89, variant=variant, encoder=encoder, attention=attention)
    out = m.forward(*random_inputs(np.random.default_rng(seed)))
    for p in (out.p_start.data, out.p_end.data):
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    if variant == "net":
        assert np.all((out.highlight.data > 0) & (out.highlight.data < 1))


def test_full_loss_gradient_small_instance():
    rng = np.random.default_rng(14)
    m = tiny_model(3, conv_layers=1)
    feats = rng.normal(size=(1, 4, 5))
    vm, qm = np.ones((1, 4), bool), np.ones((1, 3), bool)
    toks = np.array([[2, 5, 7]])
    y_h = highlight_labels((1, 2), 4, 0.1)[None]

    def f():
        return total_loss(m.forward(feats, vm, toks, qm), np.array([1]), np.array([2]), y_h, "net")

    assert nx.finite_difference_check(f, m.params) < 1e-4


# -- checkpoints -------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    m = tiny_model(5)
    path = tmp_path / "m.vslc"
    save_checkpoint(path, m, {"note": 1})
    again = model_from_checkpoint(path, m.embeddings)
    assert again.cfg == m.cfg
    for k, p in m.params.items():
        assert again.params[k].data.tobytes() == p.data.tobytes()
    other = tiny_model(6)
    assert load_checkpoint(path, other) == {"note": 1}
    np.testing.assert_array_equal(other.params["proj_v.w"].data, m.params["proj_v.w"].data)


def test_checkpoint_mismatch(tmp_path):
    path = tmp_path / "m.vslc"
    save_checkpoint(path, tiny_model(variant="net"), None)
    with pytest.raises(ConfigError):
        load_checkpoint(path, tiny_model(variant="base"))


def test_checkpoint_sizes_differ_by_variant(tmp_path):
    save_checkpoint(tmp_path / "b", tiny_model(variant="base"))
    save_checkpoint(tmp_path / "n", tiny_model(variant="net"))
    assert (tmp_path / "b").stat().st_size < (tmp_path / "n").stat().st_size
