"""Forward/backward correctness of the degradation network."""

import numpy as np
import pytest

from tests.helpers import frames_of, random_batch, random_config, random_params


def _relu_masks(batch, config, params):
    from ddn.model import GradTape, forward_batch

    tape = GradTape()
    forward_batch(batch, config, params, tape)
    masks = []
    if config.pooling == "attention":
        masks.append(tape["a"] > 0)
    if config.head_activation == "relu":
        masks.append(tape["o_pre"] > 0)
    return masks


def _same_masks(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def test_parameter_gradients_match_finite_differences():
    """100 random small configs: analytic gradients agree with central differences.

    Relative error < 1e-4, or absolute error < 1e-8 where the gradient is near zero.
    """
    from ddn.model import DdnParams, loss_batch, value_and_grad

    rng = np.random.default_rng(2024)
    h = 1e-5
    checked = 0
    for trial in range(100):
        head = "relu" if trial % 4 == 3 else "none"
        config = random_config(rng, pooling="attention", head_activation=head)
        params = random_params(config, rng)
        batch = random_batch(config, rng, size=int(rng.integers(1, 4)))
        _, grads = value_and_grad(batch, config, params)

        named, named_grads = params.named(), grads.named()
        for name, tensor in named.items():
            flat = list(np.ndindex(tensor.shape))
            if len(flat) > 25:
                picks = rng.choice(len(flat), size=25, replace=False)
                flat = [flat[i] for i in picks]
            for idx in flat:
                plus = {n: t.copy() for n, t in named.items()}
                minus = {n: t.copy() for n, t in named.items()}
                plus[name][idx] += h
                minus[name][idx] -= h
                p_plus, p_minus = DdnParams.from_named(plus), DdnParams.from_named(minus)
                if not _same_masks(_relu_masks(batch, config, p_plus), _relu_masks(batch, config, p_minus)):
                    continue
                numeric = (loss_batch(batch, config, p_plus) - loss_batch(batch, config, p_minus)) / (2 * h)
                analytic = named_grads[name][idx]
                # near-zero gradients: only differencing noise is left
                err = abs(analytic - numeric)
                rel = err / max(abs(analytic), abs(numeric), 1e-300)
                assert err < 1e-8 or rel < 1e-4, f"trial {trial} {name}{idx}: analytic {analytic} numeric {numeric}"
                checked += 1
    assert checked > 1000


def test_mean_pooling_gradients_match_finite_differences():
    """Mean pooling has no attention parameters; their gradients are zero."""
    from ddn.model import DdnParams, loss_batch, value_and_grad

    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(10):
        config = random_config(rng, pooling="mean")
        params = random_params(config, rng)
        batch = random_batch(config, rng, size=3)
        _, grads = value_and_grad(batch, config, params)
        assert not np.any(grads.W_h) and not np.any(grads.W_z)

        named = params.named()
        for name in ("W_e.0", "b_o", "W_q"):
            idx = (0,) * named[name].ndim
            plus = {n: t.copy() for n, t in named.items()}
            minus = {n: t.copy() for n, t in named.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            numeric = (loss_batch(batch, config, DdnParams.from_named(plus))
                       - loss_batch(batch, config, DdnParams.from_named(minus))) / (2 * h)
            assert grads.named()[name][idx] == pytest.approx(numeric, rel=1e-4, abs=1e-9)


def test_input_gradients_cover_reference_and_history():
    """Backward returns gradients for raw reference and history inputs."""
    from ddn.model import FrameBatch, GradTape, backward, loss_batch

    rng = np.random.default_rng(11)
    config = random_config(rng)
    params = random_params(config, rng)
    batch = random_batch(config, rng, size=2)
    tape = GradTape()
    loss_batch(batch, config, params, tape)
    grads = backward(tape)

    h = 1e-6
    ref = [r.copy() for r in batch.reference]
    ref[0][0, 0] += h
    up = loss_batch(FrameBatch(tuple(ref), batch.history, batch.targets), config, params)
    ref[0][0, 0] -= 2 * h
    down = loss_batch(FrameBatch(tuple(ref), batch.history, batch.targets), config, params)
    assert grads.reference[0][0, 0] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-8)
    assert grads.history[0].shape == batch.history[0].shape


def test_backward_without_loss_raises():
    from ddn.guardrails import DdnError
    from ddn.model import GradTape, backward

    with pytest.raises(DdnError):
        backward(GradTape())


def test_batched_forward_matches_straight_line_oracle():
    """20 random configs: forward_batch, single-frame forward and a primitive recomposition agree to 1e-10."""
    from ddn import tensor as T
    from ddn.model import encode_frame, forward, forward_batch

    rng = np.random.default_rng(77)
    for _ in range(20):
        config = random_config(rng, head_activation="relu" if rng.random() < 0.5 else "none")
        params = random_params(config, rng)
        batch = random_batch(config, rng, size=4)
        q_batch, alpha_batch = forward_batch(batch, config, params)

        for i, frame in enumerate(frames_of(batch)):
            q_single, trace = forward(encode_frame(frame, params), config, params)
            assert q_single == pytest.approx(q_batch[i], abs=1e-10)
            assert np.allclose(trace.weights, alpha_batch[i], atol=1e-10)

            e0 = np.concatenate([W @ x + b for W, b, x in zip(params.W_e, params.b_e, frame.reference)])
            E = np.array([
                np.concatenate([W @ x[n] + b for W, b, x in zip(params.W_e, params.b_e, frame.history)])
                for n in range(config.history_n)
            ])
            scores = []
            for e in E:
                w = np.concatenate([e, e0, e - e0, e * e0])
                hidden = np.maximum(params.W_h @ w + params.b_h, 0.0)
                scores.append((params.W_z @ hidden + params.b_z)[0])
            scores = np.array(scores)
            alpha = np.exp(scores - scores.max())
            alpha /= alpha.sum()
            L = alpha @ E
            o = params.W_o @ L + params.b_o
            if config.head_activation == "relu":
                o = np.maximum(o, 0.0)
            q = (params.W_q @ o + params.b_q)[0]
            assert q == pytest.approx(q_batch[i], abs=1e-10)
            assert np.allclose(T.softmax(scores), alpha, atol=1e-12)


def test_attention_weights_sum_to_one():
    """Across 1000 random frames the weights of each frame sum to 1."""
    from ddn.model import forward_batch

    rng = np.random.default_rng(3)
    seen = 0
    while seen < 1000:
        config = random_config(rng)
        params = random_params(config, rng, scale=2.0)
        batch = random_batch(config, rng, size=50)
        _, alpha = forward_batch(batch, config, params)
        assert np.all(np.abs(alpha.sum(axis=1) - 1.0) < 1e-12)
        assert np.all(alpha >= 0)
        seen += len(batch)


def test_zero_attention_layer_equals_mean_pooling():
    """With W_h = 0 every slot scores the same, so attention pooling is mean pooling."""
    from dataclasses import replace

    from ddn.model import forward_batch

    rng = np.random.default_rng(4)
    for _ in range(20):
        config = random_config(rng)
        params = random_params(config, rng)
        params.W_h = np.zeros_like(params.W_h)
        batch = random_batch(config, rng, size=50)
        q_att, alpha = forward_batch(batch, config, params)
        q_mean, none = forward_batch(batch, replace(config, pooling="mean"), params)
        assert none is None
        assert np.allclose(alpha, 1.0 / config.history_n, atol=1e-12)
        assert np.allclose(q_att, q_mean, atol=1e-12)


def test_argmax_invariant_under_positive_scaling_of_score_weights():
    from ddn.model import forward_batch

    rng = np.random.default_rng(6)
    for _ in range(20):
        config = random_config(rng)
        params = random_params(config, rng)
        batch = random_batch(config, rng, size=50)
        _, alpha = forward_batch(batch, config, params)
        params.W_z = params.W_z * float(rng.uniform(0.1, 10.0))
        _, scaled = forward_batch(batch, config, params)
        assert np.array_equal(alpha.argmax(axis=1), scaled.argmax(axis=1))


def test_single_history_cycle_gets_weight_one():
    from ddn.model import attention_weights

    trace = attention_weights([3.7], start=5)
    assert trace.weights.tolist() == [1.0]
    assert trace.predicted_cycle == 6


def test_identical_history_cycles_get_uniform_weights():
    """When every history cycle equals the reference the weights are uniform."""
    from dataclasses import replace

    from ddn.model import forward_batch

    rng = np.random.default_rng(8)
    config = replace(random_config(rng), history_n=4)
    params = random_params(config, rng)
    batch = random_batch(config, rng, size=3)
    batch.history = tuple(np.repeat(r[:, None, :], 4, axis=1) for r in batch.reference)
    _, alpha = forward_batch(batch, config, params)
    assert np.allclose(alpha, 0.25, atol=1e-15)


def test_forward_shape_mismatch():
    from ddn.guardrails import ShapeError
    from ddn.model import DdnConfig, DdnParams, EncodedFrame, forward

    config = DdnConfig(feature_lengths=(1,), embed_dims=(2,), history_n=2, mlp_hidden=2, attn_hidden=2)
    params = DdnParams.zeros(config)
    with pytest.raises(ShapeError):
        forward(EncodedFrame(reference=np.zeros(2), history=np.zeros((3, 2))), config, params)


def test_mean_mode_emits_no_trace():
    from dataclasses import replace

    from ddn.model import encode_frame, forward

    rng = np.random.default_rng(9)
    config = replace(random_config(rng), pooling="mean")
    params = random_params(config, rng)
    frame = frames_of(random_batch(config, rng, size=1))[0]
    _, trace = forward(encode_frame(frame, params), config, params)
    assert trace is None


def test_config_validation():
    from ddn.guardrails import ConfigError
    from ddn.model import DdnConfig

    with pytest.raises(ConfigError):
        DdnConfig(pooling="max")
    with pytest.raises(ConfigError):
        DdnConfig(feature_lengths=(1, 300), embed_dims=(64,))
    with pytest.raises(ConfigError):
        DdnConfig(history_n=0)
    with pytest.raises(ConfigError):
        DdnConfig.from_dict({"history": 3})
    assert DdnConfig.from_dict(DdnConfig().to_dict()) == DdnConfig()


def test_parameter_shapes_follow_config():
    from ddn.model import DdnConfig, parameter_shapes

    shapes = parameter_shapes(DdnConfig())
    assert shapes["W_e.1"] == (64, 300)
    assert shapes["W_h"] == (128, 4 * 192)
    assert shapes["W_o"] == (64, 192)
    assert shapes["W_q"] == (1, 64)


# ── Single-frame ops ──────────────────────────────────────────────────────────


def test_embed_cycle_concatenates_in_feature_order():
    from ddn.model import DdnConfig, embed_cycle, embed_feature

    rng = np.random.default_rng(21)
    config = DdnConfig(feature_lengths=(1, 4, 4), embed_dims=(64, 64, 64))
    params = random_params(config, rng)
    features = [rng.uniform(0, 1, size=l) for l in config.feature_lengths]

    e = embed_cycle(features, params)
    assert e.shape == (192,)
    assert np.array_equal(e[64:128], embed_feature(features[1], 1, params))
    swapped = embed_cycle([features[0], features[2], features[1]], params)
    assert not np.allclose(swapped, e)


def test_embed_feature_identity_and_bad_index():
    from ddn.guardrails import ShapeError
    from ddn.model import DdnConfig, DdnParams, embed_feature

    config = DdnConfig(feature_lengths=(1, 3), embed_dims=(1, 3))
    params = DdnParams.zeros(config)
    params.W_e[1] = np.eye(3)
    x = np.array([0.2, -0.4, 0.9])
    assert np.array_equal(embed_feature(x, 1, params), x)
    with pytest.raises(ShapeError):
        embed_feature(x, 2, params)
    with pytest.raises(ShapeError):
        embed_feature(x[:2], 1, params)


def test_attention_score_of_the_reference_against_itself():
    """Scoring e_0 against itself feeds [e; e; 0; e*e] to the attention layer."""
    from ddn.model import attention_score

    rng = np.random.default_rng(22)
    config = random_config(rng)
    params = random_params(config, rng)
    e = rng.normal(size=config.embed_total)

    w = np.concatenate([e, e, np.zeros_like(e), e * e])
    expected = (params.W_z @ np.maximum(params.W_h @ w + params.b_h, 0.0) + params.b_z)[0]
    assert attention_score(e, e, params) == pytest.approx(expected, abs=1e-12)


def test_zero_attention_layer_scores_every_cycle_the_same():
    from ddn.model import attention_score

    rng = np.random.default_rng(23)
    config = random_config(rng)
    params = random_params(config, rng)
    params.W_h = np.zeros_like(params.W_h)
    e0 = rng.normal(size=config.embed_total)

    constant = (params.W_z @ np.maximum(params.b_h, 0.0) + params.b_z)[0]
    for _ in range(5):
        e = rng.normal(size=config.embed_total)
        assert attention_score(e, e0, params) == pytest.approx(constant, abs=1e-12)


def test_pool_single_and_identical_slots():
    from ddn.guardrails import ConfigError
    from ddn.model import EncodedFrame, pool

    rng = np.random.default_rng(24)
    config = random_config(rng)
    params = random_params(config, rng)
    e0 = rng.normal(size=config.embed_total)
    e = rng.normal(size=config.embed_total)

    single = EncodedFrame(reference=e0, history=e[None, :])
    for mode in ("mean", "attention"):
        assert np.array_equal(pool(single, mode, params), e)

    repeated = EncodedFrame(reference=e0, history=np.tile(e, (3, 1)))
    for mode in ("mean", "attention"):
        assert np.allclose(pool(repeated, mode, params), e, atol=1e-15)

    with pytest.raises(ConfigError):
        pool(single, "max", params)


def test_forward_is_attention_pool_then_capacity_head():
    from ddn.model import encode_frame, forward, pool, predict_capacity

    rng = np.random.default_rng(25)
    config = random_config(rng)
    params = random_params(config, rng)
    frame = encode_frame(frames_of(random_batch(config, rng, size=1))[0], params)

    q, trace = forward(frame, config, params)
    assert q == predict_capacity(pool(frame, "attention", params), params)
    assert np.array_equal(pool(frame, "attention", params, trace.weights), pool(frame, "attention", params))


def test_predict_capacity_is_the_two_layer_head():
    from ddn.model import DdnConfig, DdnParams, predict_capacity

    config = DdnConfig(feature_lengths=(1,), embed_dims=(4,), mlp_hidden=3)
    params = DdnParams.zeros(config)
    params.b_q = np.array([0.5])
    assert predict_capacity(np.ones(4), params) == 0.5

    rng = np.random.default_rng(26)
    params = random_params(config, rng)
    L = rng.normal(size=4)
    expected = (params.W_q @ (params.W_o @ L + params.b_o) + params.b_q)[0]
    assert predict_capacity(L, params) == pytest.approx(expected, abs=1e-14)


def test_batch_loss_pools_squared_errors_over_frames():
    from ddn.guardrails import ShapeError
    from ddn.model import batch_loss, encode_frame, forward, loss_batch

    rng = np.random.default_rng(27)
    config = random_config(rng)
    params = random_params(config, rng)
    batch = random_batch(config, rng, size=6)
    frames = [encode_frame(f, params) for f in frames_of(batch)]
    preds = np.array([forward(f, config, params)[0] for f in frames])

    assert batch_loss(frames, config, params) == pytest.approx(np.mean((preds - batch.targets) ** 2), abs=1e-12)
    assert batch_loss(frames, config, params) == pytest.approx(loss_batch(batch, config, params), abs=1e-12)
    assert batch_loss(frames[:1], config, params) == pytest.approx((preds[0] - batch.targets[0]) ** 2, abs=1e-12)

    for frame, q in zip(frames, preds):
        frame.target = q
    assert batch_loss(frames, config, params) == 0.0

    with pytest.raises(ShapeError):
        batch_loss([], config, params)
