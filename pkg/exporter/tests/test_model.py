"""Model contracts: shapes, causality, cache/full-forward agreement, I/O."""

import numpy as np
import pytest

from lmexport import ModelConfig, build_fixture_model, load_model, resolve_model, save_model
from lmexport.model import ModelError, init_params, log_softmax


def rand_tokens(model, rng, batch=1, length=12):
    return rng.integers(0, model.config.n_vocab, size=(batch, length))


class TestForward:
    def test_layer_state_shapes(self, model):
        toks = rand_tokens(model, np.random.default_rng(0), batch=3, length=7)
        states = model.forward(toks)
        assert len(states) == model.config.n_layer + 1
        assert all(s.shape == (3, 7, model.config.d_model) for s in states)

    def test_logits_shape_and_normalization(self, model):
        toks = rand_tokens(model, np.random.default_rng(1), batch=2, length=5)
        lp = model.log_probs(toks)
        assert lp.shape == (2, 5, model.config.n_vocab)
        np.testing.assert_allclose(np.exp(lp).sum(axis=-1), 1.0, atol=1e-12)

    def test_causality(self, model):
        # changing a future token must not touch earlier positions
        rng = np.random.default_rng(2)
        toks = rand_tokens(model, rng, length=10)
        other = toks.copy()
        other[0, 7] = (other[0, 7] + 1) % model.config.n_vocab
        a = model.logits(toks)
        b = model.logits(other)
        np.testing.assert_array_equal(a[0, :7], b[0, :7])
        assert not np.array_equal(a[0, 7:], b[0, 7:])

    def test_layer_zero_is_position_free(self, model):
        toks = np.array([[5, 5, 5]])
        states = model.forward(toks)
        assert np.array_equal(states[0][0, 0], states[0][0, 2])

    def test_rejects_overlong_sequence(self, model):
        toks = np.zeros((1, model.config.n_ctx + 1), dtype=int)
        with pytest.raises(ModelError, match="exceeds n_ctx"):
            model.forward(toks)

    def test_rejects_non_2d(self, model):
        with pytest.raises(ModelError, match="2-d"):
            model.forward(np.zeros(4, dtype=int))


class TestIncremental:
    def test_prefill_matches_full_forward(self, model):
        rng = np.random.default_rng(3)
        toks = rand_tokens(model, rng, length=9)
        _, logits = model.prefill(toks, capacity=12)
        full = model.logits(toks)[:, -1]
        np.testing.assert_allclose(logits, full, atol=1e-12)

    def test_stepping_matches_full_forward(self, model):
        # grow a sequence one token at a time; every step must agree with a
        # from-scratch pass over the same prefix
        rng = np.random.default_rng(4)
        toks = rand_tokens(model, rng, length=14)[0]
        cache, logits = model.prefill(toks[None, :4], capacity=14)
        for t in range(4, 14):
            out = model.step(cache, toks[t : t + 1])
            logits = out.logits
            full = model.logits(toks[None, : t + 1])[:, -1]
            np.testing.assert_allclose(logits, full, atol=1e-12)

    def test_step_layer_states_match_forward(self, model):
        rng = np.random.default_rng(5)
        toks = rand_tokens(model, rng, length=6)
        cache, _ = model.prefill(toks[:, :5], capacity=6)
        out = model.step(cache, toks[:, 5])
        states = model.forward(toks)
        for layer in range(model.config.n_layer + 1):
            np.testing.assert_allclose(
                out.layer_states[layer], states[layer][:, -1], atol=1e-12)

    def test_repeat_gives_independent_walks(self, model):
        toks = np.array([[1, 2, 3]])
        cache, _ = model.prefill(toks, capacity=5)
        batch = cache.repeat(4)
        assert batch.batch == 4
        model.step(batch, np.array([7, 8, 9, 10]))
        # the original cache is untouched by steps on the copy
        assert cache.length == 3

    def test_capacity_exhaustion(self, model):
        cache, _ = model.prefill(np.array([[1, 2]]), capacity=2)
        with pytest.raises(ModelError, match="capacity"):
            model.step(cache, np.array([3]))


class TestEmbeddings:
    def test_layer_zero_is_the_embedding_table(self, model):
        ids = np.array([3, 11])
        emb = model.embedding(ids, 0)
        np.testing.assert_array_equal(emb, model.params["wte"][ids])

    def test_contextual_requires_context(self, model):
        with pytest.raises(ModelError, match="context"):
            model.embedding(np.array([1]), model.config.n_layer)

    def test_contextual_matches_full_forward(self, model):
        ctx = np.array([[4, 9, 2]])
        ids = np.array([7, 7, 13])
        emb = model.embedding(ids, model.config.n_layer, context=ctx)
        for row, pid in enumerate(ids):
            seq = np.concatenate([ctx[0], [pid]])[None, :]
            expected = model.forward(seq)[-1][0, -1]
            np.testing.assert_allclose(emb[row], expected, atol=1e-12)

    def test_layer_bounds(self, model):
        with pytest.raises(ModelError, match="layer"):
            model.embedding(np.array([0]), model.config.n_layer + 1)


class TestDeterminismAndIO:
    def test_same_seed_same_weights(self):
        a = build_fixture_model(seed=5)
        b = build_fixture_model(seed=5)
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)

    def test_different_seed_different_weights(self):
        a = build_fixture_model(seed=5)
        b = build_fixture_model(seed=6)
        assert any(not np.array_equal(a.params[k], b.params[k]) for k in a.params)

    def test_save_load_round_trip(self, model, tmp_path):
        save_model(model, tmp_path / "m")
        loaded = load_model(tmp_path / "m")
        assert loaded.config == model.config
        assert loaded.tokenizer.pieces == model.tokenizer.pieces
        assert all(np.array_equal(loaded.params[k], model.params[k]) for k in model.params)
        toks = np.array([[1, 2, 3]])
        np.testing.assert_array_equal(loaded.logits(toks), model.logits(toks))

    def test_resolve_builtin_and_seeded(self):
        assert resolve_model("fixture:tiny").config.n_vocab > 0
        seeded = resolve_model("fixture:tiny:3")
        base = build_fixture_model(seed=3)
        assert all(np.array_equal(seeded.params[k], base.params[k]) for k in base.params)

    def test_resolve_unknown(self):
        with pytest.raises(ModelError, match="unknown model"):
            resolve_model("gpt-99-enormous")

    def test_load_rejects_foreign_arch(self, model, tmp_path):
        save_model(model, tmp_path / "m")
        cfg_path = tmp_path / "m" / "config.json"
        cfg_path.write_text(cfg_path.read_text().replace("tiny-causal-v1", "other-arch"))
        with pytest.raises(ModelError, match="unsupported architecture"):
            load_model(tmp_path / "m")


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"n_vocab": 10, "d_model": 10, "n_head": 4}, "divisible"),
            ({"n_vocab": 0}, ">= 1"),
            ({"n_vocab": 10, "n_layer": 0}, ">= 1"),
        ],
    )
    def test_bad_configs(self, kwargs, message):
        with pytest.raises(ModelError, match=message):
            ModelConfig(**kwargs)

    def test_param_mismatch_detected(self, model):
        params = dict(model.params)
        del params["wte"]
        with pytest.raises(ModelError, match="parameter set mismatch"):
            type(model)(model.config, model.tokenizer, params)

    def test_param_shape_checked(self, model):
        params = dict(model.params)
        params["wte"] = params["wte"][:, :-1]
        with pytest.raises(ModelError, match="expected shape"):
            type(model)(model.config, model.tokenizer, params)


class TestLogSoftmax:
    def test_matches_direct_computation(self):
        x = np.random.default_rng(0).normal(size=(3, 5)) * 30
        lp = log_softmax(x)
        direct = x - np.log(np.exp(x).sum(axis=-1, keepdims=True))
        np.testing.assert_allclose(lp, direct, atol=1e-12)

    def test_extreme_logits_stay_finite(self):
        lp = log_softmax(np.array([[1e4, 0.0, -1e4]]))
        assert np.isfinite(lp[0, 0])
        assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)


def test_init_params_covers_every_declared_shape():
    cfg = ModelConfig(n_vocab=11, d_model=8, n_layer=3, n_head=2, n_ctx=16)
    params = init_params(cfg, seed=0)
    from lmexport.model import _param_shapes

    assert {k: v.shape for k, v in params.items()} == _param_shapes(cfg)
