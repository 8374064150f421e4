"""Full-model contracts: shapes, causality, binarity, parity, and folding."""

import numpy as np
import pytest

from spikedt.model import (
    DecisionModel,
    ModelConfig,
    load_model,
    repeat_temporal,
    temporal_readout,
)
from spikedt.tensor import ContractError, Tensor, backward, no_grad

from oracles import finite_difference, relative_error

RNG = np.random.default_rng(1234)
MODES = ("vla", "sssa", "tssa", "pssa")


def small_cfg(mode, **kw):
    base = dict(
        state_dim=3, action_dim=2, action_space="continuous", n_blocks=2,
        d_model=16, context_len=6, snn_timesteps=2, n_heads=1, attn_mode=mode,
        window=3,
    )
    base.update(kw)
    return ModelConfig(**base)


def rand_batch(cfg, b=2, rng=RNG):
    return (
        rng.uniform(-1, 1, size=(b, cfg.context_len, cfg.action_dim)),
        rng.uniform(0, 1, size=(b, cfg.context_len, 1)),
        rng.normal(size=(b, cfg.context_len, cfg.state_dim)),
    )


class TestShapes:
    @pytest.mark.parametrize("mode", MODES)
    def test_forward_shape(self, mode):
        cfg = small_cfg(mode)
        model = DecisionModel(cfg, np.random.default_rng(0))
        a, r, s = rand_batch(cfg)
        with no_grad():
            out = model.forward(a, r, s)
        assert out.shape == (2, cfg.context_len, cfg.action_dim)

    def test_vla_coerces_time_axis(self):
        cfg = small_cfg("vla", snn_timesteps=4)
        assert cfg.snn_timesteps == 1

    def test_repeat_temporal_slices_equal(self):
        x = Tensor(RNG.normal(size=(2, 3, 4)))
        rep = repeat_temporal(x, 5)
        assert rep.shape == (2, 3, 5, 4)
        for t in range(5):
            np.testing.assert_array_equal(rep.data[:, :, t], x.data)

    def test_repeat_temporal_gradient_sums(self):
        x0 = RNG.uniform(-1, 1, size=(2, 3, 4))

        def loss(x):
            return ((repeat_temporal(x, 3) * 1.5) ** 2.0).sum()

        x = Tensor(x0, requires_grad=True)
        backward(loss(x))
        idx = RNG.choice(x0.size, 6, replace=False)
        fd = finite_difference(lambda a: loss(Tensor(a)).item(), x0, idx)
        assert relative_error(x.grad.reshape(-1)[idx], fd).max() < 1e-4

    def test_temporal_readout_mean(self):
        x = RNG.normal(size=(2, 3, 4, 5))
        out = temporal_readout(Tensor(x))
        np.testing.assert_allclose(out.data, x.sum(axis=2) / 4, atol=1e-15)

    def test_temporal_readout_t1_squeezes(self):
        x = RNG.normal(size=(2, 3, 1, 5))
        out = temporal_readout(Tensor(x))
        np.testing.assert_array_equal(out.data, x[:, :, 0])

    def test_constant_over_time_readout_identity(self):
        x = np.broadcast_to(RNG.normal(size=(2, 3, 1, 5)), (2, 3, 4, 5)).copy()
        out = temporal_readout(Tensor(x))
        np.testing.assert_allclose(out.data, x[:, :, 0], atol=1e-15)


class TestEmbedding:
    def test_zero_weights_leave_position_embedding(self):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(0))
        model.embed.w.data[...] = 0.0
        model.embed.b.data[...] = 0.0
        a, r, s = (np.zeros((1, 6, 2)), np.zeros((1, 6, 1)), np.zeros((1, 6, 3)))
        out = model.embed_tokens(Tensor(a), Tensor(r), Tensor(s))
        np.testing.assert_array_equal(out.data[0], model.pos.data)

    def test_one_token_changes_one_row(self):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(0))
        a, r, s = rand_batch(cfg, b=1)
        base = model.embed_tokens(Tensor(a), Tensor(r), Tensor(s)).data
        s2 = s.copy()
        s2[0, 3] += 1.0
        mod = model.embed_tokens(Tensor(a), Tensor(r), Tensor(s2)).data
        diff = np.abs(mod - base).sum(axis=-1)[0]
        assert diff[3] > 0
        np.testing.assert_array_equal(diff[[0, 1, 2, 4, 5]], 0.0)

    def test_dim_mismatch_rejected(self):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(0))
        with pytest.raises(ContractError):
            model.embed_tokens(
                Tensor(np.zeros((1, 6, 5))), Tensor(np.zeros((1, 6, 1))),
                Tensor(np.zeros((1, 6, 3))),
            )


class TestBlocks:
    def test_zero_sublayer_weights_make_identity_block(self):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(0))
        blk = model.blocks[0]
        for lin in (blk.attn.wo, blk.mlp.w2):
            lin.w.data[...] = 0.0
            lin.b.data[...] = 0.0
        x = Tensor(RNG.normal(size=(2, 6, 2, 16)))
        out = blk(x, training=True)
        np.testing.assert_allclose(out.data, x.data, atol=1e-12)

    @pytest.mark.parametrize("mode", MODES)
    def test_end_to_end_causality(self, mode):
        cfg = small_cfg(mode)
        model = DecisionModel(cfg, np.random.default_rng(1))
        a, r, s = rand_batch(cfg, b=1)
        with no_grad():
            base = model.forward(a, r, s).data
        j = 3  # perturb token j; tokens 0..2 must not move
        a2, r2, s2 = a.copy(), r.copy(), s.copy()
        a2[0, j:] = RNG.uniform(-1, 1, size=a2[0, j:].shape)
        r2[0, j:] = RNG.uniform(0, 1, size=r2[0, j:].shape)
        s2[0, j:] = RNG.normal(size=s2[0, j:].shape)
        with no_grad():
            mod = model.forward(a2, r2, s2).data
        diff = np.abs(mod[0, :j] - base[0, :j]).max()
        if mode == "vla":
            assert diff < 1e-12
        else:
            assert diff == 0.0


class TestQkvProjection:
    def test_matches_separate_module_composition(self):
        from spikedt.model import qkv_project

        cfg = small_cfg("tssa")
        blk = DecisionModel(cfg, np.random.default_rng(6)).blocks[0].attn
        x = Tensor(RNG.normal(size=(2, 6, 2, 16)))
        q, k, v = qkv_project(
            x, (blk.wq, blk.wk, blk.wv), (blk.norm_q, blk.norm_k, blk.norm_v),
            (blk.sn_q, blk.sn_k, blk.sn_v), training=False,
        )
        for lin, nrm, sn, got in (
            (blk.wq, blk.norm_q, blk.sn_q, q),
            (blk.wk, blk.norm_k, blk.sn_k, k),
            (blk.wv, blk.norm_v, blk.sn_v, v),
        ):
            expected = sn(nrm(lin(x), training=False))
            np.testing.assert_array_equal(got.data, expected.data)
            assert np.all((got.data == 0.0) | (got.data == 1.0))

    def test_zero_weights_give_zero_spikes(self):
        from spikedt.model import qkv_project

        cfg = small_cfg("tssa")
        blk = DecisionModel(cfg, np.random.default_rng(6)).blocks[0].attn
        for lin in (blk.wq, blk.wk, blk.wv):
            lin.w.data[...] = 0.0
            lin.b.data[...] = 0.0
        x = Tensor(RNG.normal(size=(1, 6, 2, 16)))
        for t in qkv_project(
            x, (blk.wq, blk.wk, blk.wv), (blk.norm_q, blk.norm_k, blk.norm_v),
            (blk.sn_q, blk.sn_k, blk.sn_v), training=False,
        ):
            np.testing.assert_array_equal(t.data, 0.0)


class TestBinarity:
    @pytest.mark.parametrize("mode", ("sssa", "tssa", "pssa"))
    def test_every_neuron_output_is_binary(self, mode):
        cfg = small_cfg(mode)
        model = DecisionModel(cfg, np.random.default_rng(2))
        a, r, s = rand_batch(cfg)

        from spikedt import neurons as neumod

        seen = []
        orig = neumod.lif_sequence_fused

        def probe(inputs, params, time_axis, relaxed=False):
            out = orig(inputs, params, time_axis, relaxed)
            seen.append(out.data)
            return out

        neumod.lif_sequence_fused = probe
        try:
            with no_grad():
                model.forward(a, r, s, training=True)
        finally:
            neumod.lif_sequence_fused = orig
        assert seen, "no spiking layers executed"
        for arr in seen:
            assert np.all((arr == 0.0) | (arr == 1.0))


class TestParameterParity:
    def test_spiking_modes_match_reference_within_one_percent(self):
        kw = dict(state_dim=7, action_dim=5, n_blocks=2, d_model=64,
                  context_len=20, snn_timesteps=4, window=8)
        vla = DecisionModel(small_cfg("vla", **kw), np.random.default_rng(0))
        n_vla = vla.param_count()
        for mode in ("tssa", "pssa"):
            m = DecisionModel(small_cfg(mode, **kw), np.random.default_rng(0))
            m.ptbn_state.t_p, m.ptbn_state.t_cur = 1, 1
            folded = m.fold()
            n_inf = folded.param_count()
            assert abs(n_inf - n_vla) / n_vla < 0.01, (mode, n_inf, n_vla)


class TestFolding:
    def test_folded_inference_matches_unfolded(self):
        cfg = small_cfg("pssa")
        model = DecisionModel(cfg, np.random.default_rng(3))
        model.ptbn_state.t_p = 10
        # drive running stats away from their init values
        for step in range(10):
            model.ptbn_state.t_cur = step
            a, r, s = rand_batch(cfg, b=4, rng=np.random.default_rng(step))
            with no_grad():
                model.forward(a, r, s, training=True)
        model.ptbn_state.t_cur = 10
        folded = model.fold()
        worst = 0.0
        for trial in range(20):
            a, r, s = rand_batch(cfg, b=2, rng=np.random.default_rng(100 + trial))
            with no_grad():
                base = model.forward(a, r, s, training=False).data
                fast = folded.forward(a, r, s, training=False).data
            worst = max(worst, np.abs(base - fast).max())
        assert worst < 1e-9

    def test_fold_requires_theta_zero(self):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(0))
        model.ptbn_state.t_p, model.ptbn_state.t_cur = 10, 5
        with pytest.raises(ContractError):
            model.fold()

    def test_folded_training_rejected(self):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(0))
        model.ptbn_state.t_p, model.ptbn_state.t_cur = 1, 1
        folded = model.fold()
        a, r, s = rand_batch(cfg)
        with pytest.raises(ContractError):
            folded.forward(a, r, s, training=True)

    def test_reference_model_does_not_fold(self):
        model = DecisionModel(small_cfg("vla"), np.random.default_rng(0))
        with pytest.raises(ContractError):
            model.fold()


class TestDeterminismAndCheckpoints:
    def test_same_seed_same_outputs(self):
        cfg = small_cfg("pssa")
        a, r, s = rand_batch(cfg)
        outs = []
        for _ in range(2):
            model = DecisionModel(cfg, np.random.default_rng(7))
            with no_grad():
                outs.append(model.forward(a, r, s).data.copy())
        assert np.array_equal(outs[0], outs[1])

    def test_checkpoint_round_trip(self, tmp_path):
        cfg = small_cfg("pssa")
        model = DecisionModel(cfg, np.random.default_rng(8))
        path = tmp_path / "m.ckpt"
        model.save(path)
        other = load_model(path, cfg)
        a, r, s = rand_batch(cfg)
        with no_grad():
            x = model.forward(a, r, s).data
            y = other.forward(a, r, s).data
        assert np.array_equal(x, y)

    def test_folded_checkpoint_round_trip(self, tmp_path):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(9))
        model.ptbn_state.t_p, model.ptbn_state.t_cur = 1, 1
        folded = model.fold()
        path = tmp_path / "f.ckpt"
        folded.save(path)
        other = load_model(path, cfg)
        assert other.folded
        a, r, s = rand_batch(cfg)
        with no_grad():
            x = folded.forward(a, r, s).data
            y = other.forward(a, r, s).data
        assert np.array_equal(x, y)


class TestGradients:
    @pytest.mark.parametrize("mode", MODES)
    def test_relaxed_model_gradcheck(self, mode):
        cfg = small_cfg(mode, n_blocks=1, d_model=8, context_len=4,
                        snn_timesteps=2, window=2)
        model = DecisionModel(cfg, np.random.default_rng(10))
        model.ptbn_state.t_p, model.ptbn_state.t_cur = 2, 1  # blended phase
        a, r, s = rand_batch(cfg, b=2, rng=np.random.default_rng(11))
        params = model.named_parameters()

        def loss_value():
            out = model.forward(a, r, s, training=True, relaxed=True)
            return (out * out).sum()

        loss = loss_value()
        backward(loss)
        rng = np.random.default_rng(12)
        names = rng.choice(sorted(params), size=5, replace=False)
        for nm in names:
            t = params[nm]
            if t.grad is None:
                continue
            i = int(rng.integers(t.size))
            flat = t.data.reshape(-1)
            orig = flat[i]
            h = 1e-5
            flat[i] = orig + h
            with no_grad():
                fp = loss_value().item()
            flat[i] = orig - h
            with no_grad():
                fm = loss_value().item()
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            an = t.grad.reshape(-1)[i]
            if max(abs(fd), abs(an)) > 1e-10:
                assert relative_error(np.array(an), np.array(fd)).max() < 1e-3, nm

    def test_gradient_reaches_query_projection(self):
        cfg = small_cfg("tssa")
        model = DecisionModel(cfg, np.random.default_rng(13))
        a, r, s = rand_batch(cfg)
        out = model.forward(a, r, s, training=True)
        backward((out * out).sum())
        wq = model.blocks[0].attn.wq.w
        assert wq.grad is not None and np.abs(wq.grad).sum() > 0
