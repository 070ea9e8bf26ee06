import math

import numpy as np
import pytest

from nn_helpers import gradient_check, perturbed_net, tiny_config
from landslide_fusion.errors import OptimizerError, PreconditionError, ShapeError, StateError, TrainingError
from landslide_fusion.fusionnet import (
    ARCHITECTURES,
    AdamWConfig,
    AdamWState,
    FusionConfig,
    FusionNet,
    Tensor,
    TrainConfig,
    adamw_step,
    augment,
    backward,
    combined_loss,
    cosine_lr,
    fusion_config,
    hflip,
    load_weights,
    no_grad,
    save_weights,
    soft_f1_loss,
    tta_predict,
    train_nn,
    vflip,
)
from landslide_fusion.fusionnet import autograd as ag
from landslide_fusion.fusionnet.model import upsample


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        o = flat[i]
        flat[i] = o + h
        fp = f()
        flat[i] = o - h
        fm = f()
        flat[i] = o
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_op(build, *shapes, seed=0, tol=1e-6):
    """Compare autograd against central differences for ``sum(build(*inputs) * weights)``."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(0, 1, s) for s in shapes]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    w = rng.normal(0, 1, out.shape)
    (out * w).sum().backward()

    def f():
        with no_grad():
            return float((build(*[Tensor(a) for a in arrays]).data * w).sum())

    for a, t in zip(arrays, tensors):
        np.testing.assert_allclose(t.grad, numeric_grad(f, a), rtol=tol, atol=tol)


class TestAutogradOps:
    @pytest.mark.parametrize("name,build,shapes", [
        ("add", lambda a, b: a + b, [(3, 4), (4,)]),
        ("sub", lambda a, b: a - b, [(3, 4), (3, 1)]),
        ("mul", lambda a, b: a * b, [(2, 3), (2, 3)]),
        ("div", lambda a, b: a / (b * b + 1.0), [(2, 3), (3,)]),
        ("matmul2d", lambda a, b: a @ b, [(2, 5, 3), (3, 4)]),
        ("matmul_batched", lambda a, b: a @ b, [(2, 3, 4), (2, 4, 5)]),
        ("relu", lambda a: ag.relu(a), [(4, 5)]),
        ("sigmoid", lambda a: ag.sigmoid(a), [(4, 5)]),
        ("gelu", lambda a: ag.gelu(a), [(4, 5)]),
        ("softmax", lambda a: ag.softmax(a, axis=-1), [(3, 6)]),
        ("layer_norm", lambda a, g, b: ag.layer_norm(a, g, b), [(2, 3, 6), (6,), (6,)]),
        ("batch_norm", lambda a, g, b: ag.batch_norm(a, g, b)[0], [(5, 4), (4,), (4,)]),
        ("concat", lambda a, b: ag.concat([a, b], axis=1), [(2, 3), (2, 2)]),
        ("reshape_transpose", lambda a: a.reshape(3, 2, 2).transpose(2, 0, 1), [(3, 4)]),
        ("getitem", lambda a: a[1], [(3, 4)]),
        ("mean", lambda a: a.mean(axis=1), [(3, 4)]),
    ])
    def test_matches_finite_differences(self, name, build, shapes):
        check_op(build, *shapes)

    def test_bce_gradient(self):
        y = np.array([0, 1, 1, 0, 1], float)
        check_op(lambda a: ag.bce_with_logits(a, y), (5, 1))

    def test_backward_without_graph(self):
        with pytest.raises(StateError):
            Tensor(np.ones(3)).sum().backward()

    def test_no_grad_records_nothing(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            b = (a * 2).sum()
        assert not b.requires_grad

    def test_reused_node_accumulates(self):
        a = Tensor(np.array([2.0]), requires_grad=True)
        (a * a + a).sum().backward()
        assert a.grad[0] == 5.0


class TestLoss:
    def test_fixture(self):
        loss = combined_loss(Tensor(np.zeros((1, 1))), [1])
        bce = math.log(2)
        sf1 = 1 - (2 * 0.5) / (0.5 + 1 + 1e-8)
        assert float(loss.data) == pytest.approx(0.5 * bce + 0.5 * sf1, abs=1e-12)
        assert abs(float(loss.data) - 0.51324) < 1e-5

    def test_perfect_separation_tends_to_zero(self):
        logits = Tensor(np.array([[40.0], [-40.0], [40.0]]))
        assert float(combined_loss(logits, [1, 0, 1]).data) < 1e-8

    def test_soft_f1_all_negative(self):
        # no positives: the numerator vanishes and the epsilon keeps 0/0 away
        logits = Tensor(np.full((3, 1), -40.0), requires_grad=True)
        loss = soft_f1_loss(logits, [0, 0, 0])
        assert float(loss.data) == 1.0
        loss.backward()
        assert np.isfinite(logits.grad).all() and not logits.grad.any()

    def test_empty_batch(self):
        with pytest.raises(PreconditionError):
            combined_loss(Tensor(np.zeros((0, 1))), [])


class TestForward:
    def test_shapes_three_encoders(self, rng):
        cfg = tiny_config((("RGBN",), ("SARdiff",), ("Indices",)))
        net = FusionNet(cfg, seed=0)
        out = net.forward(rng.normal(0, 1, (2, 16, 16, 18)))
        assert out.shape == (2, 1) and np.isfinite(out.data).all()

    def test_default_architecture_widths(self):
        net = FusionNet(fusion_config("combinedV3"), seed=0)
        assert net.params["enc0.proj.weight"].shape == (64, 256)
        assert net.params["head.dense.weight"].shape == (3 * 256, 256)
        assert net.params["enc0.embed.weight"].shape == (8 * 8 * 4, 64)
        assert net.params["enc0.pos"].shape == (64, 64)
        assert not net.params["head.res2.weight"].data.any()

    def test_architectures(self):
        assert ARCHITECTURES["combinedV4"] == (("RGBN",), ("SAR",), ("SARdiff",), ("Indices",))
        assert len(fusion_config("combinedV3", channels=12).modality_assignment) == 2

    def test_attention_rows_sum_to_one(self, rng):
        net = perturbed_net(tiny_config(depth=2), scale=1.0).eval()
        net.record_attention = True
        net.forward(rng.normal(0, 3, (3, 16, 16, 12)))
        assert len(net.attention_maps) == 4
        for a in net.attention_maps:
            assert np.abs(a.sum(axis=-1) - 1).max() <= 1e-6

    def test_eval_purity_and_permutation(self, rng):
        net = perturbed_net(tiny_config()).eval()
        x = rng.normal(0, 1, (4, 16, 16, 12))
        a, b = net.forward(x).data, net.forward(x).data
        assert a.tobytes() == b.tobytes()
        perm = np.array([3, 1, 0, 2])
        np.testing.assert_allclose(net.forward(x[perm]).data, a[perm], rtol=0, atol=1e-12)

    def test_channel_routing(self, rng):
        net = perturbed_net(tiny_config((("RGBN",), ("SARdiff",)))).eval()
        x = rng.normal(0, 1, (3, 16, 16, 18))
        base = net.forward(x).data
        for c in (4, 5, 8, 9, 12, 15, 17):        # SAR and Indices are unassigned
            z = x.copy()
            z[..., c] = 0
            assert np.array_equal(net.forward(z).data, base)
        for c in (0, 3, 6, 11):
            z = x.copy()
            z[..., c] = 0
            assert not np.allclose(net.forward(z).data, base)

    def test_missing_channels(self, rng):
        net = FusionNet(tiny_config((("Indices",),)))
        with pytest.raises(ShapeError):
            net.forward(rng.normal(0, 1, (2, 16, 16, 12)))

    def test_single_sample_train_batch(self, rng):
        net = FusionNet(tiny_config())
        with pytest.raises(PreconditionError):
            net.forward(rng.normal(0, 1, (1, 16, 16, 12)))

    def test_disjoint_groups_required(self):
        with pytest.raises(PreconditionError):
            FusionConfig((("RGBN",), ("RGBN", "SAR")))

    def test_resize_option(self, rng):
        x = rng.normal(0, 1, (2, 8, 8, 12))
        up = upsample(x, 2)
        assert up.shape == (2, 16, 16, 12)
        cfg = FusionConfig(tiny_config().modality_assignment, tiny_config().encoder,
                           head_width=16, resize=2)
        assert FusionNet(cfg).eval().forward(x).shape == (2, 1)


class TestBackward:
    def test_full_gradient_check(self):
        net = perturbed_net(tiny_config())
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 16, 16, 12))
        worst, where = gradient_check(net, x, np.array([0, 1, 1, 0]))
        assert worst <= 1e-4, where

    def test_backward_before_forward(self):
        net = FusionNet(tiny_config())
        with pytest.raises(StateError):
            backward(net, Tensor(np.array(1.0)))

    def test_frozen_parameter_zero_gradient(self, rng):
        net = perturbed_net(tiny_config())
        net.freeze("enc1.pos")
        x = rng.normal(0, 1, (3, 16, 16, 12))
        g = backward(net, combined_loss(net.forward(x), [0, 1, 0]))
        assert not g["enc1.pos"].any()
        assert g["enc0.pos"].any()

    def test_scaled_loss_doubles_gradients(self, rng):
        net = perturbed_net(tiny_config())
        x = rng.normal(0, 1, (3, 16, 16, 12))

        def grads(scale):
            net.rng = np.random.default_rng(0)
            return backward(net, combined_loss(net.forward(x), [1, 0, 1]) * scale)

        g1, g2 = grads(1.0), grads(2.0)
        for n in g1:
            np.testing.assert_allclose(g2[n], 2 * g1[n], rtol=1e-12, atol=1e-15)


class TestOptimizer:
    def test_zero_gradient_no_decay(self):
        w = {"w": np.array([1.0, -2.0])}
        adamw_step(w, {"w": np.zeros(2)}, AdamWState(), 0.1, AdamWConfig(weight_decay=0.0))
        assert np.array_equal(w["w"], [1.0, -2.0])

    def test_zero_gradient_decay_only(self):
        w = {"w": np.array([1.0, -2.0])}
        adamw_step(w, {"w": np.zeros(2)}, AdamWState(), 0.1, AdamWConfig(weight_decay=0.5))
        np.testing.assert_allclose(w["w"], np.array([1.0, -2.0]) * (1 - 0.1 * 0.5), rtol=0, atol=1e-15)

    def test_scalar_reference_five_steps(self):
        cfg = AdamWConfig(0.9, 0.999, 1e-8, 0.01)
        lr, w0 = 0.05, np.array([1.5, -0.7, 3.0])
        params, state = {"w": w0.copy()}, AdamWState()
        for _ in range(5):
            adamw_step(params, {"w": 2 * params["w"]}, state, lr, cfg)   # d/dw of w^2
        for i, w in enumerate(w0):
            m = v = 0.0
            for t in range(1, 6):
                g = 2 * w
                w = w - lr * cfg.weight_decay * w
                m = cfg.beta1 * m + (1 - cfg.beta1) * g
                v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
                w = w - lr * (m / (1 - cfg.beta1 ** t)) / (math.sqrt(v / (1 - cfg.beta2 ** t)) + cfg.eps)
            assert abs(params["w"][i] - w) <= 1e-12

    def test_non_finite_gradient(self):
        with pytest.raises(OptimizerError):
            adamw_step({"w": np.ones(2)}, {"w": np.array([np.nan, 0])}, AdamWState(), 0.1)

    def test_cosine_schedule(self):
        assert cosine_lr(0, 10, 1e-3) == 1e-3
        assert cosine_lr(10, 10, 1e-3) == pytest.approx(1e-5, abs=1e-18)
        assert cosine_lr(5, 10, 1e-3) == pytest.approx((1e-3 + 1e-5) / 2, abs=1e-18)
        assert cosine_lr(5, 10, 1e-3, 0.0) == pytest.approx(5e-4)


class TestAugmentation:
    def test_identity_when_disabled(self, rng):
        x = rng.normal(0, 1, (4, 8, 8, 3))
        assert np.array_equal(augment(x, (0, 0, 0), rng), x)

    def test_hflip_involution(self, rng):
        x = rng.normal(0, 1, (2, 8, 8, 3))
        assert np.array_equal(hflip(hflip(x)), x) and np.array_equal(vflip(vflip(x)), x)

    def test_seeded_determinism(self, rng):
        x = rng.normal(0, 1, (6, 8, 8, 3))
        a = augment(x, (0.5, 0.5, 0.5), np.random.default_rng(3))
        b = augment(x, (0.5, 0.5, 0.5), np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_channels_move_together(self, rng):
        x = np.repeat(rng.normal(0, 1, (5, 8, 8, 1)), 4, axis=3)
        out = augment(x, (0.5, 0.5, 0.5), rng)
        for c in range(1, 4):
            assert np.array_equal(out[..., c], out[..., 0])

    def test_input_not_mutated(self, rng):
        x = rng.normal(0, 1, (3, 8, 8, 2))
        keep = x.copy()
        augment(x, (1, 1, 1), rng)
        assert np.array_equal(x, keep)


class TestTta:
    @pytest.fixture
    def net(self):
        return perturbed_net(tiny_config()).eval()

    def test_mean_of_four(self, net, rng):
        x = rng.normal(0, 1, (3, 16, 16, 12))
        parts = [net.predict_proba(x), net.predict_proba(hflip(x)), net.predict_proba(vflip(x)),
                 net.predict_proba(hflip(vflip(x)))]
        np.testing.assert_allclose(tta_predict(net, x), np.mean(parts, axis=0), rtol=0, atol=1e-15)

    def test_flip_group_invariance(self, net, rng):
        x = rng.normal(0, 1, (3, 16, 16, 12))
        ref = tta_predict(net, x)
        for g in (hflip, vflip, lambda z: hflip(vflip(z))):
            assert np.abs(tta_predict(net, g(x)) - ref).max() <= 1e-6

    def test_constant_net(self, rng):
        net = FusionNet(tiny_config()).eval()
        for n, p in net.params.items():
            if n.startswith("head.out.weight"):
                p.data[:] = 0.0
        x = rng.normal(0, 1, (2, 16, 16, 12))
        np.testing.assert_allclose(tta_predict(net, x), net.predict_proba(x), rtol=0, atol=1e-15)


class TestTraining:
    def _data(self, n=24, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 1, (n, 16, 16, 12)).astype(np.float32)
        y = np.array([0, 1] * (n // 2))
        x[y == 1, :, :, 3] += 1.5
        folds = np.arange(n) % 3
        return x, y, folds

    def test_zero_epochs_finite(self):
        x, y, folds = self._data()
        nets, oof = train_nn(x, y, tiny_config(), TrainConfig(epochs=0), folds)
        assert len(nets) == 3
        assert np.isfinite(oof).all() and oof.min() >= 0 and oof.max() <= 1

    def test_seeded_runs_identical(self):
        x, y, folds = self._data()
        tc = TrainConfig(epochs=2, batch_size=8, seed=4)
        _, a = train_nn(x, y, tiny_config(), tc, folds)
        _, b = train_nn(x, y, tiny_config(), tc, folds)
        assert a.tobytes() == b.tobytes()

    def test_oof_uses_fold_excluded_model(self):
        # poisoning: corrupting fold-0 labels must leave fold-0 predictions untouched
        x, y, folds = self._data()
        tc = TrainConfig(epochs=1, batch_size=8)
        _, clean = train_nn(x, y, tiny_config(), tc, folds)
        y2 = y.copy()
        y2[folds == 0] = 1 - y2[folds == 0]
        _, poisoned = train_nn(x, y2, tiny_config(), tc, folds)
        held = folds == 0
        assert np.array_equal(clean[held], poisoned[held])
        assert not np.array_equal(clean[~held], poisoned[~held])

    def test_single_class_fold(self):
        x, y, _ = self._data()
        folds = (y == 0).astype(int)        # training portion of each fold is single-class
        with pytest.raises(TrainingError, match="fold"):
            train_nn(x, y, tiny_config(), TrainConfig(epochs=1), folds)

    def test_train_config_validation(self):
        with pytest.raises(PreconditionError):
            TrainConfig(epochs=-1)
        with pytest.raises(PreconditionError):
            TrainConfig(lr_max=0)
        with pytest.raises(PreconditionError):
            TrainConfig(p_hflip=1.5)


class TestWeights:
    def test_round_trip(self, tmp_path, rng):
        net = perturbed_net(tiny_config(), dtype=np.float32).eval()
        net.running["head.bn.mean"] = rng.normal(0, 1, 16).astype(np.float32)
        x = rng.normal(0, 1, (3, 16, 16, 12))
        manifest = save_weights(net, tmp_path / "w.bin", metadata={"note": "x"})
        back, meta = load_weights(manifest)
        assert meta == {"note": "x"}
        assert back.forward(x).data.tobytes() == net.forward(x).data.tobytes()
        assert (tmp_path / "w.bin").stat().st_size == 4 * (net.n_parameters() + 32)


class TestSyntheticPipeline:
    """Full-size fusion nets on the shared n=400 run (trained once per session)."""

    def test_three_encoders_reach_f1(self, end_to_end):
        res = end_to_end.results["combinedV3"]
        assert len(res.spec["fusion"]["modality_assignment"]) == 3
        assert res.f1 >= 0.85

    def test_oof_complete(self, end_to_end):
        for arch in end_to_end.archs:
            oof = end_to_end.results[arch].oof
            assert np.isfinite(oof).all() and ((oof >= 0) & (oof <= 1)).all()
