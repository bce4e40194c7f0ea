"""Decoder training, cascade composition, JVPs, and the frozen-DNN contract."""

import numpy as np
import pytest

from edgescout.cascade import (
    Cascade,
    CascadeTrainingError,
    DecoderLayer,
    DecoderTrainConfig,
    jacobian_vector_product,
    reconstruct,
    reconstruct_from_output,
    train_all_decoders,
    train_decoder,
)
from edgescout.checkpoint import load_cascade, save_cascade
from edgescout.nn import (
    DenseLayer,
    MLP,
    NetworkConfig,
    forward_record,
    init_random,
    mlp_checksum,
)


def doubling_net():
    """1-wide linear layer W=[[2]]: invertible, ideal decoder halves."""
    cfg = NetworkConfig(1, (1, 1), 1.0, 0.0, "linear", 0)
    return MLP(cfg, [DenseLayer(np.array([[2.0]]), np.zeros(1), "linear")])


def toy_net(depth=3, width=8, w2=1.5, seed=0, top=None):
    widths = [width] * depth + [top or width]
    return init_random(NetworkConfig(depth, widths, w2, 0.05, "tanh", seed))


class TestTrainDecoder:
    def test_inverts_invertible_linear_layer(self):
        net = doubling_net()
        rng = np.random.default_rng(0)
        # 1x1 weights must travel O(1); Adam moves ~lr per step, so give
        # the oracle several epochs of steps
        train = rng.random((20000, 1)) + 0.5
        dec = train_decoder(net, 1, train, DecoderTrainConfig(seed=1, epochs=30))
        x = rng.random((64, 1)) + 0.5
        recon = dec.inner.forward(2.0 * x)
        assert np.max(np.abs(recon - x)) < 0.01

    def test_information_destroying_layer_learns_mean(self):
        # zero weights: z^1 = 0 always; best decoder is the constant mean,
        # so test MSE equals the input variance
        cfg = NetworkConfig(1, (4, 4), 0.0, 0.0, "tanh", 0)
        net = init_random(cfg)
        rng = np.random.default_rng(1)
        train = rng.random((8000, 4))
        dec = train_decoder(net, 1, train, DecoderTrainConfig(seed=2, epochs=10))
        test = rng.random((500, 4))
        pred = dec.inner.forward(np.zeros((500, 4)))
        mse = float(np.mean((pred - test) ** 2))
        assert mse == pytest.approx(np.var(test), rel=0.1)

    def test_shape_reversal_and_activation_rule(self):
        net = toy_net(depth=3, width=6, top=4)
        train = np.random.default_rng(2).random((256, 6))
        cfg = DecoderTrainConfig(seed=3)
        d1 = train_decoder(net, 1, train, cfg)
        d3 = train_decoder(net, 3, train, cfg)
        assert d1.inner.weights.shape == (6, 6)
        assert d1.inner.activation == "linear"  # raw-pixel targets
        assert d3.inner.weights.shape == (6, 4)
        assert d3.inner.activation == "tanh"  # tanh-activation targets
        assert d3.final_training_loss >= 0.0

    def test_bad_layer_index(self):
        net = toy_net()
        with pytest.raises(ValueError):
            train_decoder(net, 0, np.ones((10, 8)), DecoderTrainConfig())
        with pytest.raises(ValueError):
            train_decoder(net, 4, np.ones((10, 8)), DecoderTrainConfig())


class TestTrainAllDecoders:
    def test_matches_individual_training_bitwise(self):
        net = toy_net(seed=5)
        train = np.random.default_rng(3).random((512, 8))
        cfg = DecoderTrainConfig(seed=7)
        all_decs = train_all_decoders(net, train, cfg)
        for ell in (1, 2, 3):
            single = train_decoder(net, ell, train, cfg)
            joint = all_decs[ell - 1]
            assert single.inner.weights.tobytes() == joint.inner.weights.tobytes()
            assert single.inner.bias.tobytes() == joint.inner.bias.tobytes()
            assert single.final_training_loss == joint.final_training_loss

    def test_parallel_schedule_bit_identical(self):
        net = toy_net(depth=4, seed=6)
        train = np.random.default_rng(4).random((512, 8))
        cfg = DecoderTrainConfig(seed=9)
        serial = train_all_decoders(net, train, cfg, workers=1)
        threaded = train_all_decoders(net, train, cfg, workers=3)
        for a, b in zip(serial, threaded):
            assert a.inner.weights.tobytes() == b.inner.weights.tobytes()
            assert a.inner.bias.tobytes() == b.inner.bias.tobytes()

    def test_rerun_bit_identical(self):
        net = toy_net(seed=8)
        train = np.random.default_rng(5).random((512, 8))
        cfg = DecoderTrainConfig(seed=11)
        a = train_all_decoders(net, train, cfg)
        b = train_all_decoders(net, train, cfg)
        assert all(
            x.inner.weights.tobytes() == y.inner.weights.tobytes()
            for x, y in zip(a, b)
        )

    def test_frozen_network_untouched(self):
        net = toy_net(seed=9)
        before = mlp_checksum(net)
        train = np.random.default_rng(6).random((512, 8))
        train_all_decoders(net, train, DecoderTrainConfig(seed=12))
        assert mlp_checksum(net) == before

    def test_divergence_aggregated_with_layer_indices(self):
        net = toy_net(depth=3, seed=10)
        train = np.random.default_rng(7).random((256, 8))
        cfg = DecoderTrainConfig(seed=13, learning_rate=1e300)
        with pytest.raises(CascadeTrainingError) as exc:
            train_all_decoders(net, train, cfg)
        # only the linear first decoder can overflow; tanh outputs are bounded
        assert exc.value.failures == [(1, "non-finite training loss")]


class TestReconstruct:
    def setup_method(self):
        self.net = toy_net(depth=3, seed=20)
        rng = np.random.default_rng(8)
        self.train = rng.random((512, 8))
        self.decs = train_all_decoders(self.net, self.train, DecoderTrainConfig(seed=21))
        self.inputs = rng.random((5, 8))
        self.trace = forward_record(self.net, self.inputs)

    def test_depth_zero_is_identity(self):
        out = reconstruct(self.decs, 0, self.inputs)
        assert np.array_equal(out, self.inputs)
        assert out is not self.inputs

    def test_composition_associativity(self):
        # reconstruct(2) == cascade-1 applied to decoder-2's output
        z2 = self.trace.activations[2]
        direct = reconstruct(self.decs, 2, z2)
        staged = reconstruct(self.decs, 1, self.decs[1].inner.forward(z2))
        assert np.allclose(direct, staged, atol=1e-15)

    def test_invertible_net_recovers_input(self):
        net = doubling_net()
        rng = np.random.default_rng(9)
        train = rng.random((20000, 1)) + 0.5  # ~9k steps: the correlated (w, b)
        # valley of the 1-wide problem converges fully by then
        decs = train_all_decoders(net, train, DecoderTrainConfig(seed=22, epochs=30))
        x = rng.random((32, 1)) + 0.5
        recon = reconstruct(decs, 1, 2.0 * x)
        assert np.max(np.abs(recon - x)) < 0.01

    def test_shape_chain_violation(self):
        with pytest.raises(ValueError):
            reconstruct(self.decs, 2, np.ones((3, 5)))

    def test_output_template_roundtrip(self):
        template = np.zeros(8)
        template[2] = 1.0
        image = reconstruct_from_output(self.decs, template)
        assert image.shape == (8,)
        assert np.isfinite(image).all()
        batch = reconstruct_from_output(self.decs, np.stack([template] * 3))
        assert batch.shape == (3, 8)
        assert np.allclose(batch[0], image)

    def test_zero_template_deterministic(self):
        a = reconstruct_from_output(self.decs, np.zeros(8))
        b = reconstruct_from_output(self.decs, np.zeros(8))
        assert np.array_equal(a, b)

    def test_cascade_type_validates_chain(self):
        narrow_net = toy_net(depth=3, width=6, top=4, seed=23)
        narrow = train_all_decoders(
            narrow_net, np.random.default_rng(24).random((256, 6)),
            DecoderTrainConfig(seed=25),
        )
        with pytest.raises(ValueError, match="chain"):
            # c3 maps 4->6, so it cannot sit below c1 (which consumes 6)
            Cascade(decoders=[narrow[2], narrow[0]])
        cas = Cascade(decoders=list(self.decs))
        assert cas.depth == 3
        out = reconstruct(cas, 3, self.trace.activations[3])
        assert out.shape == self.inputs.shape


class TestJacobianVectorProduct:
    def test_linear_decoder_jvp_is_weight_product(self):
        w = np.random.default_rng(10).standard_normal((4, 6))
        dec = DecoderLayer(1, DenseLayer(w, np.zeros(4), "linear"), 0.0)
        z = np.random.default_rng(11).standard_normal(6)
        v = np.random.default_rng(12).standard_normal(6)
        assert np.allclose(jacobian_vector_product(dec, z, v), w @ v, atol=1e-14)

    def test_zero_direction_gives_zero(self):
        w = np.random.default_rng(13).standard_normal((4, 4))
        dec = DecoderLayer(2, DenseLayer(w, np.zeros(4), "tanh"), 0.0)
        z = np.ones(4)
        assert np.array_equal(jacobian_vector_product(dec, z, np.zeros(4)), np.zeros(4))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_tanh_decoder_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        dec = DecoderLayer(
            2,
            DenseLayer(rng.standard_normal((5, 5)) * 0.7, rng.standard_normal(5) * 0.1, "tanh"),
            0.0,
        )
        z = rng.standard_normal(5)
        v = rng.standard_normal(5)
        h = 1e-5
        fd = (dec.inner.forward(z + h * v) - dec.inner.forward(z - h * v)) / (2 * h)
        jvp = jacobian_vector_product(dec, z, v)
        assert np.allclose(jvp, fd, rtol=1e-4, atol=1e-8)

    def test_cascade_jvp_matches_finite_differences(self):
        net = toy_net(depth=3, seed=30)
        rng = np.random.default_rng(14)
        train = rng.random((512, 8))
        decs = train_all_decoders(net, train, DecoderTrainConfig(seed=31))
        z = forward_record(net, rng.random((1, 8))).activations[3][0]
        v = rng.standard_normal(8)
        h = 1e-5

        def cascade_apply(point):
            return reconstruct(decs, 3, point[None, :])[0]

        fd = (cascade_apply(z + h * v) - cascade_apply(z - h * v)) / (2 * h)
        jvp = jacobian_vector_product(decs, z, v)
        assert np.allclose(jvp, fd, rtol=1e-4, atol=1e-8)

    def test_first_order_error_expansion(self):
        # residual of the linearization must be quadratic in the perturbation
        net = toy_net(depth=3, seed=32)
        rng = np.random.default_rng(15)
        train = rng.random((512, 8))
        decs = train_all_decoders(net, train, DecoderTrainConfig(seed=33))
        z = forward_record(net, rng.random((1, 8))).activations[3][0]
        base = reconstruct(decs, 3, z[None, :])[0]
        ratios = []
        for _ in range(20):
            delta = rng.standard_normal(8)
            delta *= 1e-4 * np.linalg.norm(z) / np.linalg.norm(delta)
            pert = reconstruct(decs, 3, (z + delta)[None, :])[0]
            lin = jacobian_vector_product(decs, z, delta)
            residual = np.linalg.norm(pert - base - lin)
            ratios.append(residual / np.linalg.norm(delta) ** 2)
        # eps_quad calibrated: curvature of trained toy cascades stays O(10)
        assert max(ratios) < 50.0

    def test_shape_mismatch_rejected(self):
        net = toy_net(depth=2, seed=34)
        decs = train_all_decoders(
            net, np.random.default_rng(16).random((256, 8)), DecoderTrainConfig(seed=35)
        )
        with pytest.raises(ValueError):
            jacobian_vector_product(decs, np.ones(8), np.ones(7))


class TestCheckpoint:
    def test_cascade_roundtrip_bitwise(self, tmp_path):
        net = toy_net(depth=2, seed=40)
        decs = train_all_decoders(
            net, np.random.default_rng(17).random((256, 8)), DecoderTrainConfig(seed=41)
        )
        path = tmp_path / "cascade.ckpt"
        save_cascade(path, decs)
        loaded = load_cascade(path)
        assert len(loaded) == 2
        for a, b in zip(decs, loaded):
            assert a.layer_index == b.layer_index
            assert a.inner.activation == b.inner.activation
            assert a.inner.weights.tobytes() == b.inner.weights.tobytes()
            assert a.final_training_loss == b.final_training_loss

    def test_rejects_garbage(self, tmp_path):
        from edgescout.checkpoint import CheckpointError

        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError):
            load_cascade(path)
