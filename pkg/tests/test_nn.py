import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rowcil.errors import InputError, NumericError, ShapeError
from rowcil.nn import (
    Dense,
    Network,
    SgdState,
    backward,
    forward,
    sgd_step,
    softmax,
    softmax_xent,
)

from conftest import central_diff, norm_rel_err, rel_err


def random_net(seed, depth=2, width=7, in_dim=5):
    rng = np.random.default_rng(seed)
    sizes = [in_dim] + [int(rng.integers(2, width + 1)) for _ in range(depth)]
    net = Network.create(sizes, rng)
    for layer in net.layers:
        layer.bias[:] = rng.normal(0, 0.1, layer.out_dim)
    return net, rng


class TestForward:
    def test_identity_relu(self):
        net = Network([Dense(np.eye(2), np.zeros(2))])
        out, _ = forward(net, [1.0, -1.0])
        np.testing.assert_array_equal(out, [[1.0, 0.0]])

    def test_zero_gate_annihilates(self):
        net, rng = random_net(0)
        mask = [np.ones(l.out_dim) for l in net.layers]
        mask[-1][:] = 0.0
        out, _ = forward(net, rng.normal(size=(4, 5)), mask)
        assert not out.any()

    def test_all_ones_mask_is_transparent(self):
        net, rng = random_net(1)
        x = rng.normal(size=(6, 5))
        ones = [np.ones(l.out_dim) for l in net.layers]
        a, cache_a = forward(net, x)
        b, cache_b = forward(net, x, ones)
        assert a.tobytes() == b.tobytes()
        up = rng.normal(size=a.shape)
        ga, gb = backward(net, cache_a, up), backward(net, cache_b, up)
        for wa, wb in zip(ga.flat(), gb.flat()):
            assert wa.tobytes() == wb.tobytes()

    def test_errors(self):
        net, _ = random_net(2)
        with pytest.raises(ShapeError):
            forward(net, np.zeros((2, 4)))
        with pytest.raises(NumericError):
            forward(net, np.array([[np.nan, 0, 0, 0, 0]]))
        with pytest.raises(ShapeError):
            forward(net, np.zeros((2, 5)), [np.ones(1)])
        with pytest.raises(InputError):
            forward(net, np.zeros((1, 5)), [np.full(l.out_dim, 2.0) for l in net.layers])

    def test_layer_dims_must_chain(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ShapeError):
            Network([Dense.glorot(3, 4, rng), Dense.glorot(5, 2, rng)])

    def test_glorot_bounds(self):
        layer = Dense.glorot(10, 6, np.random.default_rng(0))
        assert np.abs(layer.weight).max() <= math.sqrt(6 / 16)
        assert not layer.bias.any()


class TestBackward:
    def test_scalar_linear(self):
        net = Network([Dense(np.array([[3.0]]), np.zeros(1))])
        out, cache = forward(net, [[2.0]])
        grads = backward(net, cache, np.ones_like(out))
        assert grads.weights[0][0, 0] == 2.0
        assert grads.biases[0][0] == 1.0

    def test_zero_gate_blocks_outgoing_weights(self):
        net, rng = random_net(3, depth=2)
        mask = [np.ones(l.out_dim) for l in net.layers]
        mask[0][1] = 0.0
        out, cache = forward(net, rng.normal(size=(5, 5)), mask)
        grads = backward(net, cache, rng.normal(size=out.shape))
        assert not grads.weights[1][:, 1].any()

    def test_shape_error(self):
        net, rng = random_net(4)
        out, cache = forward(net, rng.normal(size=(3, 5)))
        with pytest.raises(ShapeError):
            backward(net, cache, np.ones((3, out.shape[1] + 1)))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        net, rng = random_net(seed, depth=3, width=9)
        x = rng.normal(size=(4, 5))
        gates = [rng.uniform(0.1, 1.0, l.out_dim) for l in net.layers]
        up = rng.normal(size=(4, net.feature_dim))

        def loss():
            return float(np.sum(forward(net, x, gates)[0] * up))

        _, cache = forward(net, x, gates)
        grads = backward(net, cache, up)
        for l, layer in enumerate(net.layers):
            assert rel_err(grads.weights[l], central_diff(loss, layer.weight)) < 1e-4
            assert rel_err(grads.biases[l], central_diff(loss, layer.bias)) < 1e-4
            assert rel_err(grads.gates[l], central_diff(loss, gates[l])) < 1e-4


class TestSoftmaxXent:
    def test_uniform(self):
        loss, _ = softmax_xent([[0.0, 0.0]], [0])
        assert loss == pytest.approx(math.log(2), abs=1e-15)

    def test_dominant_logit_no_overflow(self):
        loss, grad = softmax_xent([[1000.0, 0.0]], [0])
        assert loss == pytest.approx(0.0, abs=1e-300)
        assert np.all(np.isfinite(grad))

    def test_bad_label(self):
        with pytest.raises(InputError):
            softmax_xent([[0.0, 1.0]], [2])
        with pytest.raises(InputError):
            softmax_xent([[0.0, 1.0]], [-1])

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(5, 4)) * 3
        labels = rng.integers(0, 4, 5)
        _, grad = softmax_xent(logits, labels)
        numeric = central_diff(lambda: softmax_xent(logits, labels)[0], logits)
        assert norm_rel_err(grad, numeric) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 8), st.integers(2, 10), st.floats(0.1, 300))
    def test_rows_sum_to_one_and_loss_nonnegative(self, seed, n, c, scale):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(n, c)) * scale
        np.testing.assert_allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-12)
        loss, _ = softmax_xent(logits, rng.integers(0, c, n))
        assert loss >= 0.0


class TestSgd:
    def test_plain_step(self):
        p = [np.zeros(1)]
        sgd_step(p, [np.ones(1)], SgdState(0.1, momentum=0.0))
        assert p[0][0] == pytest.approx(-0.1)

    def test_momentum_recurrence(self):
        p = [np.zeros(1)]
        state = SgdState(1.0, momentum=0.9)
        sgd_step(p, [np.ones(1)], state)
        assert p[0][0] == -1.0
        sgd_step(p, [np.ones(1)], state)
        assert p[0][0] == pytest.approx(-2.9, abs=1e-15)

    def test_zero_grad_fixed_point(self):
        p = [np.array([1.5, -2.0])]
        before = p[0].copy()
        sgd_step(p, [np.zeros(2)], SgdState(0.3, momentum=0.5))
        assert p[0].tobytes() == before.tobytes()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sgd_step([np.zeros(2)], [np.zeros(3)], SgdState(0.1))

    def test_bad_state(self):
        with pytest.raises(InputError):
            SgdState(0.0)
        with pytest.raises(InputError):
            SgdState(0.1, momentum=1.0)


def test_training_is_deterministic():
    def train(seed):
        net, rng = random_net(seed)
        state = SgdState(0.05)
        x = rng.normal(size=(16, 5))
        for _ in range(20):
            out, cache = forward(net, x)
            sgd_step(net.params(), backward(net, cache, out).flat(), state)
        return b"".join(p.tobytes() for p in net.params())

    assert train(11) == train(11)
