import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rowcil import hat
from rowcil.errors import CapacityExhaustedError, ShapeError
from rowcil.hat import AccumulatedMask, TaskMask, anneal_scale, finalize_task_mask, gate_gradients, mask_regularizer
from rowcil.nn import Network, SgdState, backward, forward, sgd_step

from conftest import central_diff, rel_err


class TestGateGradients:
    def setup_method(self):
        self.dw = [np.ones((2, 3)), np.ones((2, 2))]
        self.db = [np.ones(2), np.ones(2)]

    def test_both_ends_claimed_is_zero(self):
        acc = AccumulatedMask([np.array([1.0, 1.0]), np.array([1.0, 0.0])])
        dw, db = gate_gradients(self.dw, self.db, acc)
        assert dw[1][0, 0] == 0.0 and dw[1][0, 1] == 0.0
        np.testing.assert_array_equal(dw[1][1], [1.0, 1.0])
        np.testing.assert_array_equal(db[1], [0.0, 1.0])

    def test_first_task_unchanged(self):
        acc = AccumulatedMask.zeros([2, 2])
        dw, db = gate_gradients(self.dw, self.db, acc)
        for a, b in zip(dw + db, self.dw + self.db):
            np.testing.assert_array_equal(a, b)

    def test_min_rule_one_end_free(self):
        acc = AccumulatedMask([np.array([0.0, 0.0]), np.array([1.0, 0.0])])
        dw, _ = gate_gradients(self.dw, self.db, acc)
        np.testing.assert_array_equal(dw[1], self.dw[1])

    def test_first_layer_follows_output_unit(self):
        acc = AccumulatedMask([np.array([1.0, 0.0]), np.array([0.0, 0.0])])
        dw, db = gate_gradients(self.dw, self.db, acc)
        np.testing.assert_array_equal(dw[0], [[0, 0, 0], [1, 1, 1]])
        np.testing.assert_array_equal(db[0], [0.0, 1.0])

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            gate_gradients(self.dw, self.db, AccumulatedMask.zeros([2]))
        with pytest.raises(ShapeError):
            gate_gradients(self.dw, self.db, AccumulatedMask.zeros([3, 2]))


class TestRegularizer:
    def test_half_gates(self):
        mask = TaskMask([np.zeros(3), np.zeros(4)])
        loss, _ = mask_regularizer(mask, 5.0, AccumulatedMask.zeros([3, 4]))
        assert loss == pytest.approx(0.5, abs=1e-15)

    def test_closed_gates(self):
        mask = TaskMask([np.full(3, -1e6)])
        loss, _ = mask_regularizer(mask, 1.0, AccumulatedMask.zeros([3]))
        assert loss == 0.0

    def test_capacity_exhausted(self):
        with pytest.raises(CapacityExhaustedError):
            mask_regularizer(TaskMask([np.zeros(2)]), 1.0, AccumulatedMask([np.ones(2)]))

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        mask = TaskMask.create([4, 3], rng)
        acc = AccumulatedMask([rng.integers(0, 2, 4).astype(float), np.zeros(3)])
        s = float(rng.uniform(0.5, 3.0))
        _, grads = mask_regularizer(mask, s, acc)
        for l, emb in enumerate(mask.embeddings):
            numeric = central_diff(lambda: mask_regularizer(mask, s, acc)[0], emb)
            assert rel_err(grads[l], numeric) < 1e-4
            assert not grads[l][acc.layers[l] == 1].any()

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 400))
    def test_loss_in_unit_interval(self, seed, s):
        rng = np.random.default_rng(seed)
        mask = TaskMask.create([5, 6], rng)
        acc = AccumulatedMask([rng.integers(0, 2, 5).astype(float), np.zeros(6)])
        loss, _ = mask_regularizer(mask, s, acc)
        assert 0.0 <= loss <= 1.0


class TestAnneal:
    def test_endpoints(self):
        assert anneal_scale(0, 10, 400) == pytest.approx(1 / 400)
        assert anneal_scale(9, 10, 400) == 400.0

    def test_midpoint(self):
        assert anneal_scale(1, 3, 400) == pytest.approx(200.00125, rel=1e-12)

    def test_monotone_and_bounded(self):
        vals = [anneal_scale(b, 17, 50) for b in range(17)]
        assert vals == sorted(vals)
        assert min(vals) >= 1 / 50 and max(vals) <= 50

    def test_single_batch(self):
        assert anneal_scale(0, 1, 400) == 400.0


class TestFinalize:
    def test_element_max(self):
        acc = AccumulatedMask([np.array([1.0, 0.0, 0.0])])
        mask = TaskMask([np.array([-1.0, 1.0, -1.0])])
        new = finalize_task_mask(mask, acc, 400)
        np.testing.assert_array_equal(new.layers[0], [1, 1, 0])

    def test_below_threshold_and_idempotent(self):
        acc = AccumulatedMask([np.array([1.0, 0.0])])
        closed = TaskMask([np.array([-2.0, -2.0])])
        np.testing.assert_array_equal(finalize_task_mask(closed, acc, 400).layers[0], acc.layers[0])
        mask = TaskMask([np.array([-2.0, 2.0])])
        once = finalize_task_mask(mask, acc, 400)
        twice = finalize_task_mask(mask, once, 400)
        np.testing.assert_array_equal(once.layers[0], twice.layers[0])


def test_sigmoid_is_stable():
    out = hat.sigmoid(np.array([-1e4, 0.0, 1e4]))
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3))
def test_masked_path_survives_gated_training(seed, depth):
    """A finished task's masked forward pass is bit-identical after any number
    of gated SGD steps on later tasks (including bias and momentum)."""
    rng = np.random.default_rng(seed)
    sizes = [4] + [int(rng.integers(2, 8)) for _ in range(depth)]
    net = Network.create(sizes, rng)
    old = TaskMask.create(net.widths, rng).binarize(400)
    acc = AccumulatedMask(old)
    probe = rng.normal(size=(6, 4))
    before = forward(net, probe, old)[0].copy()
    frozen = [(l.weight.copy(), l.bias.copy()) for l in net.layers]

    state = SgdState(0.1, momentum=0.9)
    new = TaskMask.create(net.widths, rng)
    for _ in range(10):
        x = rng.normal(size=(5, 4))
        out, cache = forward(net, x, new.gates(float(rng.uniform(0.1, 10))))
        grads = backward(net, cache, rng.normal(size=out.shape))
        dw, db = gate_gradients(grads.weights, grads.biases, acc)
        flat = [g for pair in zip(dw, db) for g in pair]
        sgd_step(net.params(), flat, state)

    assert forward(net, probe, old)[0].tobytes() == before.tobytes()
    for l, (layer, (w0, b0)) in enumerate(zip(net.layers, frozen)):
        in_side = np.ones(layer.in_dim) if l == 0 else acc.layers[l - 1]
        both = np.minimum(acc.layers[l][:, None], in_side[None, :]) == 1
        assert np.array_equal(layer.weight[both], w0[both])
        assert np.array_equal(layer.bias[acc.layers[l] == 1], b0[acc.layers[l] == 1])
