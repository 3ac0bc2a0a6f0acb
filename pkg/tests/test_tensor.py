import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofmtlab.errors import ConfigError, ContractError, DimensionError, ParameterError
from ofmtlab.tensor import (
    C3D_SCHEDULE,
    LENET_SCHEDULE,
    LayerParams,
    LRSchedule,
    Tensor,
    audit_layers,
    conv2d_forward,
    conv3d_forward,
    dense_forward,
    dropout,
    maxpool_forward,
    no_grad,
    precision,
    relu,
    sgd_update,
    softmax,
    softmax_crossentropy,
)


def naive_conv(x, w, b, stride, pad):
    """Direct loop cross-correlation, unbatched ``(C, *spatial)``."""
    nd = w.ndim - 2
    xp = np.pad(x, [(0, 0)] + [(p, p) for p in pad])
    out_shape = [(xp.shape[1 + i] - w.shape[2 + i]) // stride[i] + 1 for i in range(nd)]
    out = np.zeros((w.shape[0], *out_shape))
    for o in range(w.shape[0]):
        for pos in itertools.product(*(range(n) for n in out_shape)):
            sl = tuple(slice(p * s, p * s + k) for p, s, k in zip(pos, stride, w.shape[2:]))
            out[(o, *pos)] = (xp[(slice(None), *sl)] * w[o]).sum() + b[o]
    return out


def params(rng, shape, dtype=np.float64):
    return LayerParams.glorot("t", shape, rng, dtype=dtype)


class TestConv:
    @pytest.mark.parametrize("stride,pad", [((1, 1), (0, 0)), ((2, 1), (1, 1)), ((2, 2), (0, 0))])
    def test_conv2d_matches_loops(self, rng, stride, pad):
        x = rng.normal(size=(2, 7, 6))
        p = params(rng, (3, 2, 3, 2))
        with precision(np.float64):
            got = conv2d_forward(Tensor(x), p, stride, pad).data
        np.testing.assert_allclose(got, naive_conv(x, p.weights.data, p.bias.data, stride, pad), atol=1e-12)

    def test_conv3d_same_matches_loops(self, rng):
        x = rng.normal(size=(2, 4, 5, 5))
        p = params(rng, (2, 2, 3, 3, 3))
        p.bias.data[:] = [0.5, -1.0]
        with precision(np.float64):
            got = conv3d_forward(Tensor(x), p, 1, "same").data
        assert got.shape == (2, 4, 5, 5)
        np.testing.assert_allclose(got, naive_conv(x, p.weights.data, p.bias.data, (1, 1, 1), (1, 1, 1)), atol=1e-12)

    def test_batched_equals_stacked(self, rng):
        x = rng.normal(size=(3, 2, 6, 6))
        p = params(rng, (4, 2, 3, 3))
        with precision(np.float64):
            batched = conv2d_forward(Tensor(x), p).data
            single = np.stack([conv2d_forward(Tensor(xi), p).data for xi in x])
        np.testing.assert_allclose(batched, single, atol=1e-12)

    def test_kernel_larger_than_input(self, rng):
        with pytest.raises(DimensionError, match="exceeds"):
            conv2d_forward(Tensor(np.zeros((1, 2, 2))), params(rng, (1, 1, 3, 3)))

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError, match="channels"):
            conv2d_forward(Tensor(np.zeros((2, 5, 5))), params(rng, (1, 3, 3, 3)))

    def test_conv3d_rejects_2d_kernel(self, rng):
        with pytest.raises(DimensionError):
            conv3d_forward(Tensor(np.zeros((1, 4, 5, 5))), params(rng, (1, 1, 3, 3)))


class TestPool:
    def test_known_values(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        out = maxpool_forward(Tensor(x), (2, 2)).data
        np.testing.assert_array_equal(out, [[[5, 7], [13, 15]]])

    def test_tie_gradient_goes_to_first_in_scan_order(self):
        x = Tensor(np.ones((1, 2, 2)), requires_grad=True, dtype=np.float64)
        out = maxpool_forward(x, (2, 2))
        (dx,) = out._backward(np.ones_like(out.data))
        np.testing.assert_array_equal(dx, [[[1, 0], [0, 0]]])

    def test_overlapping_tie_rule_matches(self):
        x = Tensor(np.zeros((1, 3, 3)), requires_grad=True, dtype=np.float64)
        out = maxpool_forward(x, (2, 2), (1, 1))
        (dx,) = out._backward(np.ones_like(out.data))
        np.testing.assert_array_equal(dx[0], [[1, 1, 0], [1, 1, 0], [0, 0, 0]])

    def test_temporal_window_one(self, rng):
        x = rng.normal(size=(2, 3, 4, 4))
        out = maxpool_forward(Tensor(x), (1, 2, 2)).data
        assert out.shape == (2, 3, 2, 2)
        np.testing.assert_allclose(out[0, 1], x[0, 1].reshape(2, 2, 2, 2).max(axis=(1, 3)), rtol=1e-6)

    def test_window_larger_than_input(self):
        with pytest.raises(DimensionError):
            maxpool_forward(Tensor(np.zeros((1, 1, 3))), (2, 2))

    @given(st.integers(1, 3), st.integers(2, 7), st.integers(2, 7), st.integers(1, 3))
    @settings(max_examples=30, deadline=None)
    def test_fast_and_general_paths_agree(self, c, h, w, k):
        if k > min(h, w):
            return
        x = np.random.default_rng(h * 31 + w).normal(size=(c, h, w))
        fast = maxpool_forward(Tensor(x, dtype=np.float64), (k, k)).data
        general = maxpool_forward(Tensor(x, dtype=np.float64), (k, k), (k, k + 0)).data
        view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))[:, ::k, ::k]
        np.testing.assert_array_equal(fast, view.max(axis=(-2, -1)))
        np.testing.assert_array_equal(general, fast)


class TestElementwise:
    def test_relu_and_grad(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True, dtype=np.float64)
        y = relu(x)
        np.testing.assert_array_equal(y.data, [0, 0, 2])
        np.testing.assert_array_equal(y._backward(np.ones(3))[0], [0, 0, 1])

    def test_dropout_identity_at_eval(self, rng):
        x = Tensor(rng.normal(size=(4, 5)))
        assert dropout(x, 0.4, train=False) is x

    def test_dropout_inverted_scaling(self):
        x = Tensor(np.ones((200, 200)), dtype=np.float64)
        y = dropout(x, 0.4, True, np.random.default_rng(0)).data
        kept = y[y > 0]
        np.testing.assert_allclose(kept, 1 / 0.6)
        assert abs((y > 0).mean() - 0.6) < 0.01

    @pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
    def test_dropout_rate_bounds(self, rate):
        with pytest.raises(ParameterError):
            dropout(Tensor(np.ones(3)), rate, True, np.random.default_rng(0))

    def test_dense(self, rng):
        x = rng.normal(size=(3, 4))
        p = params(rng, (2, 4))
        with precision(np.float64):
            got = dense_forward(Tensor(x), p).data
        np.testing.assert_allclose(got, x @ p.weights.data.T + p.bias.data)


class TestLoss:
    def test_crossentropy_matches_direct_formula(self, rng):
        z = rng.normal(size=(4, 6))
        t = np.array([0, 5, 2, 2])
        probs, loss = softmax_crossentropy(Tensor(z, dtype=np.float64), t)
        direct = -np.log(np.exp(z[np.arange(4), t]) / np.exp(z).sum(1)).sum()
        assert loss.item() == pytest.approx(direct, rel=1e-12)
        _, mean = softmax_crossentropy(Tensor(z, dtype=np.float64), t, reduction="mean")
        assert mean.item() == pytest.approx(direct / 4, rel=1e-12)
        np.testing.assert_allclose(probs.sum(1), 1.0)

    def test_stable_for_huge_logits(self):
        _, loss = softmax_crossentropy(Tensor(np.array([[1000.0, 0.0]]), dtype=np.float64), [0])
        assert np.isfinite(loss.item()) and loss.item() < 1e-12

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            softmax_crossentropy(Tensor(np.zeros((1, 3))), [3])

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=12))
    def test_softmax_is_a_distribution(self, z):
        p = softmax(np.array(z))
        assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9


class TestAutodiff:
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        with pytest.raises(ContractError):
            relu(x).backward()

    def test_no_grad_builds_no_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = relu(x)
        assert not y.requires_grad and y._parents == ()

    def test_shared_leaf_accumulates(self):
        from ofmtlab.tensor import ops

        x = Tensor(np.array([[1.0, -2.0, 3.0]]), requires_grad=True, dtype=np.float64)
        # x @ x.T uses x twice, once as input and once as weights.
        sq = dense_forward(x, LayerParams(x, Tensor(np.zeros(1), dtype=np.float64), "self"))
        ops.reshape(sq, ()).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_every_layer_type_passes_gradcheck(self):
        reports = audit_layers(n_coords=50, seed=7)
        assert len(reports) >= 10
        for name, rep in reports.items():
            assert rep.checked >= 50, name
            assert rep.passed(1e-4), (name, rep.max_rel_error)


class TestOptim:
    def test_sgd_step_and_zeroing(self):
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=np.float64)
        w.grad = np.array([0.5, -1.0])
        sgd_update([w], 0.1)
        np.testing.assert_allclose(w.data, [0.95, 2.1])
        np.testing.assert_array_equal(w.grad, 0)

    def test_zero_lr_is_noop(self):
        w = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
        w.grad = np.array([3.0])
        sgd_update([w], 0.0)
        assert w.data[0] == 1.0

    def test_negative_lr_rejected(self):
        with pytest.raises(ParameterError):
            sgd_update([], -0.1)

    def test_schedule_boundaries(self):
        assert C3D_SCHEDULE.lr_at(0) == 0.01
        assert C3D_SCHEDULE.lr_at(24) == 0.01
        assert C3D_SCHEDULE.lr_at(25) == 0.001
        assert C3D_SCHEDULE.lr_at(74) == 1e-4
        assert C3D_SCHEDULE.lr_at(99) == 1e-5
        assert LENET_SCHEDULE.lr_at(49) == 0.001

    @pytest.mark.parametrize("steps", [[(25, 0.01), (25, 0.001)], [(25, 0.001), (50, 0.01)], [], [(10, 0.0)]])
    def test_bad_schedules(self, steps):
        with pytest.raises(ConfigError):
            LRSchedule.of(steps)
