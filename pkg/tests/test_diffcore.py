"""Gradient, optimizer, and checkpoint contracts of the compute core."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threatshare import diffcore as dc
from threatshare.diffcore import checkpoint as ckpt


def rel_err(a, b):
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


def fd_check(build_loss, leaves, h=1e-5, tol=1e-5):
    """Central-difference oracle against the taped gradients."""
    for leaf in leaves:
        leaf.grad = None
    dc.backward(build_loss())
    for leaf in leaves:
        flat = leaf.data.reshape(-1)
        grad = leaf.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = build_loss().item()
            flat[i] = orig - h
            down = build_loss().item()
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            assert rel_err(grad[i], numeric) <= tol, (
                f"entry {i}: analytic {grad[i]}, numeric {numeric}"
            )


def _weighted(t, rng):
    w = dc.Tensor(rng.normal(size=t.shape))
    flat = dc.reshape(dc.mul(t, w), (1, int(np.prod(t.shape))))
    return dc.mse(flat, np.zeros((1, flat.shape[1])))


class TestPrimitiveGradients:
    """Finite differences against every primitive at random points."""

    def setup_method(self):
        self.rng = np.random.default_rng(42)

    def leaf(self, *shape):
        return dc.Tensor(self.rng.normal(size=shape) + 0.1, requires_grad=True)

    def test_add_sub_mul(self):
        a, b = self.leaf(3, 4), self.leaf(3, 4)
        fd_check(lambda: _weighted(dc.add(a, b), np.random.default_rng(1)), [a, b])
        fd_check(lambda: _weighted(dc.sub(a, b), np.random.default_rng(2)), [a, b])
        fd_check(lambda: _weighted(dc.mul(a, b), np.random.default_rng(3)), [a, b])

    def test_broadcast_add(self):
        a, b = self.leaf(3, 4), self.leaf(1, 4)
        fd_check(lambda: _weighted(dc.add(a, b), np.random.default_rng(4)), [a, b])

    def test_matmul(self):
        a, b = self.leaf(3, 5), self.leaf(5, 2)
        fd_check(lambda: _weighted(dc.matmul(a, b), np.random.default_rng(5)), [a, b])

    def test_transpose_reshape_concat(self):
        a, b = self.leaf(3, 4), self.leaf(3, 2)
        fd_check(lambda: _weighted(dc.transpose(a), np.random.default_rng(6)), [a])
        fd_check(lambda: _weighted(dc.reshape(a, (4, 3)), np.random.default_rng(7)), [a])
        fd_check(
            lambda: _weighted(dc.concat([a, b], axis=1), np.random.default_rng(8)),
            [a, b],
        )

    def test_relu_leaky(self):
        a = self.leaf(4, 4)
        fd_check(lambda: _weighted(dc.relu(a), np.random.default_rng(9)), [a])
        fd_check(lambda: _weighted(dc.leaky_relu(a, 0.2), np.random.default_rng(10)), [a])

    def test_softmax_plain_and_masked(self):
        a = self.leaf(4, 5)
        fd_check(lambda: _weighted(dc.softmax(a, axis=1), np.random.default_rng(11)), [a])
        mask = np.random.default_rng(0).uniform(size=(4, 5)) > 0.4
        mask[:, 0] = True
        fd_check(
            lambda: _weighted(dc.softmax(a, axis=1, mask=mask), np.random.default_rng(12)),
            [a],
        )

    def test_layer_norm(self):
        a, g, b = self.leaf(3, 6), self.leaf(1, 6), self.leaf(1, 6)
        fd_check(
            lambda: _weighted(dc.layer_norm(a, g, b), np.random.default_rng(13)),
            [a, g, b],
        )

    def test_reductions(self):
        a = self.leaf(5, 3)
        fd_check(lambda: _weighted(dc.mean_rows(a), np.random.default_rng(14)), [a])
        fd_check(lambda: _weighted(dc.l2_norm_rows(a), np.random.default_rng(15)), [a])

    def test_losses(self):
        a, t = self.leaf(2, 3), self.leaf(2, 3)
        fd_check(lambda: dc.mse(a, t), [a, t])
        fd_check(lambda: dc.mae(a, t), [a, t])


class TestOpValues:
    def test_relu_values(self):
        assert dc.relu(dc.Tensor([[-1.0, 2.0]])).data.tolist() == [[0.0, 2.0]]

    def test_softmax_single_unmasked_entry(self):
        mask = np.array([[False, True, False]])
        out = dc.softmax(dc.Tensor([[5.0, -1.0, 2.0]]), axis=1, mask=mask)
        assert out.data.tolist() == [[0.0, 1.0, 0.0]]

    def test_mse_zero(self):
        assert dc.mse(dc.Tensor([[1.0, 2.0]]), dc.Tensor([[1.0, 2.0]])).item() == 0.0

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = dc.Tensor(rng.normal(size=(30, 7)) * 5)
        mask = rng.uniform(size=(30, 7)) > 0.3
        mask[:, 2] = True
        y = dc.softmax(x, axis=1, mask=mask)
        np.testing.assert_allclose(y.data.sum(axis=1), 1.0, atol=1e-12)

    def test_layer_norm_constant_row_is_zero(self):
        out = dc.layer_norm(
            dc.Tensor([[3.0, 3.0, 3.0, 3.0]]), dc.Tensor([[1.0] * 4]), dc.Tensor([[0.0] * 4])
        )
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_all_masked_row_raises(self):
        mask = np.array([[True, True], [False, False]])
        with pytest.raises(dc.NumericError):
            dc.softmax(dc.Tensor(np.ones((2, 2))), axis=1, mask=mask)

    def test_shape_mismatch_names_op(self):
        with pytest.raises(dc.ShapeError, match="matmul"):
            dc.matmul(dc.Tensor(np.ones((2, 3))), dc.Tensor(np.ones((2, 3))))
        with pytest.raises(dc.ShapeError, match="mse"):
            dc.mse(dc.Tensor(np.ones((2, 2))), dc.Tensor(np.ones((1, 2))))

    def test_non_finite_output_raises(self):
        big = dc.Tensor(np.full((2, 2), 1e200), requires_grad=True)
        with np.errstate(over="ignore"), pytest.raises(dc.NumericError):
            dc.mul(big, big)


class TestBackward:
    def test_square_gradient(self):
        w = dc.Tensor([[1.0]], requires_grad=True)
        dc.backward(dc.mul(w, w))
        assert w.grad.tolist() == [[2.0]]

    def test_accumulation_doubles(self):
        w = dc.Tensor([[1.5]], requires_grad=True)
        dc.backward(dc.mul(w, w))
        first = w.grad.copy()
        dc.backward(dc.mul(w, w))
        np.testing.assert_allclose(w.grad, 2 * first)

    def test_backward_without_forward_raises(self):
        leaf = dc.Tensor([[1.0]], requires_grad=True)
        with pytest.raises(dc.NumericError):
            dc.backward(leaf)

    def test_backward_needs_scalar(self):
        w = dc.Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(dc.ShapeError):
            dc.backward(dc.add(w, w))

    def test_shared_subexpression(self):
        # d/dw of (w*w + w*w) = 4w
        w = dc.Tensor([[3.0]], requires_grad=True)
        sq = dc.mul(w, w)
        dc.backward(dc.add(sq, sq))
        assert w.grad.tolist() == [[12.0]]


class TestInit:
    def make_params(self):
        p = dc.ParamSet()
        p.add("fc.W", (256, 256), "xavier")
        p.add("fc.b", (1, 256), "zeros")
        p.add("conv.W", (64, 64), "kaiming")
        p.add("ln.gain", (1, 8), "ones")
        return p

    def test_bias_zero_gain_one(self):
        p = dc.init_params(self.make_params(), seed=0)
        assert np.all(p["fc.b"].data == 0.0)
        assert np.all(p["ln.gain"].data == 1.0)

    def test_deterministic_under_seed(self):
        a = dc.init_params(self.make_params(), seed=9)
        b = dc.init_params(self.make_params(), seed=9)
        for name in a.names():
            np.testing.assert_array_equal(a[name].data, b[name].data)
        c = dc.init_params(self.make_params(), seed=10)
        assert not np.array_equal(a["fc.W"].data, c["fc.W"].data)

    def test_xavier_variance(self):
        # sample variance of a 256x256 draw should sit near 2/(fan_in+fan_out)
        p = dc.init_params(self.make_params(), seed=1)
        target = 2.0 / (256 + 256)
        var = p["fc.W"].data.var()
        assert abs(var - target) / target < 0.2

    def test_duplicate_name_rejected(self):
        p = dc.ParamSet()
        p.add("w", (2, 2), "xavier")
        with pytest.raises(ValueError):
            p.add("w", (2, 2), "xavier")


class TestAdam:
    def test_first_step_hand_computed(self):
        # grad=1, fresh state: m_hat=1, v_hat=1 => step = lr/(1+eps)
        p = dc.ParamSet()
        w = p.add("w", (1, 1), "zeros")
        w.data = np.array([[1.0]])
        w.grad = np.array([[1.0]])
        state = dc.AdamState(lr=1e-4)
        dc.adam_step(state, p)
        expected = 1.0 - 1e-4 * (1.0 / (1.0 + 1e-8))
        np.testing.assert_allclose(w.data, [[expected]], rtol=0, atol=1e-18)

    def test_zero_grad_zero_decay_unchanged(self):
        p = dc.ParamSet()
        w = p.add("w", (2, 2), "zeros")
        w.data = np.full((2, 2), 0.7)
        w.grad = np.zeros((2, 2))
        dc.adam_step(dc.AdamState(lr=1e-4, weight_decay=0.0), p)
        np.testing.assert_array_equal(w.data, np.full((2, 2), 0.7))

    def test_decoupled_decay_scales_param(self):
        p = dc.ParamSet()
        w = p.add("w", (1, 1), "zeros")
        w.data = np.array([[1.0]])
        w.grad = np.zeros((1, 1))
        dc.adam_step(dc.AdamState(lr=1e-4, weight_decay=1e-4), p)
        np.testing.assert_allclose(w.data, [[1.0 - 1e-8]], rtol=0, atol=1e-20)


class TestSchedule:
    def test_halves_on_schedule_epochs(self):
        history = list(np.linspace(1.0, 0.5, 25))
        for epoch in range(1, 26):
            mult, stop = dc.schedule_and_stop(epoch, history[:epoch])
            assert mult == (0.5 if epoch in (10, 20) else 1.0)
            assert not stop

    def test_plateau_stops_after_exactly_five(self):
        history = [0.5]
        stopped_at = None
        for epoch in range(2, 12):
            history.append(0.5)
            _, stop = dc.schedule_and_stop(epoch, history)
            if stop:
                stopped_at = epoch
                break
        # epoch 1 sets the best; epochs 2..6 are the 5 non-improving ones
        assert stopped_at == 6

    def test_strictly_decreasing_never_stops(self):
        history = []
        for epoch in range(1, 26):
            history.append(1.0 / epoch)
            _, stop = dc.schedule_and_stop(epoch, history)
            assert not stop

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_stop_matches_streak_definition(self, history):
        _, stop = dc.schedule_and_stop(len(history), history)
        best = np.inf
        streak = 0
        for v in history:
            if v < best:
                best, streak = v, 0
            else:
                streak += 1
        assert stop == (streak >= 5)


class TestCheckpointContainer:
    def test_round_trip(self, tmp_path):
        arrays = {
            "a.W": np.arange(6, dtype=np.float64).reshape(2, 3),
            "b": np.array([[1.5]]),
        }
        path = tmp_path / "model.ckpt"
        ckpt.save_container(path, {"kind": "test", "seed": 3}, arrays)
        manifest, loaded = ckpt.load_container(path)
        assert manifest["kind"] == "test" and manifest["seed"] == 3
        for name in arrays:
            np.testing.assert_array_equal(loaded[name], arrays[name])

    def test_deterministic_bytes(self, tmp_path):
        arrays = {"w": np.ones((3, 3)) * 0.25}
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        ckpt.save_container(p1, {"seed": 1}, arrays)
        ckpt.save_container(p2, {"seed": 1}, arrays)
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_check(self, tmp_path):
        path = tmp_path / "x.ckpt"
        ckpt.save_container(path, {}, {"w": np.ones(2)})
        import json
        import zipfile

        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
        manifest["container_version"] = 99
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("manifest.json", json.dumps(manifest))
        with pytest.raises(ValueError, match="version"):
            ckpt.load_container(path)
