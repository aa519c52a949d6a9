"""Tensor op contracts: loop-oracle equivalence, MAC formulas, stability."""

import numpy as np
import numpy.testing as npt
import pytest

from stmix.reference import conv3d_loops, matmul_loops
from stmix.tensor import (
    MacCounter,
    Tensor,
    concat,
    conv3d,
    counting,
    layer_norm,
    matmul,
    pad_axis,
    slice_axis,
    softmax_lastdim,
    take_flat,
)


class TestTensorBasics:
    def test_data_is_write_protected(self):
        t = Tensor([[1.0, 2.0]])
        with pytest.raises(ValueError):
            t.data[0, 0] = 5.0

    def test_zero_size_rejected(self):
        with pytest.raises(ValueError):
            Tensor(np.zeros((2, 0)))

    def test_float64_and_row_major(self):
        t = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3).T)
        assert t.data.dtype == np.float64
        assert t.data.flags["C_CONTIGUOUS"]


class TestMatmul:
    def test_identity(self):
        x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        eye = Tensor(np.eye(2))
        npt.assert_array_equal(matmul(eye, x).data, x.data)

    def test_hand_arithmetic(self):
        got = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        npt.assert_array_equal(got.data, [[3.0], [7.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(42)
        a = rng.standard_normal((5, 7))
        b = rng.standard_normal((7, 3))
        npt.assert_allclose(matmul(Tensor(a), Tensor(b)).data, matmul_loops(a, b),
                            rtol=0, atol=1e-12)

    def test_oracle_sweep_100_cases(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            m, k, n = rng.integers(1, 7, size=3)
            a = rng.standard_normal((m, k))
            b = rng.standard_normal((k, n))
            npt.assert_allclose(matmul(Tensor(a), Tensor(b)).data,
                                matmul_loops(a, b), rtol=0, atol=1e-12)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(4, 5\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_mac_count_exact(self):
        counter = MacCounter()
        with counting(counter):
            matmul(Tensor(np.ones((3, 4))), Tensor(np.ones((4, 5))))
        assert counter.macs == 3 * 5 * 4

    def test_batched_mac_count(self):
        counter = MacCounter()
        with counting(counter):
            matmul(Tensor(np.ones((6, 2, 3))), Tensor(np.ones((6, 3, 4))))
        assert counter.macs == 6 * 2 * 4 * 3

    def test_batched_matches_per_slice(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 2, 3))
        b = rng.standard_normal((4, 3, 5))
        got = matmul(Tensor(a), Tensor(b)).data
        for i in range(4):
            npt.assert_allclose(got[i], matmul_loops(a[i], b[i]), rtol=0, atol=1e-12)


class TestMacCounter:
    def test_monotone_and_reset(self):
        counter = MacCounter()
        with counting(counter):
            matmul(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))))
            first = counter.macs
            matmul(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))))
            assert counter.macs > first
        counter.reset()
        assert counter.macs == 0

    def test_nested_scopes_both_counted(self):
        outer, inner = MacCounter(), MacCounter()
        with counting(outer):
            matmul(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))))
            with counting(inner):
                matmul(Tensor(np.ones((3, 3))), Tensor(np.ones((3, 3))))
        assert inner.macs == 27
        assert outer.macs == 8 + 27

    def test_elementwise_ops_do_not_count(self):
        counter = MacCounter()
        with counting(counter):
            a = Tensor(np.ones((4, 4)))
            (a + a) * a
        assert counter.macs == 0


class TestSoftmax:
    def test_uniform_on_zeros(self):
        npt.assert_allclose(softmax_lastdim(Tensor([0.0, 0.0, 0.0])).data,
                            [1 / 3] * 3, rtol=0, atol=1e-15)

    def test_single_element(self):
        npt.assert_array_equal(softmax_lastdim(Tensor([5.0])).data, [1.0])

    def test_large_inputs_no_overflow(self):
        out = softmax_lastdim(Tensor([1000.0, 1000.0])).data
        npt.assert_allclose(out, [0.5, 0.5], rtol=0, atol=1e-15)

    def test_sums_to_one_up_to_1e4_magnitude(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1e4, 1e4, size=(200, 11))
        sums = softmax_lastdim(Tensor(x)).data.sum(axis=-1)
        npt.assert_allclose(sums, 1.0, rtol=0, atol=1e-12)
        assert softmax_lastdim(Tensor(x)).data.min() >= 0.0


class TestLayerNorm:
    def test_constant_slice_is_zeroed(self):
        out = layer_norm(Tensor([[3.0, 3.0, 3.0]])).data
        npt.assert_array_equal(out, np.zeros((1, 3)))

    def test_already_normalized(self):
        npt.assert_allclose(layer_norm(Tensor([1.0, -1.0])).data, [1.0, -1.0],
                            rtol=0, atol=1e-9)

    def test_moments(self):
        rng = np.random.default_rng(1)
        out = layer_norm(Tensor(rng.standard_normal((50, 23)))).data
        assert np.abs(out.mean(axis=-1)).max() < 1e-12
        assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-6


class TestConv3d:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((1, 2, 3, 3))
        k = np.ones((1, 1, 1, 1, 1))
        npt.assert_array_equal(conv3d(Tensor(x), Tensor(k)).data, x)

    def test_all_ones_center_value(self):
        x = np.ones((1, 3, 3, 3))
        k = np.ones((1, 1, 3, 3, 3))
        out = conv3d(Tensor(x), Tensor(k)).data
        assert out[0, 1, 1, 1] == 27.0

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((3, 4, 5, 6))
        k = rng.standard_normal((2, 3, 3, 3, 3))
        b = rng.standard_normal(2)
        npt.assert_allclose(conv3d(Tensor(x), Tensor(k), Tensor(b)).data,
                            conv3d_loops(x, k, b), rtol=0, atol=1e-12)

    def test_oracle_sweep_mixed_kernels(self):
        rng = np.random.default_rng(10)
        for kt, kh, kw in [(1, 3, 3), (3, 1, 1), (1, 1, 3), (3, 3, 3)]:
            x = rng.standard_normal((2, 3, 4, 4))
            k = rng.standard_normal((3, 2, kt, kh, kw))
            npt.assert_allclose(conv3d(Tensor(x), Tensor(k)).data,
                                conv3d_loops(x, k), rtol=0, atol=1e-12)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            conv3d(Tensor(np.ones((1, 2, 2, 2))), Tensor(np.ones((1, 1, 2, 3, 3))))

    def test_mac_count_formula(self):
        counter = MacCounter()
        with counting(counter):
            conv3d(Tensor(np.ones((3, 4, 5, 6))), Tensor(np.ones((2, 3, 3, 3, 3))))
        assert counter.macs == 2 * 3 * 3 * 3 * 3 * 4 * 5 * 6


class TestStructuralOps:
    def test_concat_and_slice_roundtrip(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((2, 3)), rng.standard_normal((4, 3))
        joined = concat([Tensor(a), Tensor(b)], axis=0)
        npt.assert_array_equal(slice_axis(joined, 0, 0, 2).data, a)
        npt.assert_array_equal(slice_axis(joined, 0, 2, 6).data, b)

    def test_pad_axis(self):
        out = pad_axis(Tensor([[1.0, 2.0]]), 1, 1, 2).data
        npt.assert_array_equal(out, [[0.0, 1.0, 2.0, 0.0, 0.0]])

    def test_take_flat_gather(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        idx = np.array([[5, 0], [1, 1]])
        npt.assert_array_equal(take_flat(x, idx).data, [[5.0, 0.0], [1.0, 1.0]])


class TestTextDump:
    def test_roundtrip_exact(self, tmp_path):
        from stmix.tensor import load_tensor_txt, save_tensor_txt
        rng = np.random.default_rng(5)
        t = Tensor(rng.standard_normal((3, 4, 2)) * 1e8)
        path = tmp_path / "t.txt"
        save_tensor_txt(t, path)
        back = load_tensor_txt(path)
        assert back.shape == t.shape
        npt.assert_array_equal(back.data, t.data)
        assert path.read_text().startswith("shape: 3 4 2\n")

    def test_checkpoint_roundtrip(self, tmp_path):
        from stmix.tensor import load_checkpoint, save_checkpoint
        rng = np.random.default_rng(6)
        named = {"layer.w": Tensor(rng.standard_normal((2, 3))),
                 "layer.b": Tensor(rng.standard_normal(3))}
        path = tmp_path / "ckpt.txt"
        save_checkpoint(named, path)
        back = load_checkpoint(path)
        assert list(back) == ["layer.w", "layer.b"]
        for name in named:
            npt.assert_array_equal(back[name].data, named[name].data)
