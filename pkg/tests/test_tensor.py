import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaledepth import autodiff as ad
from scaledepth.autodiff import (
    DomainError,
    EmptySelectionError,
    GraphError,
    ShapeError,
    Tensor,
    gradient_check,
)


def randt(rng, *shape, dtype=np.float64, requires_grad=True):
    return Tensor(rng.standard_normal(shape).astype(dtype), requires_grad=requires_grad)


class TestElementwise:
    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(Tensor([0.0])).data[0] == pytest.approx(0.5)

    def test_abs(self):
        assert ad.absolute(Tensor([-3.25])).data[0] == 3.25

    def test_pointwise_min_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4))
        out = ad.minimum(Tensor(a), Tensor(b)).data
        for i in range(4):
            for j in range(4):
                assert out[i, j] == min(a[i, j], b[i, j])

    def test_broadcasting_shapes(self):
        a = Tensor(np.ones((1, 3, 4)))
        b = Tensor(np.ones((2, 1, 4)))
        assert ad.add(a, b).shape == (2, 3, 4)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_div_by_zero_raises(self):
        with pytest.raises(DomainError):
            ad.div(Tensor([1.0]), Tensor([0.0]))

    def test_clamp_values(self):
        out = ad.clamp(Tensor([-2.0, 0.5, 3.0]), 0.0, 1.0)
        assert np.allclose(out.data, [0.0, 0.5, 1.0])

    def test_scalar_mixing(self):
        x = Tensor([2.0], requires_grad=True)
        y = 3.0 * x + 1.0
        y.sum().backward()
        assert x.grad[0] == pytest.approx(3.0)


class TestBackward:
    def test_square_grad(self):
        x = Tensor([3.0], requires_grad=True)
        (x * x).sum().backward()
        assert x.grad[0] == pytest.approx(6.0)

    def test_sigmoid_grad_closed_form(self):
        rng = np.random.default_rng(1)
        x = randt(rng, 5)
        ad.tsum(ad.sigmoid(x)).backward()
        s = 1.0 / (1.0 + np.exp(-x.data))
        assert np.allclose(x.grad, s * (1 - s), atol=1e-12)

    def test_non_scalar_root_raises(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GraphError):
            (x * 2.0).backward()

    def test_repeated_backward_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        y = (x * x).sum()
        y.backward()
        y.backward()
        assert x.grad[0] == pytest.approx(8.0)

    def test_grad_reuse_in_graph(self):
        # x used twice: d(x*x + 3x)/dx = 2x + 3
        x = Tensor([4.0], requires_grad=True)
        (x * x + 3.0 * x).sum().backward()
        assert x.grad[0] == pytest.approx(11.0)

    def test_backward_is_linear(self):
        rng = np.random.default_rng(2)
        x0 = rng.standard_normal(6)

        def run(a, b):
            x = Tensor(x0.copy(), requires_grad=True)
            f = ad.tsum(ad.sigmoid(x))
            g = ad.tsum(x * x)
            (a * f + b * g).backward()
            return x.grad

        ga = run(2.0, 0.0)
        gb = run(0.0, -1.5)
        gc = run(2.0, -1.5)
        assert np.allclose(ga + gb, gc, atol=1e-6)

    def test_min_routes_gradient_to_winner(self):
        a = Tensor([1.0, 5.0], requires_grad=True)
        b = Tensor([2.0, 3.0], requires_grad=True)
        ad.tsum(ad.minimum(a, b)).backward()
        assert np.allclose(a.grad, [1.0, 0.0])
        assert np.allclose(b.grad, [0.0, 1.0])

    def test_min_tie_first_wins(self):
        a = Tensor([1.0], requires_grad=True)
        b = Tensor([1.0], requires_grad=True)
        ad.tsum(ad.minimum(a, b)).backward()
        assert a.grad[0] == 1.0 and b.grad[0] == 0.0


class TestGradientCheckPerOp:
    """Per-op finite-difference checks, float64, eps=1e-5, tolerance 1e-4."""

    EPS = 1e-5
    TOL = 1e-4

    @pytest.mark.parametrize(
        "name,fn",
        [
            ("add", lambda x: ad.tsum(x + x * 0.5)),
            ("sub", lambda x: ad.tsum(1.0 - x)),
            ("mul", lambda x: ad.tsum(x * x)),
            ("div", lambda x: ad.tsum(1.0 / (x * x + 1.0))),
            ("exp", lambda x: ad.tsum(ad.exp(x))),
            ("sigmoid", lambda x: ad.tsum(ad.sigmoid(x))),
            ("tanh", lambda x: ad.tsum(ad.tanh(x))),
            ("pow", lambda x: ad.tsum((x * x + 1.0) ** 1.5)),
            ("softmax", lambda x: ad.tsum(ad.softmax(x, axis=-1) * ad.softmax(x, axis=-1))),
            ("mean", lambda x: ad.tmean(x * x)),
        ],
    )
    def test_smooth_ops(self, name, fn):
        rng = np.random.default_rng(hash(name) % 2**32)
        x = Tensor(rng.standard_normal((3, 4)))
        assert gradient_check(fn, x, self.EPS) < self.TOL

    def test_abs_away_from_zero(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.uniform(0.5, 2.0, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4)))
        assert gradient_check(lambda t: ad.tsum(ad.absolute(t)), x, self.EPS) < self.TOL

    def test_relu_away_from_zero(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.uniform(0.5, 2.0, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4)))
        assert gradient_check(lambda t: ad.tsum(ad.relu(t)), x, self.EPS) < self.TOL

    def test_log_sqrt(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.uniform(0.5, 3.0, (4,)))
        assert gradient_check(lambda t: ad.tsum(ad.log(t) + ad.sqrt(t)), x, self.EPS) < self.TOL

    def test_matmul(self):
        rng = np.random.default_rng(10)
        b = rng.standard_normal((4, 2))
        x = Tensor(rng.standard_normal((3, 4)))
        assert gradient_check(lambda t: ad.tsum(ad.matmul(t, Tensor(b)) ** 2.0), x, self.EPS) < self.TOL

    def test_matmul_wrt_right_operand(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((3, 4))
        x = Tensor(rng.standard_normal((4, 2)))
        assert gradient_check(lambda t: ad.tsum(ad.matmul(Tensor(a), t) ** 2.0), x, self.EPS) < self.TOL

    def test_linear(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((5, 3))
        w = Tensor(rng.standard_normal((2, 3)))
        bias = Tensor(rng.standard_normal(2))
        assert (
            gradient_check(lambda t: ad.tsum(ad.linear(Tensor(x), t, bias) ** 2.0), w, self.EPS) < self.TOL
        )

    def test_solve(self):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        x = Tensor(rng.standard_normal(3))
        assert gradient_check(lambda t: ad.tsum(ad.solve(Tensor(a), t) ** 2.0), x, self.EPS) < self.TOL

    def test_solve_wrt_matrix(self):
        rng = np.random.default_rng(14)
        b = rng.standard_normal(3)
        a0 = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        x = Tensor(a0)
        assert gradient_check(lambda t: ad.tsum(ad.solve(t, Tensor(b)) ** 2.0), x, self.EPS) < self.TOL

    def test_getitem_take_concat(self):
        rng = np.random.default_rng(15)
        x = Tensor(rng.standard_normal((4, 5)))
        idx = np.array([0, 2, 2, 3])

        def fn(t):
            sliced = t[1:3, :]
            taken = ad.take(t, idx, axis=0)
            joined = ad.concat([sliced, taken], axis=0)
            return ad.tsum(joined * joined)

        assert gradient_check(fn, x, self.EPS) < self.TOL

    def test_where(self):
        rng = np.random.default_rng(16)
        x = Tensor(rng.standard_normal((3, 3)))
        cond = rng.random((3, 3)) > 0.5
        assert (
            gradient_check(lambda t: ad.tsum(ad.where(cond, t * 2.0, t * t)), x, self.EPS) < self.TOL
        )

    def test_axis_min_max(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.standard_normal((2, 5, 3)))

        def fn(t):
            return ad.tsum(ad.tmax(t, axis=1)) + ad.tsum(ad.tmin(t, axis=2))

        assert gradient_check(fn, x, self.EPS) < self.TOL


class TestConv2d:
    @staticmethod
    def conv_oracle(x, w, stride, padding, dilation, groups):
        """Direct 6-loop cross-correlation."""
        n, c, h, wd = x.shape
        co, cg, kh, kw = w.shape
        sh, sw = stride
        ph, pw = padding
        dh, dw = dilation
        ho = (h + 2 * ph - (dh * (kh - 1) + 1)) // sh + 1
        wo = (wd + 2 * pw - (dw * (kw - 1) + 1)) // sw + 1
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        out = np.zeros((n, co, ho, wo))
        for ni in range(n):
            for oc in range(co):
                g = oc // (co // groups)
                for oy in range(ho):
                    for ox in range(wo):
                        acc = 0.0
                        for ic in range(cg):
                            for u in range(kh):
                                for v in range(kw):
                                    acc += (
                                        xp[ni, g * cg + ic, oy * sh + u * dh, ox * sw + v * dw]
                                        * w[oc, ic, u, v]
                                    )
                        out[ni, oc, oy, ox] = acc
        return out

    def test_identity_1x1(self):
        x = np.random.default_rng(0).random((1, 1, 5, 5))
        out = ad.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
        assert np.allclose(out.data, x)

    def test_allones_3x3_on_constant(self):
        x = np.ones((1, 1, 5, 5))
        out = ad.conv2d(Tensor(x), Tensor(np.ones((1, 1, 3, 3))))
        assert out.shape == (1, 1, 3, 3)
        assert np.allclose(out.data, 9.0)

    @pytest.mark.parametrize(
        "stride,padding,dilation,groups,cin,cout",
        [
            ((1, 1), (0, 0), (1, 1), 1, 3, 4),
            ((2, 2), (1, 1), (1, 1), 1, 2, 3),
            ((2, 2), (2, 2), (2, 2), 1, 2, 2),
            ((1, 1), (2, 2), (1, 1), 4, 4, 4),  # depthwise
            ((1, 1), (3, 3), (3, 3), 2, 4, 6),  # dilated grouped
        ],
    )
    def test_matches_loop_oracle(self, stride, padding, dilation, groups, cin, cout):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((2, cin, 9, 10))
        w = rng.standard_normal((cout, cin // groups, 3, 3))
        out = ad.conv2d(Tensor(x), Tensor(w), stride, padding, dilation, groups)
        ref = self.conv_oracle(x, w, stride, padding, dilation, groups)
        assert np.allclose(out.data, ref, atol=1e-10)

    def test_channel_group_mismatch(self):
        with pytest.raises(ShapeError):
            ad.conv2d(Tensor(np.ones((1, 3, 5, 5))), Tensor(np.ones((2, 2, 3, 3))))

    def test_gradcheck_strided_dilated(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((1, 2, 7, 7)))
        w = Tensor(rng.standard_normal((3, 2, 3, 3)))

        def f_x(t):
            return ad.tsum(ad.conv2d(t, w, stride=2, padding=2, dilation=2) ** 2.0)

        def f_w(t):
            return ad.tsum(ad.conv2d(x, t, stride=2, padding=2, dilation=2) ** 2.0)

        assert gradient_check(f_x, x) < 1e-4
        assert gradient_check(f_w, w) < 1e-4

    def test_gradcheck_depthwise(self):
        rng = np.random.default_rng(6)
        x = Tensor(rng.standard_normal((1, 4, 6, 6)))
        w = Tensor(rng.standard_normal((4, 1, 3, 3)))
        assert gradient_check(lambda t: ad.tsum(ad.conv2d(x, t, padding=1, groups=4) ** 2.0), w) < 1e-4


class TestPooling:
    def test_global_avg_constant(self):
        x = Tensor(np.full((1, 2, 4, 4), 3.5))
        assert np.allclose(ad.global_avg_pool(x).data, 3.5)

    def test_channel_max(self):
        x = np.zeros((1, 3, 1, 1))
        x[0, :, 0, 0] = [1.0, 5.0, 3.0]
        assert ad.channel_max(Tensor(x)).data[0, 0, 0, 0] == 5.0

    def test_avg_pool_matches_loop(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 3, 6, 8))
        out = ad.avg_pool2d(Tensor(x), 2).data
        for n in range(2):
            for c in range(3):
                for i in range(3):
                    for j in range(4):
                        ref = x[n, c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].mean()
                        assert out[n, c, i, j] == pytest.approx(ref)

    def test_max_pool_matches_loop(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((1, 2, 7, 7))
        out = ad.max_pool2d(Tensor(x), 3, 2).data
        for c in range(2):
            for i in range(3):
                for j in range(3):
                    ref = x[0, c, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3].max()
                    assert out[0, c, i, j] == pytest.approx(ref)

    def test_max_pool_tie_routes_first(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        ad.tsum(ad.max_pool2d(x, 2)).backward()
        assert x.grad[0, 0, 0, 0] == 1.0
        assert x.grad.sum() == 1.0

    def test_window_too_large(self):
        with pytest.raises(ShapeError):
            ad.max_pool2d(Tensor(np.ones((1, 1, 2, 2))), 3)

    def test_pool_gradchecks(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.standard_normal((1, 2, 6, 6)))
        assert gradient_check(lambda t: ad.tsum(ad.avg_pool2d(t, 2) ** 2.0), x) < 1e-4
        assert gradient_check(lambda t: ad.tmean(ad.global_avg_pool(t) ** 2.0), x) < 1e-4
        # max pool: random values make ties measure-zero
        assert gradient_check(lambda t: ad.tsum(ad.max_pool2d(t, 2) ** 2.0), x) < 1e-4
        assert gradient_check(lambda t: ad.tsum(ad.channel_max(t) * ad.channel_mean(t)), x) < 1e-4


class TestUpsample:
    def test_2x_blocks(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        out = ad.upsample_nearest_2x(x).data[0, 0]
        assert np.allclose(out[:2, :2], 1.0)
        assert np.allclose(out[:2, 2:], 2.0)
        assert np.allclose(out[2:, :2], 3.0)
        assert np.allclose(out[2:, 2:], 4.0)

    def test_upsample_then_avgpool_is_identity(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 4, 5))
        back = ad.avg_pool2d(ad.upsample_nearest_2x(Tensor(x)), 2).data
        assert np.allclose(back, x, atol=1e-12)

    def test_matches_index_mapping(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((1, 2, 3, 4))
        out = ad.upsample_nearest_2x(Tensor(x)).data
        for i in range(6):
            for j in range(8):
                assert out[0, 1, i, j] == x[0, 1, i // 2, j // 2]

    def test_gradcheck(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((1, 1, 3, 3)))
        assert gradient_check(lambda t: ad.tsum(ad.upsample_nearest_2x(t) ** 2.0), x) < 1e-4


class TestBilinearSample:
    @staticmethod
    def sample_oracle(src, coords):
        """Scalar 4-tap interpolation with border clamping."""
        c, h, w = src.shape
        ho, wo, _ = coords.shape
        out = np.zeros((c, ho, wo))
        for i in range(ho):
            for j in range(wo):
                x = min(max(coords[i, j, 0], 0.0), w - 1.0)
                y = min(max(coords[i, j, 1], 0.0), h - 1.0)
                x0 = min(int(np.floor(x)), w - 2)
                y0 = min(int(np.floor(y)), h - 2)
                fx, fy = x - x0, y - y0
                out[:, i, j] = (
                    src[:, y0, x0] * (1 - fy) * (1 - fx)
                    + src[:, y0, x0 + 1] * (1 - fy) * fx
                    + src[:, y0 + 1, x0] * fy * (1 - fx)
                    + src[:, y0 + 1, x0 + 1] * fy * fx
                )
        return out

    def test_integer_lattice_exact(self):
        rng = np.random.default_rng(8)
        src = rng.random((3, 5, 6))
        coords = np.array([[[2.0, 3.0]]])
        out = ad.bilinear_sample(Tensor(src), Tensor(coords)).data
        assert np.array_equal(out[:, 0, 0], src[:, 3, 2])

    def test_midpoint(self):
        rng = np.random.default_rng(9)
        src = rng.random((2, 5, 6))
        coords = np.array([[[2.5, 3.0]]])
        out = ad.bilinear_sample(Tensor(src), Tensor(coords)).data
        assert np.allclose(out[:, 0, 0], 0.5 * (src[:, 3, 2] + src[:, 3, 3]))

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(10)
        src = rng.random((3, 7, 9))
        coords = np.stack(
            [rng.uniform(-1, 9.5, (4, 5)), rng.uniform(-1, 7.5, (4, 5))], axis=-1
        )
        out = ad.bilinear_sample(Tensor(src), Tensor(coords)).data
        assert np.allclose(out, self.sample_oracle(src, coords), atol=1e-12)

    def test_out_of_range_clamps(self):
        src = np.arange(6, dtype=np.float64).reshape(1, 2, 3)
        coords = np.array([[[-5.0, -5.0], [99.0, 99.0]]])
        out = ad.bilinear_sample(Tensor(src), Tensor(coords)).data
        assert out[0, 0, 0] == src[0, 0, 0]
        assert out[0, 0, 1] == src[0, 1, 2]

    def test_gradcheck_src_and_coords(self):
        rng = np.random.default_rng(11)
        src = Tensor(rng.random((2, 6, 7)))
        coords = Tensor(
            np.stack([rng.uniform(0.6, 5.3, (3, 4)), rng.uniform(0.6, 4.3, (3, 4))], axis=-1)
        )
        assert gradient_check(lambda t: ad.tsum(ad.bilinear_sample(t, coords) ** 2.0), src) < 1e-4
        assert gradient_check(lambda t: ad.tsum(ad.bilinear_sample(src, t) ** 2.0), coords) < 1e-4

    def test_batched_matches_per_sample(self):
        rng = np.random.default_rng(12)
        src = rng.random((2, 3, 6, 7))
        coords = np.stack(
            [rng.uniform(0, 6, (2, 4, 5)), rng.uniform(0, 5, (2, 4, 5))], axis=-1
        )
        out = ad.bilinear_sample(Tensor(src), Tensor(coords)).data
        for n in range(2):
            ref = ad.bilinear_sample(Tensor(src[n]), Tensor(coords[n])).data
            assert np.allclose(out[n], ref)

    def test_resize_bilinear_gradcheck(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.random((1, 2, 3, 4)))
        assert gradient_check(lambda t: ad.tsum(ad.resize_bilinear(t, 6, 8) ** 2.0), x) < 1e-4


class TestReduceFamily:
    def test_mean(self):
        assert ad.tmean(Tensor([1.0, 2.0, 3.0])).item() == pytest.approx(2.0)

    def test_pointwise_min_idempotent(self):
        rng = np.random.default_rng(14)
        m = rng.random((3, 3))
        out = ad.pointwise_min([Tensor(m), Tensor(m.copy())]).data
        assert np.array_equal(out, m)

    def test_pointwise_min_two_maps(self):
        rng = np.random.default_rng(15)
        a, b = rng.random((4, 4)), rng.random((4, 4))
        out = ad.pointwise_min([Tensor(a), Tensor(b)]).data
        assert np.array_equal(out, np.minimum(a, b))

    def test_masked_mean(self):
        x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
        mask = np.array([1, 0, 1, 0])
        assert ad.masked_mean(x, mask).item() == pytest.approx(2.0)

    def test_masked_mean_empty_raises(self):
        with pytest.raises(EmptySelectionError):
            ad.masked_mean(Tensor(np.ones(3)), np.zeros(3))


class TestSerialization:
    def test_roundtrip_f32(self, tmp_path):
        rng = np.random.default_rng(16)
        arr = rng.standard_normal((2, 3, 4)).astype(np.float32)
        p = tmp_path / "t.sdtn"
        ad.save_tensor(p, Tensor(arr))
        back = ad.load_tensor(p)
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)

    def test_roundtrip_f64(self, tmp_path):
        rng = np.random.default_rng(17)
        arr = rng.standard_normal((5,))
        p = tmp_path / "t.sdtn"
        ad.save_tensor(p, arr)
        back = ad.load_tensor(p)
        assert back.dtype == np.float64
        assert np.array_equal(back, arr)

    def test_header_layout(self, tmp_path):
        p = tmp_path / "t.sdtn"
        ad.save_tensor(p, np.zeros((2, 3), dtype=np.float32))
        raw = p.read_bytes()
        assert raw[:4] == b"SDTN"
        assert np.frombuffer(raw[4:12], dtype="<u4").tolist() == [1, 2]
        assert np.frombuffer(raw[12:20], dtype="<u4").tolist() == [2, 3]
        assert len(raw) == 20 + 6 * 4

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.sdtn"
        p.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(ValueError):
            ad.load_tensor(p)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=16),
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=16),
)
def test_property_min_le_both(xs, ys):
    n = min(len(xs), len(ys))
    a, b = np.array(xs[:n]), np.array(ys[:n])
    out = ad.minimum(Tensor(a), Tensor(b)).data
    assert np.all(out <= a) and np.all(out <= b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 4))
def test_property_conv_identity_kernel(seed, h, w):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 1, h, w))
    out = ad.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    assert np.allclose(out.data, x)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_property_backward_linearity(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-2, 2, 2)
    x0 = rng.standard_normal(5)

    def grad_of(scale_f, scale_g):
        x = Tensor(x0.copy(), requires_grad=True)
        out = scale_f * ad.tsum(ad.exp(x * 0.3)) + scale_g * ad.tsum(x * x)
        out.backward()
        return x.grad

    lhs = grad_of(a, b)
    rhs = a * grad_of(1.0, 0.0) + b * grad_of(0.0, 1.0)
    assert np.allclose(lhs, rhs, atol=1e-6)
