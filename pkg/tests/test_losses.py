import numpy as np
import pytest

from aquasplat.losses import (
    LossWeights,
    ShapeMismatchError,
    loss_depth,
    loss_recon,
    loss_scale,
    total_loss,
)
from aquasplat.metrics import ssim


def fd_check(f, x, grad, indices, h=1e-6, rel=1e-5, abs_=1e-9):
    for idx in indices:
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        assert grad[idx] == pytest.approx((up - down) / (2 * h), rel=rel, abs=abs_), idx


class TestRecon:
    def test_identical(self):
        img = np.random.default_rng(0).uniform(size=(8, 8, 3))
        value, grad = loss_recon(img, img)
        assert value == 0.0

    def test_constant_shift(self):
        img = np.random.default_rng(1).uniform(0.1, 0.8, size=(12, 12, 3))
        value, _ = loss_recon(img, img + 0.1)
        dssim = (1 - ssim(img, img + 0.1)) / 2
        assert value == pytest.approx(0.08 + 0.2 * dssim, abs=1e-12)
        l1_only, _ = loss_recon(img, img + 0.1, LossWeights(recon_dssim=0.0))
        assert l1_only == pytest.approx(0.1, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            loss_recon(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))

    def test_gradient_fd(self):
        rng = np.random.default_rng(2)
        r = rng.uniform(size=(9, 9, 3))
        t = rng.uniform(size=(9, 9, 3))
        _, grad = loss_recon(r, t)
        fd_check(lambda x: loss_recon(x, t)[0], r, grad, [(0, 0, 0), (4, 4, 1), (8, 2, 2)])


class TestDepth:
    def test_constant_depth_is_zero(self):
        D = np.full((6, 6), 0.4)
        img = np.random.default_rng(3).uniform(size=(6, 6, 3))
        terms, grad = loss_depth(D, D.copy(), img)
        assert terms == {"depth_l1": 0.0, "smooth": 0.0, "tv": 0.0}

    def test_ramp_oracle(self):
        W = 5
        D = np.tile(0.1 * np.arange(W, dtype=float), (4, 1))
        img = np.full((4, W, 3), 0.5)
        terms, _ = loss_depth(D, D.copy(), img, align=False)
        P = D.size
        # W - 1 nonzero forward differences per row, last column padded
        frac = (W - 1) / W
        assert terms["tv"] == pytest.approx(0.1 * 0.1 * frac, abs=1e-15)
        assert terms["smooth"] == pytest.approx(0.01 * 0.1 / 1e-3 * frac, abs=1e-12)
        assert terms["depth_l1"] == 0.0
        assert P == 20

    def test_alignment_scale_invariance(self):
        rng = np.random.default_rng(4)
        D = rng.uniform(0.2, 0.5, (5, 5))
        img = rng.uniform(size=(5, 5, 3))
        a, _ = loss_depth(D, D * 3.0, img)
        assert a["depth_l1"] == pytest.approx(0.0, abs=1e-15)

    def test_gradient_fd(self):
        rng = np.random.default_rng(5)
        D = rng.uniform(0.2, 0.5, (6, 7))
        Dp = rng.uniform(0.2, 0.5, (6, 7))
        img = rng.uniform(size=(6, 7, 3))
        for align in (False, True):
            _, grad = loss_depth(D, Dp, img, align=align)

            def f(x):
                return sum(loss_depth(x, Dp, img, align=align)[0].values())

            fd_check(f, D, grad, [(0, 0), (2, 3), (5, 6), (3, 6)])

    def test_image_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            loss_depth(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((5, 4, 3)))


class TestScale:
    def test_single(self):
        value, grad = loss_scale(np.log([[3.0, 2.0, 1.0]]))
        assert value == pytest.approx(100.0)
        np.testing.assert_allclose(grad, [[0, 0, 100.0]])

    def test_mean_of_two(self):
        value, _ = loss_scale(np.log([[1.0, 2.0, 5.0], [4.0, 3.0, 6.0]]))
        assert value == pytest.approx(200.0)

    def test_flat_goes_to_zero(self):
        value, _ = loss_scale(np.log([[1.0, 1.0, 1e-12]]))
        assert value < 1e-9

    def test_tie_goes_to_lowest_index(self):
        _, grad = loss_scale(np.zeros((1, 3)))
        np.testing.assert_array_equal(grad, [[100.0, 0, 0]])

    def test_gradient_fd(self):
        ls = np.log(np.random.default_rng(6).uniform(0.1, 1.0, (4, 3)))
        _, grad = loss_scale(ls)
        fd_check(lambda x: loss_scale(x)[0], ls, grad, list(np.ndindex(4, 3)))


class TestTotal:
    def test_sum(self):
        assert total_loss(0.1, 0.02, 0.3) == pytest.approx(0.42)
        assert total_loss(0, 0, 0) == 0.0

    def test_defaults(self):
        w = LossWeights()
        assert (w.recon_dssim, w.depth_l1, w.depth_smooth, w.depth_tv, w.scale) == (0.2, 0.1, 0.01, 0.1, 100)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(depth_tv=-1)
