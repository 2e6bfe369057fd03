import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aquasplat.scene import (
    FEATURE_DIM,
    Camera,
    GaussianCloud,
    ParameterDomainError,
    cloud_from_ply,
    covariance_backward,
    covariance_from_params,
    fourier_encode,
    fourier_feature,
    load_f32,
    load_png,
    normalize_positions,
    quantile_bound,
    quaternion_to_matrix,
    read_ascii_ply,
    read_cloud,
    rgb_to_sh_dc,
    save_f32,
    save_png,
    sh_basis,
    sh_dc_to_rgb,
    write_cloud,
)


def _rotz(deg):
    h = np.radians(deg) / 2
    return np.array([np.cos(h), 0.0, 0.0, np.sin(h)])


class TestCovariance:
    def test_identity(self):
        cov = covariance_from_params(np.array([1.0, 0, 0, 0]), np.zeros(3))
        np.testing.assert_allclose(cov, np.eye(3), atol=1e-15)

    def test_rotated_about_z(self):
        cov = covariance_from_params(_rotz(90), np.array([np.log(2.0), 0.0, 0.0]))
        np.testing.assert_allclose(cov, np.diag([1.0, 4.0, 1.0]), atol=1e-12)

    def test_diagonal(self):
        cov = covariance_from_params(np.array([1.0, 0, 0, 0]), np.log([3.0, 2.0, 1.0]))
        np.testing.assert_allclose(cov, np.diag([9.0, 4.0, 1.0]), atol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(ParameterDomainError):
            covariance_from_params(np.array([1.0, 0, 0, 0]), np.array([np.nan, 0, 0]))
        with pytest.raises(ParameterDomainError):
            covariance_from_params(np.array([np.inf, 0, 0, 0]), np.zeros(3))

    def test_quaternion_scale_invariant(self):
        q = np.array([0.3, -0.2, 0.5, 0.7])
        np.testing.assert_allclose(quaternion_to_matrix(q), quaternion_to_matrix(5 * q), atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, 4, elements=st.floats(-2, 2)).filter(lambda q: np.linalg.norm(q) > 0.1),
        arrays(np.float64, 3, elements=st.floats(-3, 3)),
    )
    def test_symmetric_positive_definite(self, q, ls):
        cov = covariance_from_params(q, ls)
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        assert np.linalg.eigvalsh(cov).min() > 0
        R = quaternion_to_matrix(q)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        q = rng.normal(size=(4, 4))
        ls = rng.normal(scale=0.5, size=(4, 3))
        W = rng.normal(size=(4, 3, 3))
        dq, dls = covariance_backward(q, ls, W)
        h = 1e-6
        for arr, grad in ((q, dq), (ls, dls)):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                up = np.sum(covariance_from_params(q, ls) * W)
                arr[idx] = orig - h
                down = np.sum(covariance_from_params(q, ls) * W)
                arr[idx] = orig
                np.testing.assert_allclose(grad[idx], (up - down) / (2 * h), rtol=1e-6, atol=1e-8)


class TestFourierFeatures:
    def test_origin(self):
        f = fourier_encode(np.zeros(3))
        assert f.shape == (FEATURE_DIM,)
        np.testing.assert_array_equal(f[0::2], 0.0)
        np.testing.assert_array_equal(f[1::2], 1.0)

    def test_half_first_octave(self):
        f = fourier_encode(np.array([0.5, 0.0, 0.0]))
        # first coordinate, m = 1: sin(pi) and cos(pi)
        assert abs(f[0]) < 1e-15
        assert f[1] == -1.0

    def test_length_and_range(self):
        f = fourier_feature(np.random.default_rng(0).normal(size=(7, 3)), 1.5)
        assert f.shape == (7, 24)
        assert np.all(np.abs(f) <= 1.0)

    def test_normalization_clamps(self):
        p = normalize_positions(np.array([[-4.0, 0.0, 4.0]]), 2.0)
        np.testing.assert_array_equal(p, [[0.0, 0.5, 1.0]])

    def test_quantile_oracle(self):
        pts = np.zeros((100, 3))
        pts[:, 1] = -np.arange(1, 101)
        assert quantile_bound(pts) == pytest.approx(97.03, abs=1e-12)

    def test_quantile_degenerate(self):
        assert quantile_bound(np.full((10, 3), 5.0)) == 5.0
        assert quantile_bound(np.array([[0.0, 2.0, -1.0]])) == 2.0
        with pytest.raises(ParameterDomainError):
            quantile_bound(np.zeros((0, 3)))


class TestSphericalHarmonics:
    def test_dc_round_trip(self):
        rgb = np.array([[0.1, 0.5, 0.9]])
        np.testing.assert_allclose(sh_dc_to_rgb(rgb_to_sh_dc(rgb)), rgb, atol=1e-15)

    @pytest.mark.parametrize("degree", [0, 1, 2, 3])
    def test_basis_gradient(self, degree):
        rng = np.random.default_rng(degree)
        d = rng.normal(size=(5, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        B, dB = sh_basis(d, degree)
        assert B.shape == (5, (degree + 1) ** 2)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (sh_basis(d + e, degree)[0] - sh_basis(d - e, degree)[0]) / (2 * h)
            np.testing.assert_allclose(dB[:, :, j], fd, atol=1e-7)

    def test_orthonormal_on_sphere(self):
        # Monte Carlo Gram matrix of the degree-3 basis is close to identity
        rng = np.random.default_rng(1)
        d = rng.normal(size=(200_000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        B, _ = sh_basis(d, 3)
        gram = 4 * np.pi * B.T @ B / d.shape[0]
        np.testing.assert_allclose(gram, np.eye(16), atol=0.03)


class TestCamera:
    def test_look_at_centers_target(self):
        cam = Camera.look_at([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], width=33, height=17, fx=20.0)
        p = cam.R @ np.zeros(3) + cam.t
        assert p[2] > 0
        u = cam.fx * p[0] / p[2] + cam.cx
        v = cam.fy * p[1] / p[2] + cam.cy
        assert (u, v) == pytest.approx((16.0, 8.0), abs=1e-12)
        np.testing.assert_allclose(cam.center, [1.0, 2.0, 3.0], atol=1e-12)

    def test_rejects_bad_rotation(self):
        with pytest.raises(ValueError):
            Camera(R=2 * np.eye(3), t=np.zeros(3), fx=1, fy=1, cx=0, cy=0, width=8, height=8)

    def test_dict_round_trip(self):
        cam = Camera.look_at([0.0, -2.0, 1.0], [0, 0, 0], width=16, height=12, fx=14.0)
        back = Camera.from_dict(cam.to_dict())
        np.testing.assert_array_equal(back.R, cam.R)
        np.testing.assert_array_equal(back.t, cam.t)
        assert (back.width, back.height, back.fx) == (16, 12, 14.0)


class TestCloud:
    def _cloud(self, n=6, degree=1):
        rng = np.random.default_rng(0)
        cloud = GaussianCloud.create(
            rng.normal(size=(n, 3)), rng.uniform(size=(n, 3)), scales=rng.uniform(0.1, 0.3, (n, 3)),
            opacities=rng.uniform(0.2, 0.9, n), rotations=rng.normal(size=(n, 4)), sh_degree=degree,
        )
        cloud.base_color[:, 1:] = rng.normal(size=cloud.base_color[:, 1:].shape)
        return cloud

    def test_domain_invariants(self):
        cloud = self._cloud()
        np.testing.assert_allclose(np.linalg.norm(cloud.rotations, axis=1), 1.0, atol=1e-15)
        assert np.all(cloud.scales > 0)
        assert np.all((cloud.opacities > 0) & (cloud.opacities < 1))
        assert cloud.features.shape == (6, 24)

    def test_binary_round_trip(self):
        cloud = self._cloud()
        buf = io.BytesIO()
        write_cloud(buf, cloud)
        assert buf.getvalue()[:4] == b"AQSP"
        buf.seek(0)
        back = read_cloud(buf)
        for name in ("positions", "rotations", "log_scales", "opacity_logits", "base_color", "features"):
            np.testing.assert_array_equal(getattr(back, name), getattr(cloud, name))
        assert back.sh_degree == 1
        assert back.normalization_bound == cloud.normalization_bound

    def test_select_and_concat(self):
        cloud = self._cloud()
        mask = np.array([True, False, True, False, False, True])
        sub = cloud.select(mask)
        both = GaussianCloud.concat(sub, sub)
        assert len(both) == 6
        np.testing.assert_array_equal(both.positions[3:], cloud.positions[mask])

    def test_primitive_view(self):
        cloud = self._cloud()
        prim = cloud.primitive(2)
        np.testing.assert_allclose(prim.scale, cloud.scales[2])
        assert prim.opacity == pytest.approx(cloud.opacities[2])


class TestImageIO:
    def test_png_round_trip_is_quantized(self, tmp_path):
        img = np.random.default_rng(0).uniform(size=(9, 11, 3))
        save_png(tmp_path / "a.png", img)
        back = load_png(tmp_path / "a.png")
        np.testing.assert_array_equal(back, np.round(img * 255) / 255)

    def test_f32_round_trip(self, tmp_path):
        arr = np.random.default_rng(1).uniform(size=(5, 7)).astype(np.float32).astype(np.float64)
        save_f32(tmp_path / "d.f32", arr)
        np.testing.assert_array_equal(load_f32(tmp_path / "d.f32", (5, 7)), arr)
        with pytest.raises(ValueError):
            load_f32(tmp_path / "d.f32", (6, 7))


class TestPly:
    PLY = """ply
format ascii 1.0
element vertex 5
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
end_header
0 0 0 255 0 0
1 0 0 0 255 0
0 1 0 0 0 255
0 0 1 255 255 255
1 1 1 0 0 0
"""

    def test_parse(self, tmp_path):
        path = tmp_path / "p.ply"
        path.write_text(self.PLY)
        xyz, rgb = read_ascii_ply(path)
        assert xyz.shape == (5, 3)
        np.testing.assert_array_equal(rgb[0], [1.0, 0.0, 0.0])

    def test_cloud_from_ply(self, tmp_path):
        path = tmp_path / "p.ply"
        path.write_text(self.PLY)
        cloud = cloud_from_ply(path)
        assert len(cloud) == 5
        # origin's three nearest neighbours are all at distance 1
        np.testing.assert_allclose(cloud.scales[0], 1.0)
        np.testing.assert_allclose(sh_dc_to_rgb(cloud.base_color[:, 0])[3], 1.0)
