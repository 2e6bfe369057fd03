import json

import numpy as np
import pytest

from aquasplat.data import (
    WATER_B_INF,
    WATER_BETA_B,
    WATER_BETA_D,
    ChecksumError,
    MalformedCameraError,
    MissingFileError,
    SizeMismatchError,
    SyntheticSceneSpec,
    generate_scene,
    invert_formation,
    load_dataset,
    preset,
    quantize,
    save_dataset,
    split_views,
    underwater_formation,
)


@pytest.fixture(scope="module")
def tiny():
    return generate_scene(preset("tiny", seed=3))


class TestFormation:
    def test_white_oracle(self):
        I = underwater_formation(np.ones((1, 1, 3)), np.ones((1, 1)), WATER_BETA_D, WATER_BETA_B, WATER_B_INF)
        # per channel exp(-bD) + Binf (1 - exp(-bB)); blue backscatter is 0.19634
        np.testing.assert_allclose(I[0, 0], [0.31546, 0.41571, 0.60290], atol=1e-5)

    def test_vacuum(self):
        J = np.random.default_rng(0).uniform(size=(4, 4, 3))
        z = np.full((4, 4), 3.0)
        np.testing.assert_array_equal(underwater_formation(J, z, [0] * 3, [0] * 3, [0.5] * 3), J)

    def test_zero_path(self):
        J = np.random.default_rng(1).uniform(size=(4, 4, 3))
        np.testing.assert_array_equal(
            underwater_formation(J, np.zeros((4, 4)), WATER_BETA_D, WATER_BETA_B, WATER_B_INF), J
        )

    def test_inverse(self, tiny):
        ds, _ = tiny
        t = ds.medium_truth
        J = invert_formation(ds.images, ds.depth_maps, t["beta_D"], t["beta_B"], t["B_inf"])
        assert np.max(np.abs(J - ds.clean_images)) < 1e-6


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            SyntheticSceneSpec(beta_D=(-1.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            SyntheticSceneSpec(n_cameras=3)
        with pytest.raises(ValueError):
            SyntheticSceneSpec(kind="ocean")
        with pytest.raises(ValueError):
            preset("huge")

    def test_paper_preset(self):
        spec = preset("paper")
        assert (spec.width, spec.height, spec.n_gaussians, spec.n_cameras) == (64, 64, 500, 24)
        assert tuple(spec.beta_D) == WATER_BETA_D

    @pytest.mark.parametrize("kind", ["plane", "spheres", "room"])
    def test_kinds_generate(self, kind):
        ds, init = generate_scene(preset("tiny", kind=kind, seed=1))
        assert len(ds) == 4 and ds.images.shape == (4, 16, 16, 3)
        assert np.all(np.isfinite(ds.images)) and np.all(ds.depth_maps > 0)

    def test_deterministic(self):
        a, ia = generate_scene(preset("tiny", seed=5))
        b, ib = generate_scene(preset("tiny", seed=5))
        assert a.images.tobytes() == b.images.tobytes()
        assert ia.positions.tobytes() == ib.positions.tobytes()
        c, _ = generate_scene(preset("tiny", seed=6))
        assert a.images.tobytes() != c.images.tobytes()

    def test_split(self):
        train, test = split_views(24)
        assert test == [0, 8, 16]
        assert len(train) == 21


class TestDisk:
    def test_round_trip(self, tiny, tmp_path):
        ds, init = tiny
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        np.testing.assert_array_equal(back.images, quantize(ds.images))
        np.testing.assert_array_equal(back.clean_images, quantize(ds.clean_images))
        np.testing.assert_array_equal(back.depth_maps, ds.depth_maps)
        for a, b in zip(back.cameras, ds.cameras):
            np.testing.assert_array_equal(a.R, b.R)
            np.testing.assert_array_equal(a.t, b.t)
        assert back.medium_truth == ds.medium_truth
        np.testing.assert_array_equal(back.init_cloud.positions, init.positions)

    def test_saved_bytes_deterministic(self, tmp_path):
        ds, _ = generate_scene(preset("tiny", seed=2))
        save_dataset(ds, tmp_path / "a")
        save_dataset(generate_scene(preset("tiny", seed=2))[0], tmp_path / "b")
        for f in sorted((tmp_path / "a").rglob("*")):
            if f.is_file():
                assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()

    def test_missing_depth_names_view(self, tiny, tmp_path):
        save_dataset(tiny[0], tmp_path)
        (tmp_path / "depth" / "002.f32").unlink()
        with pytest.raises(MissingFileError, match="view 2"):
            load_dataset(tmp_path)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_dataset(tmp_path)

    def test_checksum(self, tiny, tmp_path):
        save_dataset(tiny[0], tmp_path)
        f = tmp_path / "depth" / "001.f32"
        raw = bytearray(f.read_bytes())
        raw[0] ^= 1
        f.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            load_dataset(tmp_path)
        load_dataset(tmp_path, verify=False)

    def test_malformed_camera(self, tiny, tmp_path):
        save_dataset(tiny[0], tmp_path)
        cams = json.loads((tmp_path / "cameras.json").read_text())
        cams[1]["R"] = [1, 0, 0]
        (tmp_path / "cameras.json").write_text(json.dumps(cams))
        with pytest.raises(MalformedCameraError, match="camera 1"):
            load_dataset(tmp_path, verify=False)

    def test_size_mismatch(self, tiny, tmp_path):
        save_dataset(tiny[0], tmp_path)
        cams = json.loads((tmp_path / "cameras.json").read_text())
        cams[0]["width"] = 17
        (tmp_path / "cameras.json").write_text(json.dumps(cams))
        with pytest.raises(SizeMismatchError, match="view 0"):
            load_dataset(tmp_path, verify=False)

    def test_ply_fallback(self, tiny, tmp_path):
        save_dataset(tiny[0], tmp_path)
        (tmp_path / "init_cloud.bin").unlink()
        back = load_dataset(tmp_path, verify=False)
        assert len(back.init_cloud) == len(tiny[1])
