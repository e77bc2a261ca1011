import math
from pathlib import Path

import numpy as np
import pytest

import lumidiff

DATA = Path(__file__).resolve().parents[2] / "data"


def test_haar_round_trip_and_energy():
    rng = np.random.default_rng(0)
    x = rng.random((6, 8, 3))
    bands = lumidiff.dwt2(x)
    assert all(b.shape == (3, 4, 3) for b in bands)
    np.testing.assert_allclose(lumidiff.idwt2(*bands), x, atol=1e-12)
    assert math.isclose(sum((b**2).sum() for b in bands), (x**2).sum(), rel_tol=1e-12)


def test_dft_matches_numpy():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 5))
    amp, pha = lumidiff.dft_amp_pha(x)
    ref = np.fft.fft2(x)
    np.testing.assert_allclose(amp[..., 0], np.abs(ref), atol=1e-10)
    diff = np.angle(np.exp(1j * (pha[..., 0] - np.angle(ref))))
    assert np.abs(diff).max() < 1e-9


def test_metrics_and_losses():
    a = np.full((8, 8, 3), 0.5)
    b = np.full((8, 8, 3), 0.6)
    assert lumidiff.psnr(a, b) == pytest.approx(20.0)
    assert lumidiff.color_loss(a) == 0.0
    rng = np.random.default_rng(2)
    img = rng.random((16, 16, 3))
    assert lumidiff.ssim(img, img) == pytest.approx(1.0)
    assert lumidiff.loe(img, img) == 0.0
    assert lumidiff.content_loss(img, img) == 0.0
    assert lumidiff.spa_loss(img, img) == 0.0


def test_niqe_on_bundled_photo():
    photo = lumidiff.load_image(DATA / "photos" / "chelsea.png")
    assert photo.shape == (256, 256, 3)
    assert math.isfinite(lumidiff.niqe(photo, DATA / "niqe_pristine.bin"))


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(lumidiff.NumericError):
        lumidiff.psnr(np.full((4, 4, 3), 2.0), np.zeros((4, 4, 3)))
    with pytest.raises(lumidiff.IoError):
        lumidiff.load_image(tmp_path / "missing.png")
    with pytest.raises(lumidiff.ConfigError):
        lumidiff.config_toml(overrides={"no_such_key": "1"})
    assert issubclass(lumidiff.ConfigError, lumidiff.Error)


def test_config_hash_ignores_iterations():
    base = lumidiff.config_hash()
    assert lumidiff.config_hash(overrides={"iterations": "7"}) == base
    assert lumidiff.config_hash(overrides={"omega": "0.3"}) != base
    assert "[train]" in lumidiff.config_toml()


def test_train_and_enhance_tiny(tmp_path):
    rng = np.random.default_rng(3)
    data = tmp_path / "data"
    data.mkdir()
    lumidiff.save_image(rng.random((20, 20, 3)) * 0.3, data / "a.png")
    overrides = {
        "dataset.root": str(data),
        "paths.output_dir": str(tmp_path / "run"),
        "iterations": "3",
        "patch_size": "16",
        "batch_size": "1",
        "ssim_window": "7",
        "unet_width": "8",
        "unet_levels": "2",
        "illum_width": "4",
        "timesteps": "20",
        "sample_steps": "3",
        "rec_sample_steps": "2",
    }
    losses = lumidiff.train(overrides=overrides)
    assert len(losses) == 3 and all(math.isfinite(v) for v in losses)
    low = rng.random((12, 14, 3)) * 0.3
    out, illum = lumidiff.enhance(tmp_path / "run" / "checkpoint.bin", low, seed=1)
    again, _ = lumidiff.enhance(tmp_path / "run" / "checkpoint.bin", low, seed=1)
    assert out.shape == low.shape and illum.shape == low.shape
    np.testing.assert_array_equal(out, again)
    assert out.mean() >= low.mean() - 1e-9
