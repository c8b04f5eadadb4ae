import numpy as np
import pytest

from freqmatch import analysis
from freqmatch.data import render_phantom
from freqmatch.errors import DomainError


def test_identical_images_are_perfectly_similar():
    img = render_phantom(0, "domA", 3)[0]
    rep = analysis.analyze_frequency(img, img)
    assert rep["spatial"]["ssim"] == pytest.approx(1.0)
    assert rep["spatial"]["nmse"] == 0.0
    for band in ("full", "low", "mid", "high"):
        assert rep["spectral"][band]["ssim"] == pytest.approx(1.0)
        assert rep["spectral"][band]["nmse"] == 0.0


def test_independent_noise_has_near_zero_ssim():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        rep = analysis.analyze_frequency(rng.uniform(size=(64, 64)), rng.uniform(size=(64, 64)))
        assert abs(rep["spatial"]["ssim"]) < 0.1


@pytest.mark.parametrize("log_magnitude", [False, True])
def test_matched_pair_is_closest_in_mid_band(log_magnitude):
    a = render_phantom(2, "domA", 11)[0]
    b = render_phantom(2, "domB", 11)[0]
    spec = analysis.analyze_frequency(a, b, log_magnitude=log_magnitude)["spectral"]
    assert spec["mid"]["nmse"] < spec["low"]["nmse"]
    assert spec["mid"]["nmse"] < spec["high"]["nmse"]


def test_report_records_settings():
    x = np.random.default_rng(0).uniform(size=(20, 20))
    rep = analysis.analyze_frequency(x, x + 0.1, window="none", log_magnitude=True)
    assert rep["settings"]["window"] == "none" and rep["settings"]["log_magnitude"] is True
    assert rep["settings"]["ratios"] == [0.3, 0.4, 0.3]


def test_band_nmse_agrees_with_full_report():
    a, b = render_phantom(1, "domA", 4)[0], render_phantom(1, "domB", 4)[0]
    quick = analysis.band_nmse(a, b)
    full = analysis.analyze_frequency(a, b)["spectral"]
    for band in quick:
        assert quick[band] == pytest.approx(full[band]["nmse"])


@pytest.mark.parametrize("a,b", [((8, 8), (8, 9)), ((8, 9), (8, 9)), ((8,), (8,))])
def test_bad_shapes_rejected(a, b):
    with pytest.raises(DomainError):
        analysis.analyze_frequency(np.zeros(a), np.zeros(b))


def test_unknown_window_rejected():
    with pytest.raises(DomainError):
        analysis.spectrum(np.zeros((4, 4)), window="hann")
