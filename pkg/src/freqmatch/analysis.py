"""Spatial versus spectral similarity between two registered images.

Spectra are computed as ``|fft_shift(fft2(window * image))|`` (optionally
``log1p`` of that) and compared over the whole plane and within each
low/mid/high Chebyshev band.  SSIM uses 8-bit constants, so each pair of
arrays is first min-max scaled to ``[0, 255]`` with a scale shared by both.
"""
from __future__ import annotations

import numpy as np

from . import numerics
from .errors import DomainError

WINDOWS = ("hamming", "none")


def spectrum(img, window="hamming", log_magnitude=False):
    img = np.asarray(img, dtype=np.float64)
    if window == "hamming":
        img = img * numerics.hamming_window_2d(img.shape)
    elif window != "none":
        raise DomainError(f"unknown window {window!r}; choose from {WINDOWS}")
    mag = np.abs(numerics.fft_shift(numerics.fft2(img)))
    return np.log1p(mag) if log_magnitude else mag


def _to_8bit(a, b):
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    return (a - lo) * scale, (b - lo) * scale


def _similarity(a, b, region=None, win_size=7):
    a8, b8 = _to_8bit(a, b)
    if region is None:
        s = numerics.ssim(a8, b8, win_size=win_size)
        return {"ssim": s, "nmse": numerics.nmse(a, b)}
    smap = numerics.ssim_map(a8, b8, win_size=win_size)
    return {"ssim": float(smap[region].mean()), "nmse": numerics.nmse(a[region], b[region])}


def band_nmse(img_a, img_b, ratios=(0.3, 0.4, 0.3), window="hamming", log_magnitude=False):
    """Per-band spectral NMSE only (cheap path used by generator certification)."""
    sa = spectrum(img_a, window, log_magnitude)
    sb = spectrum(img_b, window, log_magnitude)
    masks = numerics.make_band_masks(sa.shape[0], ratios)
    return {name: numerics.nmse(sa[m], sb[m]) for name, m in masks.as_dict().items()}


def analyze_frequency(img_a, img_b, log_magnitude=False, window="hamming",
                      ratios=(0.3, 0.4, 0.3), win_size=7):
    """Similarity report: spatial SSIM/NMSE plus full-plane and per-band spectral SSIM/NMSE."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DomainError(f"need two equal-shape grayscale images, got {a.shape} and {b.shape}")
    if a.shape[0] != a.shape[1]:
        raise DomainError(f"band analysis needs square images, got {a.shape}")
    sa = spectrum(a, window, log_magnitude)
    sb = spectrum(b, window, log_magnitude)
    masks = numerics.make_band_masks(a.shape[0], ratios)
    report = {
        "spatial": _similarity(a, b, win_size=win_size),
        "spectral": {"full": _similarity(sa, sb, win_size=win_size)},
        "settings": {"window": window, "log_magnitude": bool(log_magnitude),
                     "ratios": list(masks.ratios), "ssim_window": win_size},
    }
    for name, m in masks.as_dict().items():
        report["spectral"][name] = _similarity(sa, sb, region=m, win_size=win_size)
    return report


def _matched_pairs(n_pairs, seed, classes, source, target, size):
    from . import data

    for i in range(n_pairs):
        cls = classes[i % len(classes)]
        s = int(np.random.default_rng([seed, i]).integers(0, 2**62))
        a, _ = data.render_phantom(cls, source, s, size)
        b, _ = data.render_phantom(cls, target, s, size)
        yield a, b


def certify_band_locality(n_pairs=100, seed=0, classes=(0, 1, 2, 3), source="domA", target="domB",
                          size=64, ratios=(0.3, 0.4, 0.3), window="hamming", log_magnitude=False):
    """Fraction of matched pairs whose mid-band spectral NMSE is below both other bands.

    Each pair renders the same ``(class, seed)`` in both domains, so only the
    domain transform differs.
    """
    rows = []
    for a, b in _matched_pairs(n_pairs, seed, classes, source, target, size):
        r = band_nmse(a, b, ratios, window, log_magnitude)
        rows.append((r["low"], r["mid"], r["high"]))
    rows = np.array(rows)
    ok = (rows[:, 1] < rows[:, 0]) & (rows[:, 1] < rows[:, 2])
    return {"pairs": len(rows), "fraction": float(ok.mean()),
            "median_nmse": dict(zip(("low", "mid", "high"), np.median(rows, axis=0).tolist()))}


def band_difference_ratio(n_pairs=100, seed=0, classes=(0, 1, 2, 3), source="domA", target="domB",
                          size=64, ratios=(0.3, 0.4, 0.3)):
    """Mean absolute spectrum difference summed outside the mid band over the sum inside it."""
    total = None
    for a, b in _matched_pairs(n_pairs, seed, classes, source, target, size):
        d = np.abs(spectrum(a, "none") - spectrum(b, "none"))
        total = d if total is None else total + d
    mid = numerics.make_band_masks(size, ratios).mid
    return float(total[~mid].sum() / total[mid].sum())
