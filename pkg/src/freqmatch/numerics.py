"""Dense array kernels: 2-D FFT, spectrum shifting, band masks, pooling,
similarity maps, resampling and the image-similarity metrics.

All transforms act on the last two axes, so a ``(C, H, W)`` stack is handled
channel by channel without a Python loop.

FFT normalization: the forward transform is unnormalized and the inverse
divides by ``H * W``.  Parseval therefore reads
``sum(|g|**2) == sum(|fft2(g)|**2) / (H * W)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, EmptyForeground, ConfigError

_AXES = (-2, -1)


def _check_finite(x, what="input"):
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{what} contains non-finite values")
    return x


def _check_2d(x):
    if x.ndim < 2 or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise DomainError(f"expected at least a 2-D array with positive sides, got shape {x.shape}")


# ---------------------------------------------------------------- FFT

def fft2(g):
    """Unnormalized forward 2-D DFT over the last two axes."""
    g = _check_finite(g)
    _check_2d(g)
    return np.fft.fft2(g, axes=_AXES)


def ifft2(s):
    """Inverse of :func:`fft2`; divides by ``H * W``."""
    s = _check_finite(s, "spectrum")
    _check_2d(s)
    return np.fft.ifft2(s, axes=_AXES)


def fft_shift(s):
    """Move the zero-frequency bin to index ``(H // 2, W // 2)``."""
    return np.fft.fftshift(np.asarray(s), axes=_AXES)


def ifft_shift(s):
    return np.fft.ifftshift(np.asarray(s), axes=_AXES)


def real_part(z, rtol=1e-6):
    """Real part of an inverse transform, asserting the imaginary residue is negligible.

    The bound is ``max|imag| <= rtol * (1 + max|real|)``; a violation means a
    filter broke Hermitian symmetry.
    """
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return z
    re = z.real
    bound = rtol * (1.0 + (np.abs(re).max() if re.size else 0.0))
    resid = np.abs(z.imag).max() if z.size else 0.0
    if resid > bound:
        raise DomainError(f"imaginary residue {resid:.3e} exceeds {bound:.3e}; filter is not symmetric")
    return re


# ---------------------------------------------------------------- band masks

@dataclass(frozen=True)
class BandMasks:
    """Disjoint low/mid/high masks over a centered ``side x side`` spectrum."""

    low: np.ndarray
    mid: np.ndarray
    high: np.ndarray
    ratios: tuple

    @property
    def side(self):
        return self.low.shape[0]

    def __iter__(self):
        return iter((self.low, self.mid, self.high))

    def as_dict(self):
        return {"low": self.low, "mid": self.mid, "high": self.high}


def chebyshev_radius(side):
    """Normalized Chebyshev distance of each centered bin from the spectrum center."""
    c = side // 2
    off = np.arange(side) - c
    k = np.maximum(np.abs(off)[:, None], np.abs(off)[None, :])
    return k / max(c, 1)


def make_band_masks(side, ratios=(0.3, 0.4, 0.3)):
    """Partition a centered ``side x side`` spectrum into square annuli.

    A bin with normalized Chebyshev radius ``rho`` is low when
    ``rho <= r_low``, mid when ``r_low < rho <= r_low + r_mid`` and high
    otherwise.  Thresholds are clamped to ``[0, 1]``.
    """
    side = int(side)
    if side < 2:
        raise ConfigError(f"band mask side must be >= 2, got {side}")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0:
        raise ConfigError(f"band ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"band ratios must sum to 1, got {sum(ratios)!r}")
    rho = chebyshev_radius(side)
    t_low = min(max(ratios[0], 0.0), 1.0) + 1e-12
    t_mid = min(max(ratios[0] + ratios[1], 0.0), 1.0) + 1e-12
    low = rho <= t_low
    mid = (rho > t_low) & (rho <= t_mid)
    high = ~(low | mid)
    return BandMasks(low=low, mid=mid, high=high, ratios=ratios)


def band_filter(s, mask):
    """Zero every spectral bin where ``mask`` is 0, keep the others."""
    s = np.asarray(s)
    mask = np.asarray(mask, dtype=bool)
    if s.shape[-2:] != mask.shape:
        raise DomainError(f"mask shape {mask.shape} does not match spectrum {s.shape[-2:]}")
    return np.where(mask, s, 0)


def band_project(x, mask):
    """Real-to-real band-pass: ``real(ifft2(ifft_shift(mask * fft_shift(fft2(x)))))``.

    Computed in double precision whatever the input dtype.  With a
    point-symmetric mask this map is self-adjoint, which the autodiff layer
    relies on.
    """
    spec = fft_shift(fft2(np.asarray(x, dtype=np.float64)))
    return real_part(ifft2(ifft_shift(band_filter(spec, mask))))


def band_split(x, masks):
    """Split real ``(..., s, s)`` data into low, mid and high components."""
    return tuple(band_project(x, m) for m in masks)


# ---------------------------------------------------------------- pooling

def pooling_matrix(m, n, dtype=np.float64):
    """``(m, n)`` matrix ``P`` such that ``f @ P`` is adaptive average pooling to length ``n``.

    Output ``j`` averages input indices ``[floor(j*m/n), ceil((j+1)*m/n))``.
    """
    if m < 1:
        raise EmptyForeground("cannot pool an empty sequence")
    if n < 1:
        raise DomainError(f"output length must be >= 1, got {n}")
    P = np.zeros((m, n), dtype=dtype)
    for j in range(n):
        lo = (j * m) // n
        hi = -((-(j + 1) * m) // n)
        P[lo:hi, j] = 1.0 / (hi - lo)
    return P


def adaptive_avg_pool_1d(f, n):
    f = _check_finite(f)
    return f @ pooling_matrix(f.shape[-1], n, dtype=np.result_type(f.dtype, np.float32))


def masked_avg_pool(f, m):
    """Per-channel mean of a ``(C, H, W)`` feature map over pixels where ``m`` is 1."""
    f = np.asarray(f)
    m = np.asarray(m)
    if f.shape[-2:] != m.shape:
        raise DomainError(f"mask shape {m.shape} does not match feature map {f.shape[-2:]}")
    total = m.sum()
    if total <= 0:
        raise EmptyForeground("mask has no foreground pixels")
    return (f * m).sum(axis=_AXES) / total


def cosine_map(f, p):
    """Cosine similarity between each pixel vector of ``f`` (C, H, W) and ``p`` (C,).

    Zero-norm pixel vectors map to 0.
    """
    f = np.asarray(f, dtype=float)
    p = np.asarray(p, dtype=float)
    pn = np.linalg.norm(p)
    if pn == 0:
        raise DomainError("prototype has zero norm")
    dot = np.tensordot(p, f, axes=(0, 0))
    fn = np.sqrt((f * f).sum(axis=0))
    out = np.zeros_like(dot)
    nz = fn > 0
    out[nz] = dot[nz] / (fn[nz] * pn)
    return np.clip(out, -1.0, 1.0)


# ---------------------------------------------------------------- resampling

def bilinear_matrix(n_out, n_in, dtype=np.float64):
    """1-D linear interpolation matrix with aligned corners, shape ``(n_out, n_in)``."""
    R = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1 or n_out == 1:
        R[:, 0] = 1.0
        return R
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    w = pos - lo
    R[np.arange(n_out), lo] = 1.0 - w
    R[np.arange(n_out), lo + 1] += w
    return R


def upsample_bilinear(x, shape):
    x = np.asarray(x)
    Ry = bilinear_matrix(shape[0], x.shape[-2], dtype=x.dtype)
    Rx = bilinear_matrix(shape[1], x.shape[-1], dtype=x.dtype)
    return Ry @ x @ Rx.T


def nearest_downsample(mask, shape):
    """Nearest-neighbour resampling; output pixel ``i`` reads input ``floor(i * H_in / H_out)``."""
    mask = np.asarray(mask)
    iy = (np.arange(shape[0]) * mask.shape[0]) // shape[0]
    ix = (np.arange(shape[1]) * mask.shape[1]) // shape[1]
    return mask[np.ix_(iy, ix)]


# ---------------------------------------------------------------- image metrics

def hamming_window_2d(shape):
    """Separable 2-D Hamming window (outer product of ``0.54 - 0.46 cos`` windows)."""
    if np.isscalar(shape):
        shape = (int(shape), int(shape))
    return np.outer(np.hamming(shape[0]), np.hamming(shape[1]))


def nmse(a, b):
    """``||a - b||^2 / ||a||^2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
    denom = float((a * a).sum())
    if denom == 0:
        raise DomainError("reference has zero norm")
    return float(((a - b) ** 2).sum()) / denom


def ssim_map(a, b, data_range=255.0, win_size=7, k1=0.01, k2=0.03):
    """Local SSIM over a uniform ``win_size`` window with sample covariances.

    Returns the full-size map; values within ``(win_size - 1) // 2`` of the
    border are computed on reflected padding and usually cropped by callers.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < win_size:
        raise DomainError(f"images smaller than the {win_size}x{win_size} window")
    npix = win_size ** a.ndim
    cov_norm = npix / (npix - 1)
    filt = lambda x: ndimage.uniform_filter(x, size=win_size, mode="reflect")  # noqa: E731
    ux, uy = filt(a), filt(b)
    vx = cov_norm * (filt(a * a) - ux * ux)
    vy = cov_norm * (filt(b * b) - uy * uy)
    vxy = cov_norm * (filt(a * b) - ux * uy)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    return ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux ** 2 + uy ** 2 + c1) * (vx + vy + c2))


def ssim(a, b, data_range=255.0, win_size=7):
    """Mean single-scale SSIM with the border of half a window cropped."""
    S = ssim_map(a, b, data_range=data_range, win_size=win_size)
    pad = (win_size - 1) // 2
    return float(S[pad:S.shape[0] - pad, pad:S.shape[1] - pad].mean())
