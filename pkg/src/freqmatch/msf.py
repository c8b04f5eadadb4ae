"""Multi-spectral fusion: mid-band-guided cross-attention over the low and high
fused features, additive merge with ReLU, and the fused prototype."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .cpg import similarity_mask, ALPHA
from .errors import ConfigError

HEADS = ("low", "high")
INITS = ("kaiming", "identity")


def init_msf_params(channels, rng, shared=False, dtype=np.float32, init="kaiming"):
    """``C x C`` projections, one set per head unless ``shared``.

    ``kaiming`` draws every matrix uniformly with bound ``sqrt(6 / C)``.
    ``identity`` starts each head as attention over the raw band features,
    so the initial output is a similarity-weighted smoothing of that band.
    """
    if init not in INITS:
        raise ConfigError(f"msf init must be one of {INITS}, got {init!r}")
    bound = np.sqrt(6.0 / channels)
    params = {}
    for head in ("shared",) if shared else HEADS:
        for k in ("WQ", "WK", "WV"):
            name = f"msf.{head}.{k}"
            if init == "identity":
                w = np.eye(channels, dtype=dtype)
            else:
                w = rng.uniform(-bound, bound, size=(channels, channels)).astype(dtype)
            params[name] = ad.parameter(w, name=name)
    return params


def head_params(params, head):
    key = head if f"msf.{head}.WQ" in params else "shared"
    return tuple(params[f"msf.{key}.{k}"] for k in ("WQ", "WK", "WV"))


def cross_attention(q_src, kv_src, wq, wk, wv, d=None):
    """``(softmax(Q K^T / sqrt(d)) V)^T`` with ``Q = q_src^T W_Q``, ``K = kv^T W_K``, ``V = kv^T W_V``.

    Inputs are ``(C, N)``; ``d`` defaults to ``C``.
    """
    q_src, kv_src = ad.as_tensor(q_src), ad.as_tensor(kv_src)
    d = q_src.shape[0] if d is None else d
    Q = ad.matmul(q_src.T, wq)
    K = ad.matmul(kv_src.T, wk)
    V = ad.matmul(kv_src.T, wv)
    S = ad.softmax(ad.matmul(Q, K.T) * (1.0 / np.sqrt(d)), axis=-1)
    return ad.matmul(S, V).T


def msf_fuse(triple, params, d=None):
    low, mid, high = triple
    low2 = cross_attention(mid, low, *head_params(params, "low"), d=d)
    high2 = cross_attention(mid, high, *head_params(params, "high"), d=d)
    return ad.relu(low2 + mid + high2)


def plain_fuse(triple):
    """Merge used when cross-attention is disabled: ``ReLU(low + mid + high)``."""
    low, mid, high = triple
    return ad.relu(low + mid + high)


def fused_prototype(fused):
    return ad.mean(fused, axis=1)


def final_mask(feat_q, proto, tau, alpha=ALPHA):
    """Foreground and background probability maps from the fused prototype."""
    fg = similarity_mask(feat_q, proto, tau, alpha)
    return fg, 1.0 - fg
