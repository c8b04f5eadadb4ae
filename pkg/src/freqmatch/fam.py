"""Frequency-aware matching.

Support and query foreground features are gathered, pooled to a fixed length
``N``, split into low/mid/high spectral bands, mapped into a joint space,
weighted by their per-position cosine agreement (directly on domain-agnostic
bands, inversely on domain-specific ones) and fused per band by a two-layer
MLP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import numerics
from .errors import ConfigError, DomainError, EmptyForeground

BANDS = ("low", "mid", "high")
DAFB = "+"  # weight by A
DSFB = "-"  # weight by 1 - A


class SpectralTriple(NamedTuple):
    low: ad.Tensor
    mid: ad.Tensor
    high: ad.Tensor


def parse_roles(roles):
    """Accept ``{"low": "-", ...}``, ``"- + -"`` or ``"low:-,mid:+,high:-"``; DAFB/DSFB names too."""
    alias = {"+": DAFB, "-": DSFB, "dafb": DAFB, "dsfb": DSFB}
    if isinstance(roles, dict):
        items = roles.items()
    else:
        text = str(roles).replace(",", " ").split()
        if all(":" in t for t in text):
            items = [t.split(":", 1) for t in text]
        elif len(text) == 3:
            items = zip(BANDS, text)
        else:
            raise ConfigError(f"cannot parse band roles {roles!r}")
    out = {}
    for band, role in items:
        band = band.strip().lower()
        role = alias.get(str(role).strip().lower())
        if band not in BANDS or role is None:
            raise ConfigError(f"bad band role entry {band!r}")
        out[band] = role
    if set(out) != set(BANDS):
        raise ConfigError(f"band roles must cover {BANDS}, got {sorted(out)}")
    return out


@dataclass
class FamConfig:
    n: int = 900
    ratios: tuple = (0.3, 0.4, 0.3)
    roles: dict = field(default_factory=lambda: {"low": DSFB, "mid": DAFB, "high": DSFB})
    match_bands: tuple = BANDS
    drop_bands: tuple = ()
    attention: str = "soft"  # or "hard:<keep_fraction>"
    hidden: int | None = None
    share_params: bool = False
    debug: bool = False

    def __post_init__(self):
        self.roles = parse_roles(self.roles)
        side = math.isqrt(self.n)
        if side * side != self.n or side < 2:
            raise ConfigError(f"pool size N must be a perfect square >= 4, got {self.n}")
        for b in (*self.match_bands, *self.drop_bands):
            if b not in BANDS:
                raise ConfigError(f"unknown band {b!r}")
        self.keep_fraction  # validates
        self.masks = numerics.make_band_masks(side, self.ratios)

    @property
    def side(self):
        return math.isqrt(self.n)

    @property
    def hidden_width(self):
        return self.hidden or max(1, self.n // 2)

    @property
    def keep_fraction(self):
        if self.attention == "soft":
            return None
        if isinstance(self.attention, str) and self.attention.startswith("hard:"):
            k = float(self.attention.split(":", 1)[1])
            if not 0 < k <= 1:
                raise ConfigError(f"hard attention keep fraction must lie in (0, 1], got {k}")
            return k
        raise ConfigError(f"attention must be 'soft' or 'hard:<fraction>', got {self.attention!r}")


def _param_groups(cfg):
    return ("shared",) if cfg.share_params else BANDS


def init_fam_params(cfg: FamConfig, rng, dtype=np.float32):
    """Joint-space matrices start at identity plus U(-0.01, 0.01); MLP weights are
    Kaiming-uniform with zero biases."""
    n, h = cfg.n, cfg.hidden_width
    params = {}
    for g in _param_groups(cfg):
        for side in ("Ws", "Wq"):
            w = np.eye(n) + rng.uniform(-0.01, 0.01, size=(n, n))
            params[f"fam.{g}.{side}"] = w.astype(dtype)
        b1 = np.sqrt(6.0 / (2 * n))
        b2 = np.sqrt(6.0 / h)
        params[f"fam.{g}.mlp.w1"] = rng.uniform(-b1, b1, size=(2 * n, h)).astype(dtype)
        params[f"fam.{g}.mlp.b1"] = np.zeros(h, dtype=dtype)
        params[f"fam.{g}.mlp.w2"] = rng.uniform(-b2, b2, size=(h, n)).astype(dtype)
        params[f"fam.{g}.mlp.b2"] = np.zeros(n, dtype=dtype)
    return {k: ad.parameter(v, name=k) for k, v in params.items()}


def band_params(params, cfg, band):
    g = "shared" if cfg.share_params else band
    p = lambda k: params[f"fam.{g}.{k}"]  # noqa: E731
    return p("Ws"), p("Wq"), {"w1": p("mlp.w1"), "b1": p("mlp.b1"), "w2": p("mlp.w2"), "b2": p("mlp.b2")}


# ------------------------------------------------------------------ operations

def binarize(mask):
    """Round probabilities to {0, 1}; exactly 0.5 rounds up."""
    return np.asarray(mask) >= 0.5


def extract_foreground(feat, mask, n):
    """Gather foreground pixel vectors in row-major order and pool them to length ``n``."""
    feat = ad.as_tensor(feat)
    m = binarize(mask)
    if m.shape != feat.shape[-2:]:
        raise DomainError(f"mask shape {m.shape} does not match features {feat.shape[-2:]}")
    idx = np.flatnonzero(m.reshape(-1))
    if idx.size == 0:
        raise EmptyForeground("no foreground pixels after rounding")
    c = feat.shape[0]
    gathered = ad.take(feat.reshape(c, -1), idx, axis=1)
    P = numerics.pooling_matrix(idx.size, n, dtype=feat.dtype)
    return gathered @ P


def spectral_decouple(f, masks):
    """Split a ``(C, N)`` feature into three ``(C, N)`` band components."""
    f = ad.as_tensor(f)
    c, n = f.shape
    side = masks.side
    if side * side != n:
        raise DomainError(f"feature length {n} does not match band masks of side {side}")
    sq = f.reshape(c, side, side)
    return SpectralTriple(*(ad.band_pass(sq, m).reshape(c, n) for m in masks))


def joint_transform(fs, fq, ws, wq):
    return ad.matmul(fs, ws), ad.matmul(fq, wq)


def attention_scores(fs, fq):
    """``sigmoid(cos(fs[:, j], fq[:, j]))`` for every position ``j``; shape ``(1, N)``."""
    cos = ad.cosine(fs, fq, axis=0)
    return ad.sigmoid(cos).reshape(1, -1)


def hard_attention(a, keep_fraction):
    """Binary stand-in for ``A``: 1 on the top ``keep_fraction`` positions, 0 elsewhere."""
    a = np.asarray(a.data if isinstance(a, ad.Tensor) else a).reshape(-1)
    k = max(1, int(round(keep_fraction * a.size)))
    keep = np.argsort(-a, kind="stable")[:k]
    out = np.zeros_like(a)
    out[keep] = 1.0
    return ad.Tensor(out.reshape(1, -1))


def band_weighting(fs, fq, a, role):
    """DAFB: ``A * F``; DSFB: ``(1 - A) * F``.  ``A`` broadcasts over channels."""
    if role == DSFB:
        a = 1.0 - a
    elif role != DAFB:
        raise ConfigError(f"unknown role {role!r}")
    return a * fs, a * fq


def fuse_band(fs, fq, mlp):
    """Two-layer MLP with a ReLU between, applied per channel to ``[fs, fq]``: 2N -> h -> N."""
    x = ad.concat([fs, fq], axis=1)
    hidden = ad.relu(ad.matmul(x, mlp["w1"]) + mlp["b1"])
    return ad.matmul(hidden, mlp["w2"]) + mlp["b2"]


def fam_forward(feat_s, mask_s, feat_q, coarse_q, params, cfg: FamConfig):
    """Fused low/mid/high features for one support/query pair.

    ``mask_s`` is the support mask and ``coarse_q`` the coarse query
    prediction, both at feature resolution.  The coarse mask only selects
    pixels here; it carries no gradient through this path.
    """
    coarse = coarse_q.data if isinstance(coarse_q, ad.Tensor) else coarse_q
    fs = extract_foreground(feat_s, mask_s, cfg.n)
    fq = extract_foreground(feat_q, coarse, cfg.n)
    ts = spectral_decouple(fs, cfg.masks)
    tq = spectral_decouple(fq, cfg.masks)
    if cfg.debug:
        for f, t in ((fs, ts), (fq, tq)):
            err = np.abs(sum(x.data.astype(np.float64) for x in t) - f.data).max()
            if err > 1e-6 * (1 + np.abs(f.data).max()):
                raise DomainError(f"band partition violated by {err:.3e}")
    keep = cfg.keep_fraction
    fused = []
    for band, bs, bq in zip(BANDS, ts, tq):
        if band in cfg.drop_bands:
            fused.append(ad.Tensor(np.zeros_like(bs.data)))
            continue
        ws, wq, mlp = band_params(params, cfg, band)
        s1, q1 = joint_transform(bs, bq, ws, wq)
        if band in cfg.match_bands:
            a = attention_scores(s1, q1)
            if keep is not None:
                a = hard_attention(a, keep)
            s1, q1 = band_weighting(s1, q1, a, cfg.roles[band])
        fused.append(fuse_band(s1, q1, mlp))
    return SpectralTriple(*fused)
