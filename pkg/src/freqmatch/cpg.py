"""Coarse prediction: masked-average support prototype and a thresholded
scaled-cosine query mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DomainError, EmptyForeground

ALPHA = 20.0


@dataclass
class CpgParams:
    tau: ad.Tensor
    alpha: float = ALPHA


def support_prototype(feat, mask):
    """Masked average pooling of a ``(C, h, w)`` feature map; ``mask`` is a binary ``(h, w)`` array."""
    feat = ad.as_tensor(feat)
    mask = np.asarray(mask, dtype=feat.dtype)
    if mask.shape != feat.shape[-2:]:
        raise DomainError(f"mask shape {mask.shape} does not match features {feat.shape[-2:]}")
    total = float(mask.sum())
    if total <= 0:
        raise EmptyForeground("support mask is empty at feature resolution")
    return (feat * mask).sum(axis=(1, 2)) * (1.0 / total)


def similarity_mask(feat, proto, tau, alpha=ALPHA):
    """``1 - sigmoid(-alpha * cos(feat[:, u, v], proto) - tau)`` at every pixel."""
    feat = ad.as_tensor(feat)
    proto = ad.as_tensor(proto)
    if not np.any(proto.data):
        raise DomainError("prototype has zero norm")
    cos = ad.cosine(feat, proto.reshape(-1, 1, 1), axis=0)
    return 1.0 - ad.sigmoid(cos * (-alpha) - tau)


def coarse_mask(feat_q, proto, params: CpgParams):
    return similarity_mask(feat_q, proto, params.tau, params.alpha)
