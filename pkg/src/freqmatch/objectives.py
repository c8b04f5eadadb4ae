"""Binary cross-entropy objectives and the Dice metric."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DomainError

EPS = 1e-7


@dataclass(frozen=True)
class LossReport:
    l_final: float
    l_coarse: float

    @property
    def l_total(self):
        return self.l_final + self.l_coarse


def bce_loss(gt, fg, bg):
    """``-mean(gt * log(fg) + (1 - gt) * log(bg))`` with both maps clamped to ``[EPS, 1 - EPS]``."""
    fg, bg = ad.as_tensor(fg), ad.as_tensor(bg)
    gt = np.asarray(gt, dtype=fg.dtype)
    if gt.shape != fg.shape or gt.shape != bg.shape:
        raise DomainError(f"shape mismatch: gt {gt.shape}, fg {fg.shape}, bg {bg.shape}")
    lf = ad.log(ad.clip(fg, EPS, 1 - EPS))
    lb = ad.log(ad.clip(bg, EPS, 1 - EPS))
    return -ad.mean(lf * gt + lb * (1.0 - gt))


def coarse_bce(gt, coarse):
    coarse = ad.as_tensor(coarse)
    return bce_loss(gt, coarse, 1.0 - coarse)


def dice(pred, gt):
    """Dice overlap of two masks binarized at 0.5; 1 when both are empty."""
    x = np.asarray(pred) >= 0.5
    y = np.asarray(gt) >= 0.5
    if x.shape != y.shape:
        raise DomainError(f"shape mismatch {x.shape} vs {y.shape}")
    denom = int(x.sum()) + int(y.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((x & y).sum()) / denom
