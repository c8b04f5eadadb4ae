"""The assembled few-shot segmenter: encoder -> coarse prediction -> frequency-aware
matching -> multi-spectral fusion -> final prototype mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import numerics
from .config import TrainConfig
from .cpg import CpgParams, coarse_mask, support_prototype
from .encoder import encode, init_encoder
from .errors import EmptyForeground, ZeroPrototype
from .fam import binarize, fam_forward, init_fam_params
from .msf import final_mask, fused_prototype, init_msf_params, msf_fuse, plain_fuse
from .objectives import LossReport, bce_loss, coarse_bce

INPUT_CENTER, INPUT_SCALE = 0.5, 0.25


@dataclass
class Prediction:
    coarse: ad.Tensor        # (h, w) foreground probability at feature resolution
    coarse_up: ad.Tensor     # (H, W)
    final: ad.Tensor         # (h, w)
    final_up: ad.Tensor      # (H, W)
    fallback: bool = False   # final prediction fell back to the coarse one


class FewShotSegmenter:
    """Parameters plus forward pass.  Parameter names are stable checkpoint keys."""

    def __init__(self, cfg: TrainConfig, rng=None, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.enc_cfg = cfg.encoder_config()
        self.fam_cfg = cfg.fam_config()
        rng = np.random.default_rng([cfg.seed, 0x1417]) if rng is None else rng
        params = init_encoder(self.enc_cfg, rng, dtype)
        params["cpg.tau"] = ad.parameter(np.zeros((), dtype=dtype), name="cpg.tau")
        if "fam" in cfg.enabled:
            params.update(init_fam_params(self.fam_cfg, rng, dtype))
        if "msf" in cfg.enabled:
            params.update(init_msf_params(self.enc_cfg.out_channels, rng, cfg.share_msf_heads, dtype,
                                          init=cfg.msf_init))
        self.params = params
        self._up = {}

    @property
    def cpg_params(self):
        return CpgParams(self.params["cpg.tau"], self.cfg.alpha)

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def _upsample(self, x, shape):
        key = (x.shape, tuple(shape))
        if key not in self._up:
            self._up[key] = (numerics.bilinear_matrix(shape[0], x.shape[0], dtype=self.dtype),
                             numerics.bilinear_matrix(shape[1], x.shape[1], dtype=self.dtype).T)
        ry, rxt = self._up[key]
        return ad.matmul(ad.matmul(ry, x), rxt)

    def normalize(self, img):
        """Fixed affine map of [0, 1] intensities to roughly zero mean, unit spread."""
        img = np.asarray(img, dtype=np.float64)
        return ((img - INPUT_CENTER) / INPUT_SCALE).astype(self.dtype)

    def feature_mask(self, mask, feat_shape):
        return numerics.nearest_downsample(np.asarray(mask), feat_shape).astype(self.dtype)

    def forward(self, support_img, support_mask, query_img):
        """Run one 1-way 1-shot episode.

        Raises :class:`EmptyForeground` when the support mask vanishes at
        feature resolution and :class:`ZeroPrototype` when every support
        foreground feature is zero.  When the rounded coarse query mask is empty, or
        the fused prototype is exactly zero, the final prediction falls back
        to the coarse one.
        """
        H, W = np.asarray(query_img).shape[-2:]
        fs = encode(self.normalize(support_img), self.params, self.enc_cfg)
        fq = encode(self.normalize(query_img), self.params, self.enc_cfg)
        ms = self.feature_mask(support_mask, fs.shape[-2:])
        proto = support_prototype(fs, ms)
        if not np.any(proto.data):
            raise ZeroPrototype("support foreground features are all zero")
        coarse = coarse_mask(fq, proto, self.cpg_params)
        coarse_up = self._upsample(coarse, (H, W))
        if not self.cfg.enabled:
            return Prediction(coarse, coarse_up, coarse, coarse_up)
        if not binarize(coarse.data).any():
            return Prediction(coarse, coarse_up, coarse, coarse_up, fallback=True)
        triple = fam_forward(fs, ms, fq, coarse.data, self.params, self.fam_cfg)
        fused = msf_fuse(triple, self.params) if "msf" in self.cfg.enabled else plain_fuse(triple)
        pf = fused_prototype(fused)
        if not np.any(pf.data):
            return Prediction(coarse, coarse_up, coarse, coarse_up, fallback=True)
        fg, _ = final_mask(fq, pf, self.params["cpg.tau"], self.cfg.alpha)
        return Prediction(coarse, coarse_up, fg, self._upsample(fg, (H, W)))

    def loss(self, episode):
        """Total loss tensor and a :class:`LossReport` for one episode.

        With CPG only, the coarse map is the output and only ``L_coarse``
        is optimized (``l_final`` is reported as 0).
        """
        pred = self.forward(episode.support.image, episode.support.mask, episode.query.image)
        gt = episode.query.mask
        l_coarse = coarse_bce(gt, pred.coarse_up)
        if not self.cfg.enabled:
            return l_coarse, LossReport(0.0, float(l_coarse.data)), pred
        l_final = bce_loss(gt, pred.final_up, 1.0 - pred.final_up)
        total = l_final + l_coarse
        return total, LossReport(float(l_final.data), float(l_coarse.data)), pred

    def predict(self, support_img, support_mask, query_img):
        """Final foreground probability map at image resolution (no graph recorded)."""
        saved = [(p, p.requires_grad) for p in self.params.values()]
        try:
            for p, _ in saved:
                p.requires_grad = False
            pred = self.forward(support_img, support_mask, query_img)
        finally:
            for p, flag in saved:
                p.requires_grad = flag
        return pred.final_up.data, pred


def try_forward(model, episode):
    """``model.loss`` or None when the episode has no support foreground at feature resolution."""
    try:
        return model.loss(episode)
    except (EmptyForeground, ZeroPrototype):
        return None
