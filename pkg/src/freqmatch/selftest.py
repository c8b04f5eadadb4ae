"""Fast built-in invariant checks, run by ``freqmatch selftest``.

Each check returns ``(passed, detail)``.  The same helpers back the
acceptance tests, so the command and the test-suite agree on what "pass"
means.
"""
from __future__ import annotations

import time

import numpy as np

from . import analysis, numerics
from . import autodiff as ad
from .config import TrainConfig
from .data import DatasetConfig, sample_episode
from .model import FewShotSegmenter

TOY_IMAGE = 16


def toy_config(components="cpg+fam+msf", roles="- + -", **overrides):
    """C = 2 channels, N = 16 pooled positions, 16x16 images."""
    return TrainConfig(components=components, band_roles=roles, pool_n=16, channels=(4, 2),
                       strides=(2, 1), image_size=TOY_IMAGE, **overrides)


def toy_episode(seed=0, size=TOY_IMAGE):
    """A 16x16 episode whose support and query foregrounds both survive at feature resolution."""
    cfg = DatasetConfig(image_size=size)
    for attempt in range(100):
        ep = sample_episode("train", np.random.default_rng([seed, attempt]), cfg)
        if ep.support.mask.sum() >= 12 and ep.query.mask.sum() >= 12:
            return ep
    raise RuntimeError("no usable toy episode")


def model_gradient_check(components="cpg+fam+msf", roles="- + -", seed=0, eps=1e-4,
                         max_coords=12, tau=-2.0, **overrides):
    """Finite-difference check of ``L_total`` w.r.t. every parameter group of a float64 toy model.

    Coordinates whose perturbation flips the binarized coarse mask (a
    piecewise-constant selection) or crosses a ReLU kink are skipped.  ``tau``
    starts away from 0 so the coarse mask is neither all-on nor tied at 0.5.
    """
    cfg = toy_config(components, roles, **overrides)
    model = FewShotSegmenter(cfg, rng=np.random.default_rng([seed, 7]), dtype=np.float64)
    model.params["cpg.tau"].data[...] = tau
    ep = toy_episode(seed)
    names = list(model.params)
    inputs = [model.params[k] for k in names]

    def loss(*_):
        return model.loss(ep)[0]

    def coarse_bits():
        with_grad = [(p, p.requires_grad) for p in inputs]
        for p in inputs:
            p.requires_grad = False
        try:
            return _coarse_signature(model.forward(ep.support.image, ep.support.mask, ep.query.image))
        finally:
            for p, flag in with_grad:
                p.requires_grad = flag

    base = coarse_bits()
    smooth = ad.curvature_guard(loss, inputs, eps)

    def guard(ti, c):
        flat = inputs[ti].data.reshape(-1)
        orig = flat[c]
        same = True
        for d in (eps, -eps):
            flat[c] = orig + d
            same &= coarse_bits() == base
        flat[c] = orig
        return same and smooth(ti, c)

    report = ad.finite_diff_check(loss, inputs, eps=eps, kink_guard=guard, max_coords=max_coords,
                                  rng=np.random.default_rng(seed))
    report["groups"] = sorted({k.rsplit(".", 1)[0] for k in names})
    return report


def _coarse_signature(pred):
    """Binarized coarse mask plus the fallback flag: the discrete choices a forward pass makes."""
    return (pred.coarse.data >= 0.5).tobytes() + bytes([pred.fallback])


def _check_fft():
    rng = np.random.default_rng(0)
    err = 0.0
    for _ in range(20):
        x = rng.normal(size=(16, 16))
        err = max(err, float(np.abs(numerics.real_part(numerics.ifft2(numerics.fft2(x))) - x).max()))
    return err <= 1e-9, f"max round-trip error {err:.2e}"


def _check_partition():
    x = np.random.default_rng(1).normal(size=(30, 30))
    masks = numerics.make_band_masks(30)
    err = float(np.abs(sum(numerics.band_split(x, masks)) - x).max())
    counts = tuple(int(m.sum()) for m in masks)
    return err <= 1e-6 and counts == (81, 360, 459), f"reconstruction {err:.2e}, bins {counts}"


def _check_gradients():
    worst = max(model_gradient_check(c)["max_rel_err"] for c in ("cpg", "cpg+fam+msf"))
    return worst <= 1e-3, f"max relative error {worst:.2e}"


def _check_band_locality():
    cert = analysis.certify_band_locality(n_pairs=40)
    return cert["fraction"] >= 0.9, f"{cert['fraction']:.0%} of pairs mid-band-closest"


CHECKS = {
    "fft round trip": _check_fft,
    "band partition": _check_partition,
    "toy-model gradients": _check_gradients,
    "generator band locality": _check_band_locality,
}


def run(verbose=False):
    ok = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        passed, detail = fn()
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t0:.1f}s)")
    return ok
