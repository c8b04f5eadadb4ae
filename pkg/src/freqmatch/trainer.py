"""Episodic SGD training, evaluation and checkpoint round-trips."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import DatasetConfig, sample_episode
from .errors import ConfigError, EmptyForeground, TrainingError, ZeroPrototype
from .model import FewShotSegmenter
from .objectives import dice

log = logging.getLogger(__name__)

MAX_RESAMPLES = 100


def lr_at(iteration, cfg: TrainConfig):
    """Step decay: ``lr0 * decay ** floor(iteration / decay_every)``."""
    return cfg.lr * cfg.lr_decay ** (iteration // cfg.decay_every)


class SGD:
    """Classic momentum: ``v <- mu * v + g``; ``p <- p - lr * v``."""

    def __init__(self, named_params, momentum=0.9):
        self.params = dict(named_params)
        self.momentum = momentum
        self.buffers = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, lr):
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in parameter {name!r}")
            v = self.buffers[name]
            v *= self.momentum
            v += g
            p.data -= np.asarray(lr, dtype=p.data.dtype) * v


def sgd_step(params, grads, velocity, lr, momentum):
    """Functional form of one momentum update on plain arrays; returns ``(params, velocity)``."""
    new_v = [momentum * v + g for v, g in zip(velocity, grads)]
    return [p - lr * v for p, v in zip(params, new_v)], new_v


def episode_ok(model: FewShotSegmenter, ep):
    """Support and query foregrounds must survive downsampling to feature resolution."""
    h, w = model.enc_cfg.feature_shape(*ep.support.image.shape)[1:]
    return bool(model.feature_mask(ep.support.mask, (h, w)).any()
                and model.feature_mask(ep.query.mask, (h, w)).any())


def draw_episode(model, split, seed, key, data_cfg=None, start=0):
    """Deterministic episode for ``(seed, key)``; returns ``(episode, attempt)``.

    Attempts before ``start`` are skipped, so a caller that rejects an
    episode later can ask for the next one in the same reproducible stream.
    """
    data_cfg = data_cfg or DatasetConfig(image_size=model.cfg.image_size)
    for attempt in range(start, MAX_RESAMPLES):
        rng = np.random.default_rng([seed, key, attempt])
        ep = sample_episode(split, rng, data_cfg)
        if episode_ok(model, ep):
            return ep, attempt
        log.debug("episode %s/%s rejected: empty foreground at feature resolution", key, attempt)
    raise ConfigError(f"no usable episode after {MAX_RESAMPLES} attempts")


def _episode_loss(model, split, seed, key, data_cfg):
    """Draw episodes until one yields a loss; zero-prototype episodes are resampled."""
    attempt = 0
    while True:
        ep, attempt = draw_episode(model, split, seed, key, data_cfg, start=attempt)
        try:
            return model.loss(ep), attempt
        except (EmptyForeground, ZeroPrototype) as exc:
            log.debug("episode %s/%s rejected: %s", key, attempt, exc)
            attempt += 1


@dataclass
class TrainResult:
    model: FewShotSegmenter
    optimizer: SGD
    iteration: int
    curve: list = field(default_factory=list)


def _restore(model, opt, params, momentum):
    if set(params) != set(model.params):
        raise ConfigError("checkpoint parameters do not match the configured model")
    for k, arr in params.items():
        if arr.shape != model.params[k].shape:
            raise ConfigError(f"shape mismatch for {k}: {arr.shape} vs {model.params[k].shape}")
        model.params[k].data = arr.astype(model.dtype).copy()
    for k, arr in momentum.items():
        opt.buffers[k] = arr.astype(model.dtype).copy()


def build(cfg: TrainConfig):
    model = FewShotSegmenter(cfg)
    return model, SGD(model.named_parameters(), cfg.momentum)


def train(cfg: TrainConfig, out_dir=None, resume=None, data_cfg=None, progress=None):
    """Train for ``cfg.iterations`` episodes (continuing from ``resume`` if given).

    Writes ``losses.jsonl`` and ``checkpoint.famck`` to ``out_dir`` when set.
    Episode ``i`` depends only on ``(cfg.seed, i)``, so a resumed run replays
    exactly what an uninterrupted one would.
    """
    model, opt = build(cfg)
    start = 0
    if resume is not None:
        ck_cfg, params, momentum, start = load_checkpoint(resume)
        _restore(model, opt, params, momentum)
    curve = []
    fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        fh = open(os.path.join(out_dir, "losses.jsonl"), "a" if resume else "w", encoding="utf-8")
    try:
        for it in range(start, cfg.iterations):
            model.zero_grad()
            (total, report, pred), rejected = _episode_loss(model, "train", cfg.seed, it, data_cfg)
            ad.backward(total, model.parameters())
            lr = lr_at(it, cfg)
            opt.step(lr)
            rec = {"iter": it, "l_final": report.l_final, "l_coarse": report.l_coarse,
                   "l_total": report.l_total, "lr": lr, "resampled": rejected,
                   "fallback": pred.fallback}
            curve.append(rec)
            if fh is not None:
                fh.write(json.dumps(rec) + "\n")
            if progress is not None:
                progress(rec)
            done = it + 1
            if out_dir is not None and cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
                save_model(os.path.join(out_dir, f"checkpoint_{done:06d}.famck"), model, opt, done)
    finally:
        if fh is not None:
            fh.close()
    model.zero_grad()
    final_iter = max(start, cfg.iterations)
    if out_dir is not None:
        save_model(os.path.join(out_dir, "checkpoint.famck"), model, opt, final_iter)
    return TrainResult(model, opt, final_iter, curve)


def save_model(path, model, opt, iteration):
    params = {k: p.data for k, p in model.params.items()}
    save_checkpoint(path, model.cfg, params, opt.buffers, iteration)


def load_model(path):
    cfg, params, momentum, iteration = load_checkpoint(path)
    model, opt = build(cfg)
    _restore(model, opt, params, momentum)
    return model, opt, iteration


def evaluate(model: FewShotSegmenter, n_episodes, seed=12345, split="test", data_cfg=None, records=None):
    """Per-class and mean Dice over ``n_episodes`` reproducible episodes.

    ``mean_dice`` averages the per-class means.  Each episode appends
    ``{"class_id", "seed", "dice"}`` to ``records`` when a list is given.
    """
    per_class = {}
    rows = []
    for i in range(n_episodes):
        ep, _ = draw_episode(model, split, seed, i, data_cfg)
        try:
            prob, pred = model.predict(ep.support.image, ep.support.mask, ep.query.image)
            fallback = pred.fallback
        except ZeroPrototype:
            # nothing to match against: the model predicts background everywhere
            prob, fallback = np.zeros(ep.query.mask.shape), True
        d = dice(prob, ep.query.mask)
        per_class.setdefault(ep.class_id, []).append(d)
        rows.append({"episode": i, "class_id": ep.class_id, "seed": ep.query.seed, "dice": d,
                     "fallback": fallback})
    if records is not None:
        records.extend(rows)
    class_means = {c: float(np.mean(v)) for c, v in sorted(per_class.items())}
    return {
        "split": split,
        "episodes": len(rows),
        "mean_dice": float(np.mean(list(class_means.values()))) if class_means else float("nan"),
        "per_class": class_means,
    }


def oracle_dice(n_episodes, seed=12345, split="test", data_cfg=None):
    """Dice of a predictor that returns the ground truth (sanity ceiling, always 1)."""
    data_cfg = data_cfg or DatasetConfig()
    scores = []
    for i in range(n_episodes):
        ep = sample_episode(split, np.random.default_rng([seed, i]), data_cfg)
        scores.append(dice(ep.query.mask, ep.query.mask))
    return float(np.mean(scores))
