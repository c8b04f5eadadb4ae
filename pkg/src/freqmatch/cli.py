"""Command-line entry point: ``python -m freqmatch <command>``.

Commands::

    train         --config cfg.ini --out run/ [--resume run/checkpoint.famck]
    eval          --ckpt run/checkpoint.famck --episodes 200 --seed 12345 [--out report.jsonl]
    gen-data      --config gen.ini --out data/
    analyze-freq  imgA imgB [--log-magnitude] [--window hamming|none]
    selftest

Loss curves and evaluation reports are JSON lines.  The exit status is 0
only when the command fully succeeds.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys

import numpy as np

from . import analysis, selftest, trainer
from .config import TrainConfig
from .data import CLASSES, DOMAINS, DatasetConfig, load_episode, sample_episode, save_episode
from .errors import ConfigError, DomainError, FreqmatchError

log = logging.getLogger("freqmatch")


def _train(args):
    cfg = TrainConfig.load(args.config)
    every = max(1, args.log_every)

    def progress(rec):
        if (rec["iter"] + 1) % every == 0:
            log.info("iter %d  l_total %.4f  l_final %.4f  l_coarse %.4f  lr %.2e",
                     rec["iter"] + 1, rec["l_total"], rec["l_final"], rec["l_coarse"], rec["lr"])

    res = trainer.train(cfg, out_dir=args.out, resume=args.resume, progress=progress)
    log.info("wrote %s", os.path.join(args.out, "checkpoint.famck"))
    if cfg.eval_episodes and not args.no_eval:
        report = trainer.evaluate(res.model, cfg.eval_episodes, cfg.eval_seed)
        with open(os.path.join(args.out, "eval.jsonl"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_jsonable(report)) + "\n")
        print(json.dumps(_jsonable(report)))
    return 0


def _eval(args):
    model, _, _ = trainer.load_model(args.ckpt)
    rows = []
    report = trainer.evaluate(model, args.episodes, args.seed, split=args.split, records=rows)
    lines = [json.dumps(r) for r in rows] + [json.dumps(_jsonable(report))]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(lines[-1])
    else:
        print("\n".join(lines))
    return 0


def _gen_data(args):
    cp = configparser.ConfigParser()
    if not cp.read(args.config, encoding="utf-8"):
        raise ConfigError(f"cannot read {args.config}")
    gen = cp["generate"] if cp.has_section("generate") else {}
    split = gen.get("split", "test")
    n = int(gen.get("episodes", 10))
    seed = int(gen.get("seed", 0))
    size = int(cp["data"].get("image_size", 64)) if cp.has_section("data") else 64
    data_cfg = DatasetConfig(image_size=size)
    os.makedirs(args.out, exist_ok=True)

    manifest = configparser.ConfigParser()
    manifest["generate"] = {"split": split, "episodes": str(n), "seed": str(seed), "image_size": str(size)}
    for cid, c in CLASSES.items():
        manifest[f"class.{cid}"] = {"family": c.family, "size_range": _csv(c.size_range),
                                   "aspect_range": _csv(c.aspect_range),
                                   "position_jitter": str(c.position_jitter),
                                   "intensity_range": _csv(c.intensity_range)}
    for name, d in DOMAINS.items():
        manifest[f"domain.{name}"] = {k: _csv(v) if isinstance(v, tuple) else str(v)
                                      for k, v in vars(d).items() if k != "name"}
    for i in range(n):
        ep = sample_episode(split, np.random.default_rng([seed, i]), data_cfg)
        fname = f"episode_{i:05d}.famep"
        save_episode(ep, os.path.join(args.out, fname))
        manifest[f"episode.{i}"] = {"file": fname, "class_id": str(ep.class_id), "domain": ep.domain,
                                    "support_seed": str(ep.support.seed), "query_seed": str(ep.query.seed)}
    with open(os.path.join(args.out, "manifest.ini"), "w", encoding="utf-8") as fh:
        manifest.write(fh)
    print(json.dumps({"out": args.out, "episodes": n, "split": split}))
    return 0


def _csv(values):
    return ", ".join(str(v) for v in values)


def read_image(path):
    """Load a 2-D grayscale array from ``.npy``, an episode file (its query image) or a Pillow image."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".npy":
        img = np.load(path)
    elif ext == ".famep":
        img = load_episode(path).query.image
    else:
        from PIL import Image

        with Image.open(path) as im:
            img = np.asarray(im.convert("F"))
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DomainError(f"{path}: expected a grayscale image, got shape {img.shape}")
    return img


def _analyze(args):
    report = analysis.analyze_frequency(read_image(args.img_a), read_image(args.img_b),
                                        log_magnitude=args.log_magnitude, window=args.window)
    print(json.dumps(report, indent=2))
    return 0


def _selftest(args):
    return 0 if selftest.run(verbose=True) else 1


def _jsonable(report):
    out = dict(report)
    out["per_class"] = {str(k): v for k, v in report["per_class"].items()}
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="freqmatch", description="Frequency-aware few-shot segmentation toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from an INI config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="output directory for losses.jsonl and checkpoints")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--log-every", type=int, default=100)
    t.add_argument("--no-eval", action="store_true", help="skip the evaluation after training")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on reproducible episodes")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--episodes", type=int, default=200)
    e.add_argument("--seed", type=int, default=12345)
    e.add_argument("--split", choices=("train", "test"), default="test")
    e.add_argument("--out", help="write per-episode JSON lines plus a summary line here")
    e.set_defaults(func=_eval)

    g = sub.add_parser("gen-data", help="write episode files and a manifest")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_gen_data)

    a = sub.add_parser("analyze-freq", help="spatial vs per-band spectral similarity of two images")
    a.add_argument("img_a")
    a.add_argument("img_b")
    a.add_argument("--log-magnitude", action="store_true")
    a.add_argument("--window", choices=analysis.WINDOWS, default="hamming")
    a.set_defaults(func=_analyze)

    s = sub.add_parser("selftest", help="run the built-in invariant checks")
    s.set_defaults(func=_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (FreqmatchError, OSError) as exc:
        print(f"freqmatch {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
