"""Synthetic cross-domain phantoms and the 1-way 1-shot episode sampler.

A phantom is a body ellipse holding a couple of distractor blobs and one
target structure whose shape family defines the class.  Geometry and base
intensities depend only on ``(class, seed)``; the domain transform is applied
afterwards, so the same seed yields the same mask in every domain.

The two built-in domains differ only in band-localized statistics:
``domA`` is sharp and clean; ``domB`` is slightly blurred, has its low-band
component contrast-reduced, brightened and tilted by a smooth bias field, and
carries high-passed additive noise.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import numerics
from .errors import ConfigError, ParseError, UnsupportedVersion

IMAGE_SIZE = 64
MIN_MASK_PIXELS = 8


@dataclass(frozen=True)
class DomainSpec:
    name: str
    low_freq_gain: float = 1.0       # contrast of the low-band component around the mean
    intensity_bias: float = 0.0
    bias_field: float = 0.0          # amplitude of a smooth linear + quadratic field
    high_freq_texture: str = "none"  # none | fine_noise | stripes
    texture_sigma: float = 0.0
    edge_sharpness: float = 0.0      # Gaussian blur sigma in pixels
    band_ratios: tuple = (0.3, 0.4, 0.3)


@dataclass(frozen=True)
class PhantomClass:
    id: int
    family: str                      # ellipse | crescent | blob-union
    size_range: tuple
    aspect_range: tuple = (1.0, 1.0)
    position_jitter: float = 6.0
    intensity_range: tuple = (0.7, 0.9)


DOMAINS = {
    "domA": DomainSpec("domA"),
    "domB": DomainSpec("domB", low_freq_gain=0.5, intensity_bias=0.2, bias_field=0.15,
                       high_freq_texture="fine_noise", texture_sigma=0.05, edge_sharpness=0.4),
}
DOMAIN_IDS = {"domA": 0, "domB": 1}

CLASSES = {
    0: PhantomClass(0, "ellipse", size_range=(8.0, 12.0), aspect_range=(0.6, 0.9), intensity_range=(0.8, 0.95)),
    1: PhantomClass(1, "crescent", size_range=(9.0, 12.0), intensity_range=(0.65, 0.8)),
    2: PhantomClass(2, "blob-union", size_range=(4.5, 6.5), intensity_range=(0.7, 0.9)),
    3: PhantomClass(3, "ellipse", size_range=(11.0, 14.0), aspect_range=(0.35, 0.5), intensity_range=(0.6, 0.75)),
}


@dataclass
class DatasetConfig:
    image_size: int = IMAGE_SIZE
    base_classes: tuple = (0, 1)
    target_classes: tuple = (2, 3)
    train_domain: str = "domA"
    test_domain: str = "domB"
    classes: dict = field(default_factory=lambda: dict(CLASSES))
    domains: dict = field(default_factory=lambda: dict(DOMAINS))

    def __post_init__(self):
        if set(self.base_classes) & set(self.target_classes):
            raise ConfigError("base and target class sets must be disjoint")
        for c in (*self.base_classes, *self.target_classes):
            if c not in self.classes:
                raise ConfigError(f"unknown class id {c}")
        for d in (self.train_domain, self.test_domain):
            if d not in self.domains:
                raise ConfigError(f"unknown domain {d!r}")

    def split(self, name):
        if name == "train":
            return self.base_classes, self.train_domain
        if name == "test":
            return self.target_classes, self.test_domain
        raise ConfigError(f"split must be 'train' or 'test', got {name!r}")


@dataclass
class Sample:
    image: np.ndarray  # float32 (H, W) in [0, 1]
    mask: np.ndarray   # uint8 (H, W)
    seed: int


@dataclass
class Episode:
    support: Sample
    query: Sample
    class_id: int
    domain: str

    def __eq__(self, other):
        if not isinstance(other, Episode):
            return NotImplemented
        same = lambda a, b: (a.seed == b.seed and np.array_equal(a.image, b.image)  # noqa: E731
                             and np.array_equal(a.mask, b.mask))
        return (self.class_id == other.class_id and self.domain == other.domain
                and same(self.support, other.support) and same(self.query, other.query))


# ------------------------------------------------------------------ rendering

def _grid(size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    return yy, xx


def _ellipse(yy, xx, cy, cx, ry, rx, theta):
    c, s = np.cos(theta), np.sin(theta)
    dy, dx = yy - cy, xx - cx
    u = (dx * c + dy * s) / rx
    v = (-dx * s + dy * c) / ry
    return u * u + v * v <= 1.0


def _shape_mask(cls, rng, yy, xx, cy, cx):
    r = rng.uniform(*cls.size_range)
    theta = rng.uniform(0, np.pi)
    if cls.family == "ellipse":
        return _ellipse(yy, xx, cy, cx, r * rng.uniform(*cls.aspect_range), r, theta)
    if cls.family == "crescent":
        outer = _ellipse(yy, xx, cy, cx, r, r, 0.0)
        shift = r * rng.uniform(0.45, 0.6)
        inner = _ellipse(yy, xx, cy + shift * np.sin(theta), cx + shift * np.cos(theta),
                         r * 0.85, r * 0.85, 0.0)
        return outer & ~inner
    if cls.family == "blob-union":
        m = np.zeros_like(yy, dtype=bool)
        for k in range(3):
            ang = theta + 2 * np.pi * k / 3 + rng.uniform(-0.3, 0.3)
            d = r * rng.uniform(0.6, 0.9)
            rk = r * rng.uniform(0.8, 1.1)
            m |= _ellipse(yy, xx, cy + d * np.sin(ang), cx + d * np.cos(ang), rk, rk, 0.0)
        return m
    raise ConfigError(f"unknown shape family {cls.family!r}")


def render_tissue(cls: PhantomClass, seed, size=IMAGE_SIZE):
    """Domain-free scene: tissue intensities in [0, 1] and the target mask."""
    rng = np.random.default_rng([int(cls.id), int(seed)])
    yy, xx = _grid(size)
    c0 = size / 2.0
    img = np.full((size, size), 0.05)
    body = _ellipse(yy, xx, c0 + rng.uniform(-2, 2), c0 + rng.uniform(-2, 2),
                    size * rng.uniform(0.36, 0.44), size * rng.uniform(0.4, 0.46), rng.uniform(-0.3, 0.3))
    img[body] = rng.uniform(0.3, 0.4)
    for _ in range(2):
        ang = rng.uniform(0, 2 * np.pi)
        d = size * rng.uniform(0.18, 0.28)
        blob = _ellipse(yy, xx, c0 + d * np.sin(ang), c0 + d * np.cos(ang),
                        rng.uniform(3, 6), rng.uniform(3, 6), rng.uniform(0, np.pi))
        img[blob & body] = rng.uniform(0.45, 0.6)
    j = cls.position_jitter
    cy, cx = c0 + rng.uniform(-j, j), c0 + rng.uniform(-j, j)
    mask = _shape_mask(cls, rng, yy, xx, cy, cx) & body
    img[mask] = rng.uniform(*cls.intensity_range)
    return img, mask


def _bias_field(rng, size):
    yy, xx = _grid(size)
    y, x = (yy / (size - 1)) * 2 - 1, (xx / (size - 1)) * 2 - 1
    a, b, c = rng.uniform(-1, 1, size=3)
    f = a * x + b * y + c * (x * x + y * y - 2.0 / 3.0)
    return f / max(np.abs(f).max(), 1e-12)


def apply_domain(img, dom: DomainSpec, seed):
    """Blur edges, remap the low-band component, add high-band texture; clip to [0, 1].

    The intensity remap acts only on the low-band part of the image and the
    texture is high-passed, so the mid band changes only through the blur.
    """
    rng = np.random.default_rng([int(seed), 0xD0, sum(map(ord, dom.name))])
    out = img.astype(np.float64)
    size = out.shape[0]
    masks = numerics.make_band_masks(size, dom.band_ratios)
    if dom.edge_sharpness > 0:
        out = ndimage.gaussian_filter(out, dom.edge_sharpness, mode="nearest")
    if dom.low_freq_gain != 1.0 or dom.intensity_bias or dom.bias_field:
        low = numerics.band_project(out, masks.low)
        m = out.mean()
        remapped = m + dom.low_freq_gain * (low - m) + dom.intensity_bias
        if dom.bias_field:
            remapped = remapped + dom.bias_field * _bias_field(rng, size)
        out = out - low + remapped
    if dom.high_freq_texture == "fine_noise" and dom.texture_sigma > 0:
        tex = numerics.band_project(rng.normal(size=out.shape), masks.high)
        out = out + dom.texture_sigma * tex / tex.std()
    elif dom.high_freq_texture == "stripes" and dom.texture_sigma > 0:
        yy, xx = _grid(size)
        out = out + dom.texture_sigma * np.cos(np.pi * (xx + yy) * rng.uniform(0.8, 1.0))
    elif dom.high_freq_texture not in ("none", "fine_noise", "stripes"):
        raise ConfigError(f"unknown texture {dom.high_freq_texture!r}")
    return np.clip(out, 0.0, 1.0)


def render_phantom(cls, domain, seed, size=IMAGE_SIZE):
    """Render ``(image float32, mask uint8)``; deterministic in ``(class, domain, seed)``.

    ``cls``/``domain`` may be objects or keys into the built-in tables.  If the
    target covers fewer than 8 pixels the next seed is used.
    """
    cls = CLASSES[cls] if not isinstance(cls, PhantomClass) else cls
    dom = DOMAINS[domain] if not isinstance(domain, DomainSpec) else domain
    for attempt in range(100):
        tissue, mask = render_tissue(cls, seed + attempt, size)
        if mask.sum() >= MIN_MASK_PIXELS:
            img = apply_domain(tissue, dom, seed + attempt)
            return img.astype(np.float32), mask.astype(np.uint8)
    raise ConfigError(f"class {cls.id} keeps producing degenerate masks")


def sample_episode(split, rng, cfg: DatasetConfig | None = None):
    """Draw a 1-way 1-shot episode: support and query share class and domain."""
    cfg = cfg or DatasetConfig()
    classes, dom_name = cfg.split(split)
    class_id = int(classes[rng.integers(len(classes))])
    cls, dom = cfg.classes[class_id], cfg.domains[dom_name]
    for _ in range(100):
        s_seed, q_seed = (int(x) for x in rng.integers(0, 2**62, size=2))
        if s_seed == q_seed:
            continue
        si, sm = render_phantom(cls, dom, s_seed, cfg.image_size)
        qi, qm = render_phantom(cls, dom, q_seed, cfg.image_size)
        if sm.any() and qm.any():
            return Episode(Sample(si, sm, s_seed), Sample(qi, qm, q_seed), class_id, dom_name)
    raise ConfigError("episode sampling exhausted 100 attempts")


# ------------------------------------------------------------------ binary container

EPISODE_MAGIC = b"FAMEP"
EPISODE_VERSION = 1
_HDR = struct.Struct("<IIIIQ")


def encode_episode(ep: Episode) -> bytes:
    parts = [EPISODE_MAGIC + str(EPISODE_VERSION).encode()]
    dom_id = DOMAIN_IDS.get(ep.domain)
    if dom_id is None:
        raise ConfigError(f"domain {ep.domain!r} has no container id")
    for s in (ep.support, ep.query):
        h, w = s.image.shape
        parts.append(_HDR.pack(h, w, ep.class_id, dom_id, s.seed))
        parts.append(np.ascontiguousarray(s.image, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(s.mask, dtype=np.uint8).tobytes())
    return b"".join(parts)


def decode_episode(buf: bytes) -> Episode:
    if len(buf) < 6 or buf[:5] != EPISODE_MAGIC:
        raise ParseError("bad episode magic", offset=0)
    if buf[5:6] != str(EPISODE_VERSION).encode():
        raise UnsupportedVersion(f"unsupported episode format version {buf[5:6]!r}", offset=5)
    off = 6
    samples, meta = [], []
    for _ in range(2):
        if len(buf) - off < _HDR.size:
            raise ParseError("truncated sample header", offset=off)
        h, w, cid, did, seed = _HDR.unpack_from(buf, off)
        off += _HDR.size
        need = h * w * 5
        if len(buf) - off < need:
            raise ParseError(f"truncated sample payload: need {need} bytes, have {len(buf) - off}", offset=off)
        img = np.frombuffer(buf, dtype="<f4", count=h * w, offset=off).reshape(h, w).astype(np.float32)
        off += h * w * 4
        mask = np.frombuffer(buf, dtype=np.uint8, count=h * w, offset=off).reshape(h, w).copy()
        off += h * w
        samples.append(Sample(img, mask, seed))
        meta.append((cid, did))
    if off != len(buf):
        raise ParseError(f"{len(buf) - off} trailing bytes", offset=off)
    if meta[0] != meta[1]:
        raise ParseError("support and query disagree on class or domain", offset=6)
    names = {v: k for k, v in DOMAIN_IDS.items()}
    if meta[0][1] not in names:
        raise ParseError(f"unknown domain id {meta[0][1]}", offset=6 + 12)
    return Episode(samples[0], samples[1], meta[0][0], names[meta[0][1]])


def save_episode(ep: Episode, path):
    with open(path, "wb") as fh:
        fh.write(encode_episode(ep))


def load_episode(path) -> Episode:
    with open(path, "rb") as fh:
        return decode_episode(fh.read())
