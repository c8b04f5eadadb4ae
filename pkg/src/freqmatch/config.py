"""Training configuration and its ``key = value`` INI representation.

Every ablation axis is a key in the ``[model]`` section::

    [train]
    iterations = 3000
    seed = 0

    [model]
    components = cpg+fam+msf
    band_roles = - + -
    band_ratios = 0.3, 0.4, 0.3
    match_bands = low, mid, high
    drop_bands =
    attention = soft
    pool_n = 900
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .fam import BANDS, FamConfig, parse_roles
from .encoder import EncoderConfig
from .msf import INITS

COMPONENT_LEVELS = {
    "cpg": frozenset(),
    "cpg+fam": frozenset({"fam"}),
    "cpg+fam+msf": frozenset({"fam", "msf"}),
}

_SECTIONS = {
    "train": ("iterations", "lr", "momentum", "lr_decay", "decay_every", "batch", "seed",
              "checkpoint_every", "eval_episodes", "eval_seed"),
    "model": ("components", "pool_n", "band_ratios", "band_roles", "match_bands", "drop_bands",
              "attention", "mlp_hidden", "share_band_params", "share_msf_heads", "msf_init", "alpha",
              "channels", "strides", "debug"),
    "data": ("image_size",),
}


def parse_components(text):
    """``cpg``, ``cpg+fam`` or ``cpg+fam+msf`` (a leading ``baseline+`` is ignored)."""
    parts = [p.strip().lower() for p in str(text).replace(",", "+").split("+") if p.strip()]
    parts = [p for p in parts if p != "baseline"]
    if parts and parts[0] != "cpg":
        parts.insert(0, "cpg")
    key = "+".join(parts)
    if key not in COMPONENT_LEVELS:
        raise ConfigError(f"components must be one of {sorted(COMPONENT_LEVELS)}, got {text!r}")
    return key


def _bands(value):
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    out = tuple(str(v).strip().lower() for v in value)
    for b in out:
        if b not in BANDS:
            raise ConfigError(f"unknown band {b!r}")
    return out


def _floats(value):
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    return tuple(float(v) for v in value)


def _ints(value):
    return tuple(int(v) for v in _floats(value))


def _bool(value):
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _opt_int(value):
    if value is None or str(value).strip().lower() in ("", "none", "auto"):
        return None
    return int(value)


@dataclass
class TrainConfig:
    iterations: int = 3000
    lr: float = 0.001
    momentum: float = 0.9
    lr_decay: float = 0.95
    decay_every: int = 1000
    batch: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    eval_episodes: int = 200
    eval_seed: int = 12345

    components: str = "cpg+fam+msf"
    pool_n: int = 900
    band_ratios: tuple = (0.3, 0.4, 0.3)
    band_roles: str = "- + -"
    match_bands: tuple = BANDS
    drop_bands: tuple = ()
    attention: str = "soft"
    mlp_hidden: int | None = None
    share_band_params: bool = False
    share_msf_heads: bool = False
    msf_init: str = "kaiming"
    alpha: float = 20.0
    channels: tuple = (8, 16, 32)
    strides: tuple = (2, 1, 1)
    debug: bool = False

    image_size: int = 64

    _coerce = {
        "iterations": int, "lr": float, "momentum": float, "lr_decay": float, "decay_every": int,
        "batch": int, "seed": int, "checkpoint_every": int, "eval_episodes": int, "eval_seed": int,
        "components": parse_components, "pool_n": int, "band_ratios": _floats, "band_roles": str,
        "match_bands": _bands, "drop_bands": _bands, "attention": lambda v: str(v).strip(),
        "mlp_hidden": _opt_int, "share_band_params": _bool, "share_msf_heads": _bool,
        "msf_init": lambda v: str(v).strip().lower(),
        "alpha": float, "channels": _ints, "strides": _ints, "debug": _bool, "image_size": int,
    }

    def __post_init__(self):
        for f in dataclasses.fields(self):
            setattr(self, f.name, self._coerce[f.name](getattr(self, f.name)))
        if self.batch != 1:
            raise ConfigError("only batch = 1 episodes are supported")
        if self.iterations < 0 or self.decay_every < 1:
            raise ConfigError("iterations must be >= 0 and decay_every >= 1")
        parse_roles(self.band_roles)
        if self.msf_init not in INITS:
            raise ConfigError(f"msf_init must be one of {INITS}, got {self.msf_init!r}")
        # building the sub-configs validates ratios, N and strides
        self.fam_config()
        self.encoder_config().feature_shape(self.image_size, self.image_size)

    @property
    def enabled(self):
        return COMPONENT_LEVELS[self.components]

    def fam_config(self):
        return FamConfig(n=self.pool_n, ratios=self.band_ratios, roles=self.band_roles,
                         match_bands=self.match_bands, drop_bands=self.drop_bands,
                         attention=self.attention, hidden=self.mlp_hidden,
                         share_params=self.share_band_params, debug=self.debug)

    def encoder_config(self):
        return EncoderConfig(channels_per_stage=self.channels, stride_per_stage=self.strides)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # ---------------------------------------------------------------- INI
    def to_ini(self):
        cp = configparser.ConfigParser()
        for section, keys in _SECTIONS.items():
            cp[section] = {k: _fmt(getattr(self, k)) for k in keys}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in cp[section].items()]
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        values = {}
        for section in cp.sections():
            allowed = _SECTIONS.get(section)
            if allowed is None:
                raise ConfigError(f"unknown config section [{section}]")
            for key, val in cp[section].items():
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[key] = val
        return cls(**values)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_ini(fh.read())


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)
