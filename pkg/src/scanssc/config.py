"""Run configuration stored as flat ``key = value`` text with ``#`` comments."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .masks import FLIP_MODES, MARGIN_DEFAULTS, MARGIN_MODES, WIDTH_MODES
from .objective import LossWeights
from .scan_module import ScanModuleConfig
from .voxel import AXES, ConfigError, GridDims


@dataclass(frozen=True)
class RunConfig:
    target_dims: tuple[int, int, int] = (16, 16, 4)
    proposal_dims: tuple[int, int, int] = (8, 8, 2)
    channels: int = 8
    num_classes: int = 20
    heads: int = 1
    ffn_mult: int = 4
    margin_dep: float = MARGIN_DEFAULTS["dep"]
    margin_wid: float = MARGIN_DEFAULTS["wid"]
    margin_hgt: float = MARGIN_DEFAULTS["hgt"]
    flip_dep: bool = False
    flip_wid: bool = False
    flip_hgt: bool = False
    flip_mode: str = "reflect"
    width_mode: str = "same_side"
    margin_mode: str = "mutual"
    branch_dep: bool = True
    branch_wid: bool = True
    branch_hgt: bool = True
    scan_loss_dep: bool = True
    scan_loss_wid: bool = True
    scan_loss_hgt: bool = True
    lambda_d: float = 0.001
    lambda_scan: float = 1.0
    depth_term: float = 0.0
    class_weighting: str = "uniform"
    mixer_units: int = 2
    pyramid: bool = True
    padding: str = "zeros"
    share_params: bool = False
    seed: int = 0
    lr: float = 0.05
    momentum: float = 0.9
    steps: int = 200

    def __post_init__(self):
        for name in ("target_dims", "proposal_dims"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    # derived views ---------------------------------------------------------

    @property
    def grid(self) -> GridDims:
        return GridDims(self.target_dims, self.proposal_dims, self.channels)

    def margin(self, axis) -> float:
        return getattr(self, f"margin_{axis}")

    @property
    def flips(self) -> tuple[str, ...]:
        return tuple(a for a in AXES if getattr(self, f"flip_{a}"))

    @property
    def branches(self) -> tuple[str, ...]:
        return tuple(a for a in AXES if getattr(self, f"branch_{a}"))

    @property
    def scan_axes(self) -> tuple[str, ...]:
        return tuple(a for a in AXES if getattr(self, f"scan_loss_{a}"))

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_d, self.lambda_scan)

    def module_config(self) -> ScanModuleConfig:
        return ScanModuleConfig(heads=self.heads, enabled=self.branches, padding=self.padding,
                                pyramid=self.pyramid, share_params=self.share_params)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def validate(self):
        self.grid  # extents and integer factors
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.heads < 1 or self.channels % self.heads:
            raise ConfigError(f"channels {self.channels} not divisible by heads {self.heads}")
        if self.ffn_mult < 1 or self.mixer_units < 0:
            raise ConfigError("ffn_mult must be >= 1 and mixer_units >= 0")
        for a in AXES:
            if not 0.0 <= self.margin(a) <= 1.0:
                raise ConfigError(f"margin_{a} must lie in [0, 1]")
        for value, allowed, name in ((self.flip_mode, FLIP_MODES, "flip_mode"),
                                     (self.width_mode, WIDTH_MODES, "width_mode"),
                                     (self.margin_mode, MARGIN_MODES, "margin_mode"),
                                     (self.padding, ("zeros", "symmetric"), "padding"),
                                     (self.class_weighting, ("uniform", "frequency"),
                                      "class_weighting")):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        if self.pyramid and self.branches and min(self.proposal_dims) < 2:
            raise ConfigError("pyramid mixing needs every proposal extent >= 2; set pyramid = false")
        if self.class_weighting == "frequency" and self.num_classes != 20:
            raise ConfigError("frequency weighting needs the 20-class SemanticKITTI table")
        if self.lambda_d < 0 or self.lambda_scan < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.lr <= 0 or not 0.0 <= self.momentum < 1.0 or self.steps < 0:
            raise ConfigError("need lr > 0, momentum in [0, 1) and steps >= 0")

    # text format -----------------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, tuple):
                text = ",".join(str(x) for x in v)
            else:
                text = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> RunConfig:
        parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                           delimiters=("=",), interpolation=None)
        try:
            parser.read_string("[run]\n" + text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}") from None
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in parser["run"].items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse(key, raw.strip(), getattr(_DEFAULT, key))
        return cls(**values)

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.loads(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.dumps())


def _parse(key, raw, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(","))
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


_DEFAULT = RunConfig()


def _switches(branches=(), losses=()):
    out = {f"branch_{a}": a in branches for a in AXES}
    out.update({f"scan_loss_{a}": a in losses for a in AXES})
    return out


# component switch settings: single branches, all branches, single loss
# terms, all loss terms, everything, and the bare baseline
ABLATIONS = {
    "a": _switches(("dep",)),
    "b": _switches(("wid",)),
    "c": _switches(("hgt",)),
    "d": _switches(AXES),
    "e": _switches(losses=("dep",)),
    "f": _switches(losses=("wid",)),
    "g": _switches(losses=("hgt",)),
    "h": _switches(losses=AXES),
    "full": _switches(AXES, AXES),
    "baseline": _switches(),
}
