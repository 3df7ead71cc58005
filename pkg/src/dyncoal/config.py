"""Environment configuration, task-setting catalog and presets."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

# name -> tasks per level (level 1, level 2, level 3)
TASK_SETTINGS: dict[str, tuple[int, int, int]] = {
    "E1": (15, 0, 0),
    "E2": (10, 0, 0),
    "E3": (5, 5, 0),
    "M1": (6, 4, 4),
    "M2": (4, 3, 3),
    "M3": (2, 2, 1),
    "H1": (0, 5, 5),
    "H2": (0, 0, 10),
    "H3": (0, 0, 5),
    "4xM2": (16, 12, 12),
}

# the nine generalization settings, in catalog order
TABLE_SETTINGS = ("E1", "E2", "E3", "M1", "M2", "M3", "H1", "H2", "H3")

PRNG_ALGORITHM = "numpy.PCG64"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SpawnModel:
    kind: str = "instant"  # "instant" | "bernoulli"
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("instant", "bernoulli"):
            raise ConfigError(f"unknown spawn kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"spawn probability must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class TaskRegion:
    kind: str = "homogeneous"  # "homogeneous" | "corner"

    def __post_init__(self):
        if self.kind not in ("homogeneous", "corner"):
            raise ConfigError(f"unknown region kind {self.kind!r}")


@dataclass(frozen=True)
class EnvConfig:
    width: int = 20
    n_robots: int = 10
    view_range: int = 5
    comm_range: int = 8
    l_max: int = 3
    spawn: SpawnModel = field(default_factory=SpawnModel)
    region: TaskRegion = field(default_factory=lambda: TaskRegion("corner"))
    task_setting: str | tuple[int, ...] = "M2"
    horizon: int = 100
    seed: int = 0
    alpha: float = 2.0 / 3.0
    # "goal": weight 1 at the destination; "robot": weight 1 at the robot's own cell
    intent_anchor: str = "goal"

    def __post_init__(self):
        if isinstance(self.task_setting, list):
            object.__setattr__(self, "task_setting", tuple(self.task_setting))
        self.validate()

    def validate(self) -> None:
        if self.width < 3:
            raise ConfigError("width must be >= 3")
        if self.n_robots < 1:
            raise ConfigError("n_robots must be >= 1")
        if self.view_range < 0 or self.comm_range < self.view_range:
            raise ConfigError("need 0 <= view_range <= comm_range")
        if self.l_max < 1:
            raise ConfigError("l_max must be >= 1")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.intent_anchor not in ("goal", "robot"):
            raise ConfigError(f"unknown intent_anchor {self.intent_anchor!r}")
        counts = self.task_counts
        if any(c < 0 for c in counts):
            raise ConfigError("task counts must be non-negative")
        if any(c > 0 for c in counts[self.l_max:]):
            raise ConfigError(f"task setting uses levels above l_max={self.l_max}")

    @property
    def task_counts(self) -> tuple[int, ...]:
        if isinstance(self.task_setting, str):
            try:
                return TASK_SETTINGS[self.task_setting]
            except KeyError:
                raise ConfigError(f"unknown task setting {self.task_setting!r}") from None
        return tuple(int(c) for c in self.task_setting)

    @property
    def window(self) -> int:
        return 2 * self.comm_range + 1

    @property
    def n_channels(self) -> int:
        """robot + one per level + obstacle + intent"""
        return self.l_max + 3

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if isinstance(self.task_setting, tuple):
            d["task_setting"] = list(self.task_setting)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EnvConfig:
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(d.get("spawn"), dict):
            d["spawn"] = SpawnModel(**d["spawn"])
        if isinstance(d.get("region"), dict):
            d["region"] = TaskRegion(**d["region"])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> EnvConfig:
        return replace(self, **changes)


PRESETS: dict[str, EnvConfig] = {
    "nonhomogeneous": EnvConfig(
        width=20, n_robots=10, region=TaskRegion("corner"), task_setting="M2"
    ),
    "homogeneous": EnvConfig(
        width=20, n_robots=40, region=TaskRegion("homogeneous"), task_setting="4xM2"
    ),
}


def preset(name: str, **changes) -> EnvConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return base.replace(**changes) if changes else base


def load_config(path: str | Path) -> EnvConfig:
    """Read an EnvConfig from a JSON or YAML file.

    A ``preset`` key, if present, supplies defaults that the remaining keys
    override.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    name = data.pop("preset", None)
    if name is not None:
        merged = preset(name).to_dict()
        merged.update(data)
        data = merged
    return EnvConfig.from_dict(data)
