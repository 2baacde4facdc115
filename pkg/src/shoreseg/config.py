"""Pipeline configuration: a flat key=value text file, losslessly parsed.

Every field of PipelineConfig maps to one line ``key=value``; lists are
comma-separated. Floats serialize via repr so a write/read cycle returns
the exact same values. Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .dataset import DEFAULT_LABEL_SET
from .enhance import DEFAULT_CLIP_PERCENT
from .metrics import DEFAULT_IOU_THRESHOLDS, DEFAULT_SIZE_BOUNDS
from .tiling import DEFAULT_POLICY, POLICIES

__all__ = ["PipelineConfig", "parse_config", "render_config",
           "load_config", "save_config", "CONFIG_ENV_VAR"]

CONFIG_ENV_VAR = "SHORESEG_CONFIG"


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline knobs in one place; flags override file values."""

    input_dir: str = "."
    output_dir: str = "out"
    clip_percent: float = DEFAULT_CLIP_PERCENT
    tile_size: int = 600
    tile_policy: str = DEFAULT_POLICY
    train_fraction: float = 0.55
    test_fraction: float = 0.35
    val_fraction: float = 0.10
    seed: int = 0
    labels: tuple = DEFAULT_LABEL_SET
    iou_thresholds: tuple = DEFAULT_IOU_THRESHOLDS
    small_bound: int = DEFAULT_SIZE_BOUNDS[0]
    large_bound: int = DEFAULT_SIZE_BOUNDS[1]
    jobs: int = 0  # 0 means one worker per available core

    def __post_init__(self):
        if not 0.0 <= self.clip_percent < 1.0:
            raise ValueError(f"clip_percent out of [0, 1): {self.clip_percent}")
        if self.tile_size < 1:
            raise ValueError(f"tile_size must be positive: {self.tile_size}")
        if self.tile_policy not in POLICIES:
            raise ValueError(
                f"tile_policy {self.tile_policy!r} not one of {POLICIES}"
            )
        if any(f < 0 for f in self.fractions):
            raise ValueError(f"split fractions must be non-negative: "
                             f"{self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(
                f"split fractions sum to {sum(self.fractions)}, not 1"
            )
        if not self.labels or len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be non-empty and unique")
        if any(not 0.0 < t <= 1.0 for t in self.iou_thresholds):
            raise ValueError("iou_thresholds must lie in (0, 1]")
        if not 1 <= self.small_bound < self.large_bound:
            raise ValueError(
                f"need 1 <= small_bound < large_bound, got "
                f"{self.small_bound}/{self.large_bound}"
            )
        if self.jobs < 0:
            raise ValueError(f"jobs must be >= 0: {self.jobs}")

    @property
    def fractions(self) -> tuple:
        return (self.train_fraction, self.test_fraction, self.val_fraction)


def render_config(config: PipelineConfig) -> str:
    """Serializes a config to key=value lines in field order."""
    lines = []
    for field in fields(PipelineConfig):
        value = getattr(config, field.name)
        if isinstance(value, tuple):
            text = ",".join(_atom_to_text(v) for v in value)
        else:
            text = _atom_to_text(value)
        lines.append(f"{field.name}={text}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> PipelineConfig:
    """Parses key=value text into a PipelineConfig.

    Raises:
        ValueError: malformed line, unknown key, or bad field value.
    """
    known = {field.name: field for field in fields(PipelineConfig)}
    defaults = PipelineConfig()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value_text = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_field(
            value_text.strip(), getattr(defaults, key), key
        )
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as handle:
        return parse_config(handle.read())


def save_config(path, config: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(render_config(config))


def _atom_to_text(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_field(text: str, default, key: str):
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        element = default[0] if default else ""
        if isinstance(element, float):
            return tuple(float(p) for p in parts)
        if isinstance(element, int):
            return tuple(int(p) for p in parts)
        return tuple(parts)
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text
