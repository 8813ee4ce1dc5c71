"""Run configuration: flat ``key = value`` files plus command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from gfmexplain.errors import InputError


def _parse_value(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        return [_parse_value(x) for x in inner.split(",")] if inner else []
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def parse_flat_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, section headers are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]") and "=" not in line):
            continue
        if "=" not in line:
            raise InputError(f"{source}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = _parse_value(value)
    return out


@dataclass(frozen=True)
class RunConfig:
    consumption: Path | None = None
    temperature: Path | None = None
    out_dir: Path = Path("out")
    n_filt: int = 50
    n_synthetic: int = 100
    k: int = 5
    max_len: int = 3
    min_coverage: float = 0.05
    bins: int = 3
    window: int = 20
    tau_long: float = 0.57
    tau_short: float = 0.39
    long_series_threshold: int = 180
    ridge_penalty: float = 1e-6
    dtw_band: int | None = None
    tree_max_depth: int = 4
    tree_min_leaf: int = 20
    holdout_days: int = 365
    seed: int = 0
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        for name in ("consumption", "temperature", "out_dir"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, Path):
                object.__setattr__(self, name, Path(v))
        if self.n_filt < 1:
            raise InputError("n_filt must be >= 1")
        if self.n_synthetic < 0:
            raise InputError("n_synthetic must be >= 0")
        if self.bins < 2:
            raise InputError("bins must be >= 2")
        if self.jobs < 1:
            raise InputError("jobs must be >= 1")
        if self.holdout_days < 1:
            raise InputError("holdout_days must be >= 1")

    @property
    def models_dir(self) -> Path:
        return self.out_dir / "models"

    @property
    def reports_dir(self) -> Path:
        return self.out_dir / "reports"

    @property
    def eval_dir(self) -> Path:
        return self.out_dir / "eval"

    def gfm(self):
        from gfmexplain.gfm import GfmConfig

        return GfmConfig(self.window, self.tau_long, self.tau_short,
                         self.long_series_threshold, self.ridge_penalty)

    def miner(self):
        from gfmexplain.rules import MinerConfig

        return MinerConfig(self.k, self.max_len, self.min_coverage)

    def dtw(self):
        from gfmexplain.neighborhood import DtwConfig

        return DtwConfig(self.dtw_band, True)

    def with_overrides(self, **overrides) -> RunConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides) -> RunConfig:
        """Defaults, then the config file, then non-None ``overrides``."""
        values = {}
        if path is not None:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise InputError(f"{path}: {exc}") from exc
            values = parse_flat_config(text, source=str(path))
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InputError(f"{path}: unknown config keys: {', '.join(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
