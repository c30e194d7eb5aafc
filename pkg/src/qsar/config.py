"""Flat ``key = value`` run configuration (``#`` starts a comment)."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .circuits import EncodingStrategy
from .models import VALID_STRATEGIES, ModelKind
from .nn.optim import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "magqt"
    strategy: Optional[str] = None      # default: the model's first valid strategy
    n_classes: int = 3
    data: Optional[str] = None          # manifest path or dataset dir; else synthesize
    synth_mode: str = "mag"
    synth_train: int = 90
    synth_test: int = 60
    data_seed: int = 0
    out: str = "run"
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        try:
            kind = ModelKind(self.model)
        except ValueError:
            raise ConfigError(f"unknown model {self.model!r} (magqt, dualpath, pure)") from None
        if self.strategy is None:
            self.strategy = VALID_STRATEGIES[kind][0].value
        try:
            strat = EncodingStrategy(self.strategy)
        except ValueError:
            raise ConfigError(f"unknown strategy {self.strategy!r} (s1..s5)") from None
        if strat not in VALID_STRATEGIES[kind]:
            allowed = "/".join(s.value for s in VALID_STRATEGIES[kind])
            raise ConfigError(f"model {kind.value} requires strategy {allowed}, got {strat.value}")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if kind is ModelKind.PURE and self.n_classes < 3:
            raise ConfigError("the pure-quantum model needs n_classes >= 3")
        return self


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "train"}


def _coerce(key: str, raw: Any, default: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    s = raw.strip()
    try:
        if isinstance(default, bool):
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
        if isinstance(default, tuple):
            return tuple(float(v) for v in s.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    if default is None and s.lower() in ("", "none"):
        return None
    return s


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def build_config(values: Mapping[str, Any]) -> RunConfig:
    """RunConfig from a flat mapping; unknown keys are an error."""
    run_kw: dict[str, Any] = {}
    train_kw: dict[str, Any] = {}
    defaults_run, defaults_train = RunConfig(), TrainConfig()
    for key, raw in values.items():
        if key in _RUN_FIELDS:
            run_kw[key] = _coerce(key, raw, getattr(defaults_run, key))
        elif key in _TRAIN_FIELDS:
            train_kw[key] = _coerce(key, raw, getattr(defaults_train, key))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        train = TrainConfig(**train_kw)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    for k in ("model", "strategy"):
        if run_kw.get(k) is not None:
            run_kw[k] = str(run_kw[k]).lower()
    return RunConfig(train=train, **run_kw).validate()


def load_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """File values first, then ``overrides`` (flags) on top."""
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        values.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k.replace("-", "_")] = v
    return build_config(values)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in _RUN_FIELDS:
        v = getattr(cfg, name)
        lines.append(f"{name} = {'none' if v is None else v}")
    for name in _TRAIN_FIELDS:
        v = getattr(cfg.train, name)
        if isinstance(v, tuple):
            v = " ".join(repr(x) for x in v)
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"
