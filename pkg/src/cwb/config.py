"""Server configuration: JSON file plus CWB_* environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path


class BadConfig(ValueError):
    pass


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8070
    store_path: str = ":memory:"
    clock: str = "real"  # real | simulated
    sim_start: float = 1_600_000_000.0
    max_preparing: int = 4
    max_postprocessing: int = 4
    default_timeout_minutes: int = 360
    default_release_grace_minutes: int = 30
    operator_token: str = "cwb-operator-token"
    secret: str = "cwb-secret"
    scheduler_tick_s: float = 30.0
    advertised_url: str = ""
    providers: dict = field(default_factory=dict)
    ui_dir: str | None = None

    def __post_init__(self):
        if self.clock not in ("real", "simulated"):
            raise BadConfig(f"clock must be 'real' or 'simulated', got {self.clock!r}")
        if self.max_preparing < 1 or self.max_postprocessing < 1:
            raise BadConfig("slot maxima must be >= 1")
        if self.default_timeout_minutes <= 0 or self.default_release_grace_minutes < 0:
            raise BadConfig("default timeout must be > 0 and release grace >= 0")
        if not self.advertised_url:
            self.advertised_url = f"http://{self.host}:{self.port}"


_INT_FIELDS = {"port", "max_preparing", "max_postprocessing",
               "default_timeout_minutes", "default_release_grace_minutes"}
_FLOAT_FIELDS = {"scheduler_tick_s", "sim_start"}


def load_config(path: str | None = None, env: dict | None = None) -> ServerConfig:
    """Read the config file (if any), then apply CWB_<FIELD> overrides."""
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise BadConfig(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise BadConfig(f"config {path} line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise BadConfig(f"config {path}: top level must be an object")
    env = os.environ if env is None else env
    known = set(ServerConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise BadConfig(f"unknown config fields: {', '.join(sorted(unknown))}")
    for name in known:
        raw = env.get(f"CWB_{name.upper()}")
        if raw is None:
            continue
        if name in _INT_FIELDS:
            doc[name] = int(raw)
        elif name in _FLOAT_FIELDS:
            doc[name] = float(raw)
        elif name == "providers":
            doc[name] = json.loads(raw)
        else:
            doc[name] = raw
    try:
        return ServerConfig(**doc)
    except TypeError as exc:
        raise BadConfig(str(exc)) from None
