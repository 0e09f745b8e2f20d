"""Experiment configuration and run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .annihilate import SCHEDULES
from .errors import ConfigurationError
from .grid import MAX_LEVEL, Weight, check_fast_growth


@dataclass
class ExperimentConfig:
    weight: dict = field(default_factory=lambda: {"kind": "gauss-exp", "parameters": [1.0]})
    p: float = 1.0
    level: int = 12
    m_max: int = 4
    epsilon: float = 0.5
    schedule: str = "dyadic-split"
    t0: float = 1.0
    ratio: float = 2.0
    count: int = 21
    N: int = 2
    m: int = 1
    seed: int = 0
    out: str = "run"
    data: str = "baseline"
    data_file: str | None = None
    tail_terms: int = 32

    @classmethod
    def load(cls, path=None, **overrides) -> "ExperimentConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, ValueError) as exc:
                raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigurationError("config must be a JSON object")
            if "schedule" in data and isinstance(data["schedule"], dict):
                sched = data.pop("schedule")
                data.update({k: sched[k] for k in ("t0", "ratio", "count") if k in sched})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.p not in (1, 2, 1.0, 2.0):
            raise ConfigurationError("p must be 1 or 2")
        self.p = float(self.p)
        if not 1 <= int(self.level) <= MAX_LEVEL:
            raise ConfigurationError(f"level must be in [1, {MAX_LEVEL}]")
        if self.m_max < 0 or (self.m_max > 0 and self.m_max >= self.level):
            raise ConfigurationError("m_max must satisfy 0 <= m_max < level")
        if not 0 < self.epsilon < 1:
            raise ConfigurationError("epsilon must lie in (0, 1)")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"schedule must be one of {SCHEDULES}")
        if self.t0 < 1 or self.ratio <= 1 or self.count < 2:
            raise ConfigurationError("time schedule needs t0 >= 1, ratio > 1, count >= 2")
        if self.N not in (2, 3):
            raise ConfigurationError("tensor experiments support N in {2, 3}")
        if self.data not in ("baseline", "annihilated", "custom"):
            raise ConfigurationError("data must be baseline, annihilated or custom")
        w = self.weight_obj()
        if not check_fast_growth(w, max(self.m_max, self.m, 1)).passed:
            raise ConfigurationError("weight is not fast growing up to the requested order")

    def weight_obj(self) -> Weight:
        try:
            return Weight.from_dict(self.weight)
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigurationError(f"bad weight spec: {exc}") from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass
class RunManifest:
    command: str
    config_hash: str
    generator: str
    files: dict[str, str]
    version: str = __version__
    started: str = ""
    finished: str = ""

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(dump_json(dataclasses.asdict(self)))
        return path

    @classmethod
    def for_files(cls, command: str, cfg: ExperimentConfig, directory, names, started: str):
        d = Path(directory)
        files = {n: sha256_file(d / n) for n in sorted(names)}
        return cls(command, cfg.digest(), f"numpy.random.default_rng(seed={cfg.seed})",
                   files, started=started, finished=_timestamp())


def check_manifest(directory) -> list[str]:
    d = Path(directory)
    data = json.loads((d / "manifest.json").read_text())
    bad = []
    for name, digest in data["files"].items():
        f = d / name
        if not f.exists():
            bad.append(f"{name}: missing")
        elif sha256_file(f) != digest:
            bad.append(f"{name}: hash mismatch")
    return bad


now = _timestamp
