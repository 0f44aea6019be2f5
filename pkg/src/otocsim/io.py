"""Run configuration, CSV helpers and the run manifest."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError


def fmt(v) -> str:
    return f"{v:.12g}"


def write_rows(path, header: list[str], rows, comments: dict | None = None) -> None:
    with Path(path).open("w") as fh:
        for k, v in (comments or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer))
                                                               else fmt(v)) for v in row) + "\n")


def eigensystem_to_csv(path, energies, parity=None) -> None:
    par = parity if parity is not None else [0] * len(energies)
    write_rows(path, ["index", "energy", "parity"],
               ((i, float(e), int(p)) for i, (e, p) in enumerate(zip(energies, par))))


def observables_to_csv(path, times, moments: list[dict]) -> None:
    keys = ["Sx", "Sy", "Sz", "VarSx", "VarSy", "VarSz"]
    write_rows(path, ["t", *keys], ([t] + [m[k] for k in keys] for t, m in zip(times, moments)))


def _round(obj):
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else str(obj)
    if isinstance(obj, (np.floating,)):
        return _round(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_round(v) for v in obj]
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_round(obj), indent=2, sort_keys=True) + "\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, config: dict, files: list[str], wall_clock: float,
                   version: str, threads: int | None, threads_used: int | None = None) -> dict:
    manifest = {
        "config": config,
        "files": [{"path": f, "sha256": sha256(out_dir / f)} for f in sorted(files)],
        "wall_clock_s": round(wall_clock, 3),
        "version": version,
        "threads": threads,
        "threads_used": threads_used,
    }
    (out_dir / "manifest.json").write_text(json.dumps(_round(manifest), indent=2, sort_keys=True) + "\n")
    return manifest


# ---- configuration -------------------------------------------------------

PRESET_SUFFIX = ".yaml"


def preset_names() -> list[str]:
    root = resources.files("otocsim") / "presets"
    return sorted(p.name[: -len(PRESET_SUFFIX)] for p in root.iterdir()
                  if p.name.endswith(PRESET_SUFFIX))


def load_config(source: str) -> dict:
    """Read a YAML config from a path, or a bundled preset by name."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    else:
        name = source[len("preset:"):] if source.startswith("preset:") else source
        res = resources.files("otocsim") / "presets" / f"{name}{PRESET_SUFFIX}"
        if not res.is_file():
            raise ConfigError("<file>", f"no config file or preset named {source!r}")
        text = res.read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return cfg


@dataclass
class Section:
    """Typed accessor that reports the dotted key on failure."""

    data: dict
    prefix: str

    def _key(self, name):
        return f"{self.prefix}.{name}" if self.prefix else name

    def has(self, name) -> bool:
        return name in self.data

    def sub(self, name, required=True) -> "Section":
        val = self.data.get(name)
        if val is None:
            if required:
                raise ConfigError(self._key(name), "missing section")
            val = {}
        if not isinstance(val, dict):
            raise ConfigError(self._key(name), "must be a mapping")
        return Section(val, self._key(name))

    def get(self, name, kind, default=..., check=None, msg=""):
        if name not in self.data or self.data[name] is None:
            if default is ...:
                raise ConfigError(self._key(name), "missing required key")
            return default
        raw = self.data[name]
        try:
            if kind is bool:
                if not isinstance(raw, bool):
                    raise TypeError
                val = raw
            elif kind is int:
                if isinstance(raw, bool) or float(raw) != int(float(raw)):
                    raise TypeError
                val = int(float(raw))
            elif kind is float:
                if isinstance(raw, bool):
                    raise TypeError
                val = float(raw)
                if not math.isfinite(val):
                    raise TypeError
            elif kind is list:
                if not isinstance(raw, list):
                    raise TypeError
                val = raw
            else:
                val = kind(raw)
        except (TypeError, ValueError):
            raise ConfigError(self._key(name), f"expected {kind.__name__}, got {raw!r}") from None
        if check is not None and not check(val):
            raise ConfigError(self._key(name), msg or f"invalid value {val!r}")
        return val

    def choice(self, name, options, default=...):
        val = self.get(name, str, default)
        if val not in options:
            raise ConfigError(self._key(name), f"must be one of {list(options)}, got {val!r}")
        return val

    def floats(self, name, default=..., length=None):
        raw = self.get(name, list, default)
        try:
            vals = [float(v) for v in raw]
        except (TypeError, ValueError):
            raise ConfigError(self._key(name), "expected a list of numbers") from None
        if length is not None and len(vals) != length:
            raise ConfigError(self._key(name), f"expected {length} numbers")
        return vals
