"""Flat-key config files, CLI overrides, run manifests and CSV output.

Config files are `key = value` lines (# comments allowed).  A manifest JSON
produced by an earlier run is also accepted as a config: its resolved
`config` block is extracted, which is what makes every CSV reproducible bit
for bit from its manifest.  Floats are written with 17 significant digits.
"""

from __future__ import annotations

import json
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

UNITS_NOTE = "gamma=1 default, tau units; B in units of gamma, M and K in 1/tau"


class ConfigError(ValueError):
    pass


def _coerce(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in s:
        return [_coerce(part) for part in s.split(",") if part.strip()]
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    if p.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad JSON config {p}: {e}") from e
        if "config" in data and isinstance(data["config"], dict):
            return dict(data["config"])   # manifest re-run
        return dict(data)
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value'")
        key, val = body.split("=", 1)
        cfg[key.strip()] = _coerce(val)
    return cfg


def parse_overrides(pairs) -> dict:
    """['--key', 'value', ...] from the command line; overrides win."""
    out = {}
    i = 0
    while i < len(pairs):
        tok = pairs[i]
        if not tok.startswith("--"):
            raise ConfigError(f"expected --key, got {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(pairs):
                raise ConfigError(f"missing value for --{key}")
            val = pairs[i + 1]
            i += 2
        out[key] = _coerce(val)
    return out


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(outdir, command: str, config: dict, version: str,
                   exclusions: dict = None) -> Path:
    man = {
        "command": command,
        "config": {k: config[k] for k in sorted(config)},
        "master_seed": config.get("seed"),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "tool_version": version,
        "units": UNITS_NOTE,
        "exclusions": exclusions or {},
    }
    path = Path(outdir) / "manifest.json"
    path.write_text(json.dumps(man, indent=2, default=str) + "\n")
    return path


def output_dir(explicit=None) -> Path:
    d = Path(explicit or os.environ.get("DPMAG_OUTPUT_DIR", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d
