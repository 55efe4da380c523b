"""Sample-curve cache: one self-describing text record per run key.

Format (version 1)::

    # casimir-sphere curve v1
    # key: <sha256 of the canonical run payload>
    # payload: <canonical JSON of media + sampling protocol>
    # created: <ISO timestamp; the only non-reproducible line>
    delta,value,err_estimate
    1.000000000000e-03,-2.891197385930e+00,1.66e-10
    ...

Records are written atomically and keyed by the payload hash, so a rerun
with an unchanged protocol reads back bit-identical samples.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from .stress import StressSample

FORMAT_LINE = "# casimir-sphere curve v1"


def canonical_json(payload: dict) -> str:
    """Key-order-independent serialization; floats via repr round-trip."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      default=float)


def payload_hash(payload: dict) -> str:
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def _curve_path(cache_dir, key: str) -> Path:
    return Path(cache_dir) / f"curve-{key[:32]}.txt"


def store_curve(cache_dir, key: str, payload: dict,
                samples: list[StressSample]) -> Path:
    path = _curve_path(cache_dir, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [FORMAT_LINE,
             f"# key: {key}",
             f"# payload: {canonical_json(payload)}",
             f"# created: {datetime.now(timezone.utc).isoformat()}",
             "delta,value,err_estimate"]
    for s in samples:
        lines.append(
            f"{float(s.delta)!r},{float(s.value)!r},{float(s.err_estimate)!r}")
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path


def load_curve(cache_dir, key: str) -> list[StressSample] | None:
    path = _curve_path(cache_dir, key)
    if not path.exists():
        return None
    lines = path.read_text().splitlines()
    if not lines or lines[0] != FORMAT_LINE:
        return None
    if not any(line == f"# key: {key}" for line in lines[:4]):
        return None
    samples = []
    for line in lines:
        if line.startswith("#") or line.startswith("delta,"):
            continue
        d, v, e = line.split(",")
        samples.append(StressSample(delta=float(d), value=float(v),
                                    err_estimate=float(e)))
    return samples or None
