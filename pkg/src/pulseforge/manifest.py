"""Run manifests: who produced which artifacts, from what config and seeds.

The manifest is the one file in a run directory that is allowed to know the
wall clock.  Reports and numeric exports stay byte-reproducible, so a rerun
with the same config and seed can be diffed file by file; the manifest names
them all and is never rewritten once on disk.
"""

from __future__ import annotations

import json
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import config_hash

__all__ = ["ManifestError", "RunManifest", "MANIFEST_NAME"]

MANIFEST_NAME = "manifest.json"


class ManifestError(RuntimeError):
    pass


def _provenance() -> str:
    import numpy

    return (
        f"pulseforge {__version__} | python {platform.python_version()} "
        f"| numpy {numpy.__version__}"
    )


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    command: str
    config_hash: str
    config: dict
    seeds: tuple[int, ...]
    artifacts: tuple[str, ...] = ()
    provenance: str = field(default_factory=_provenance)
    created_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )

    @classmethod
    def create(cls, command: str, config: dict, seeds, artifacts=()) -> "RunManifest":
        digest = config_hash(config)
        seeds = tuple(int(s) for s in seeds)
        run_id = f"{command}-{digest}-s{seeds[0] if seeds else 0}"
        return cls(
            run_id=run_id,
            command=command,
            config_hash=digest,
            config=config,
            seeds=seeds,
            artifacts=tuple(str(a) for a in artifacts),
        )

    def write(self, out_dir) -> Path:
        """Write manifest.json; an existing manifest must agree or it is an error.

        Identity is judged on everything except the timestamp, so idempotent
        reruns into the same directory keep the original file untouched.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / MANIFEST_NAME
        payload = asdict(self)
        payload["seeds"] = list(self.seeds)
        payload["artifacts"] = list(self.artifacts)
        if path.exists():
            previous = json.loads(path.read_text(encoding="utf-8"))
            a, b = dict(previous), dict(payload)
            a.pop("created_at", None), b.pop("created_at", None)
            if a != b:
                raise ManifestError(
                    f"{path} already describes run {previous.get('run_id')!r}; "
                    "manifests are immutable, write into a fresh --out-dir"
                )
            return path
        path.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")
        return path

    @classmethod
    def read(cls, out_dir) -> "RunManifest":
        path = Path(out_dir) / MANIFEST_NAME
        if not path.exists():
            raise ManifestError(f"no {MANIFEST_NAME} in {Path(out_dir)}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        raw["seeds"] = tuple(raw.get("seeds", ()))
        raw["artifacts"] = tuple(raw.get("artifacts", ()))
        return cls(**raw)
