"""Reproducibility block written next to every output."""
import json
import hashlib
import datetime
from dataclasses import dataclass, field, asdict
from pathlib import Path

from utils.errors import OverwriteRefusedError

TOOL_VERSION = "1.0.0"
MANIFEST_NAME = "manifest.json"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def digest(obj):
    """sha1 of the canonical JSON form; independent of dict order and platform."""
    return hashlib.sha1(canonical_json(obj).encode("utf-8")).hexdigest()


def file_digest(path):
    h = hashlib.sha1()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    params_digest: str = ""
    protocol_digest: str = ""
    designs: list = field(default_factory=list)
    master_seed: int = 0
    tool_version: str = TOOL_VERSION
    started_at: str = field(default_factory=now)
    finished_at: str = ""
    argv: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def add_output(self, path):
        self.outputs[Path(path).name] = file_digest(path)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=False) + "\n"

    def write(self, out_dir, force=False):
        self.finished_at = now()
        path = Path(out_dir) / MANIFEST_NAME
        if path.exists() and not force:
            raise OverwriteRefusedError(f"refusing to overwrite {path} (use --force)")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path
