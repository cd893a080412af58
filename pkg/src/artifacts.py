"""
Output files for commands: atomic writes (temp file + rename), content hashes
and the RunManifest that records how a set of outputs was produced.
"""
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from src.exceptions import FileSystemError

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write `data` to a sibling temp file and rename it over `path`."""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as e:
        raise FileSystemError("write", str(target), e.strerror or str(e))
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: PathLike, doc: Any) -> Path:
    return atomic_write_text(path, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def atomic_write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as e:
        raise FileSystemError("read", str(path), e.strerror or str(e))
    return digest.hexdigest()


def manifest_path(output: PathLike) -> Path:
    """`trace.csi` -> `trace.csi.manifest.json`; a directory gets `run.manifest.json` inside."""
    p = Path(output)
    return p / "run.manifest.json" if p.is_dir() else p.with_name(p.name + ".manifest.json")


@dataclass
class RunManifest:
    command: str
    tool_version: str
    seed: Optional[int] = None
    config_path: Optional[str] = None
    config_sha256: Optional[str] = None
    inputs: Dict[str, str] = field(default_factory=dict)       # path -> sha256
    outputs: List[str] = field(default_factory=list)
    wall_time_s: float = 0.0

    def add_input(self, path: PathLike) -> None:
        self.inputs[str(path)] = sha256_file(path)
        self.inputs = dict(sorted(self.inputs.items()))

    def set_config(self, path: PathLike) -> None:
        self.config_path = str(path)
        self.config_sha256 = sha256_file(path)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write(self, path: PathLike) -> Path:
        return atomic_write_json(path, self.to_dict())
