"""JSON manifests with file checksums."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path


class ManifestError(ValueError):
    pass


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def file_entry(path: str | Path) -> dict:
    return {"sha256": sha256_of(path), "bytes": Path(path).stat().st_size}


def _clean(obj):
    # NaN/inf are not JSON; they become null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc.msg})") from None


def load_dataset_manifest(path: str | Path, verify: bool = True) -> dict:
    """Read a dataset manifest; with ``verify`` every listed file's checksum is rechecked."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    m = read_json(path)
    if m.get("format") != "scratchsense-dataset":
        raise ManifestError(f"{path}: not a dataset manifest")
    for key in ("nights", "files", "participants", "config"):
        if key not in m:
            raise ManifestError(f"{path}: missing '{key}'")
    if verify:
        root = path.parent
        for rel, entry in m["files"].items():
            f = root / rel
            if not f.exists():
                raise ManifestError(f"{rel}: listed in manifest but missing")
            if sha256_of(f) != entry["sha256"]:
                raise ManifestError(f"{rel}: checksum does not match manifest")
    m["_root"] = str(path.parent)
    return m
