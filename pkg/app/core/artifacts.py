import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from pydantic import BaseModel

from app.core.errors import ArtifactError

logger = logging.getLogger(__name__)

CSV_FORMAT = "%.17g"
FROZEN_CONFIG = "config.frozen.json"


def prepare_out_dir(path: Path | str) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactError(detail=f"cannot create output directory {path}: {exc}")
    return path


def _default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def canonical_json(payload: Any) -> str:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, indent=2, default=_default)


def write_json(path: Path, payload: Any) -> Path:
    try:
        Path(path).write_text(canonical_json(payload) + "\n")
    except OSError as exc:
        raise ArtifactError(detail=f"cannot write {path}: {exc}")
    logger.debug("wrote %s", path)
    return Path(path)


def read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ArtifactError(detail=f"missing artifact {path}")
    except json.JSONDecodeError as exc:
        raise ArtifactError(detail=f"malformed JSON in {path}: {exc}")


def write_csv(path: Path, columns: Sequence[str], rows: np.ndarray | Iterable[Sequence[float]]) -> Path:
    """Header row plus `%.17g` values, so a re-read reproduces every float exactly."""
    data = np.atleast_2d(np.asarray(rows, dtype=float))
    if data.size and data.shape[1] != len(columns):
        raise ArtifactError(detail=f"{path}: {data.shape[1]} value(s) per row but {len(columns)} column(s)")
    try:
        np.savetxt(path, data.reshape(-1, len(columns)), fmt=CSV_FORMAT, delimiter=",", header=",".join(columns), comments="")
    except OSError as exc:
        raise ArtifactError(detail=f"cannot write {path}: {exc}")
    logger.debug("wrote %s (%d rows)", path, data.shape[0] if data.size else 0)
    return Path(path)


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path) as handle:
            columns = handle.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except FileNotFoundError:
        raise ArtifactError(detail=f"missing artifact {path}")
    except ValueError as exc:
        raise ArtifactError(detail=f"malformed CSV in {path}: {exc}")
    return columns, data


def freeze_config(config: BaseModel, out_dir: Path) -> str:
    """Write the validated config beside the outputs and return its sha256."""
    text = canonical_json(config)
    write_json(Path(out_dir) / FROZEN_CONFIG, config)
    return hashlib.sha256(text.encode()).hexdigest()


def snapshot_files(directory: Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ArtifactError(detail=f"snapshot directory {directory} does not exist")
    files = sorted(directory.glob("snap_*.kgm"))
    if not files:
        raise ArtifactError(detail=f"no snapshots in {directory}")
    return files
