"""Artifact writing and input loading for the runner and the CLI."""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from backend.models.schemas import MatrixPayload, PairPayload
from backend.services.errors import ConfigError, SteinLabError
from backend.services.info_spectrum import DistributionPair
from backend.services.operator_algebra import DensityOperator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _jsonable(value: Any) -> Any:
    """numpy scalars/arrays to plain JSON; non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return repr(value)
        return value
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def dumps(document: Any) -> str:
    return json.dumps(_jsonable(document), indent=2, sort_keys=True)


def dumps_line(document: Any) -> str:
    return json.dumps(_jsonable(document), sort_keys=True)


def config_hash(document: Dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(_jsonable(document), sort_keys=True).encode("utf-8")).hexdigest()


# ============================================================================
# WRITERS
# ============================================================================

def format_csv(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    """Rows in a fixed column order; floats written with 17 significant digits."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def save_csv(rows: Sequence[Dict[str, Any]], path: PathLike, columns: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_csv(rows, columns), encoding="utf-8")
    logger.info("wrote %d rows to %s", len(rows), path)
    return path


def save_json(document: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(document) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def dump_witnesses(name: str, witnesses: List[dict], directory: PathLike) -> Path:
    """Store failing stress-test instances as matrices in the exchange format."""
    entries = []
    for witness in witnesses:
        entry = {}
        for key, value in witness.items():
            entry[key] = MatrixPayload.from_array(value).model_dump() if isinstance(value, np.ndarray) else value
        entries.append(entry)
    return save_json({"check": name, "witnesses": entries}, Path(directory) / f"witness-{name}.json")


# ============================================================================
# LOADERS
# ============================================================================

def load_json(path: PathLike, operation: str = "load_json") -> Any:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(operation, f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(operation, f"{path} is not valid JSON: {exc}") from exc


def load_density(source: Union[PathLike, Dict[str, Any], MatrixPayload]) -> DensityOperator:
    """A density operator from a file path, an inline payload dict or a MatrixPayload."""
    if isinstance(source, MatrixPayload):
        payload = source
    else:
        raw = source if isinstance(source, dict) else load_json(source, "load_density")
        try:
            payload = MatrixPayload.model_validate(raw)
        except ValidationError as exc:
            raise ConfigError("load_density", str(exc)) from exc
    try:
        return DensityOperator.from_matrix(payload.to_array())
    except SteinLabError as exc:
        raise ConfigError("load_density", str(exc)) from exc


def load_pairs(source: Union[PathLike, List[Dict[str, Any]]]) -> List[DistributionPair]:
    """JSON list of {n, p, q} into distribution pairs, in file order."""
    raw = source if isinstance(source, list) else load_json(source, "load_pairs")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("load_pairs", "expected a non-empty JSON list of {n, p, q}")
    pairs = []
    for i, item in enumerate(raw):
        try:
            payload = PairPayload.model_validate(item)
            pairs.append(DistributionPair(np.array(payload.p), np.array(payload.q), payload.n))
        except ValidationError as exc:
            raise ConfigError("load_pairs", f"entry {i}: {exc}") from exc
        except SteinLabError as exc:
            raise ConfigError("load_pairs", f"entry {i}: {exc}") from exc
    return pairs
