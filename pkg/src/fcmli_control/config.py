"""YAML configuration files and stable configuration hashes"""

from __future__ import annotations

import hashlib
import json
import typing as ty
from pathlib import Path

import pydantic
import yaml

ModelT = ty.TypeVar("ModelT", bound=pydantic.BaseModel)


def load_config(path: str | Path, model: type[ModelT]) -> ModelT:
    """Load a YAML file and validate it into ``model``

    Raises
    ------
    pydantic.ValidationError
        If the file content does not validate
    OSError
        If the file cannot be read
    """
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text)
    return model.model_validate({} if data is None else data)


def dump_yaml(
    data: pydantic.BaseModel | ty.Mapping[str, ty.Any], path: str | Path
) -> Path:
    """Write a model (JSON mode) or a plain mapping as YAML"""
    if isinstance(data, pydantic.BaseModel):
        data = data.model_dump(mode="json")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(dict(data), sort_keys=False), encoding="utf-8")
    return path


def read_yaml(path: str | Path) -> dict[str, ty.Any]:
    """Read a YAML mapping"""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    return {} if data is None else dict(data)


def config_hash(data: pydantic.BaseModel | ty.Mapping[str, ty.Any]) -> str:
    """SHA-256 of the canonical JSON dump of a configuration

    Keys are sorted and floats use their shortest round-trip repr, so equal
    configurations hash equally across processes.
    """
    if isinstance(data, pydantic.BaseModel):
        data = data.model_dump(mode="json")
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
