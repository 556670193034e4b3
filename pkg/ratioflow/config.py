import os
import hashlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import orjson
import yaml  # type: ignore
from dotenv import load_dotenv  # type: ignore
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import InputFormatError


load_dotenv()


DEFAULT_L_VALUES = [1, 2, 3, 5, 7, 10, 14, 30, 60]


def env_int(name: str, default: Optional[int] = None) -> Optional[int]:
    """Integer environment variable, `default` when unset or empty."""
    value = os.getenv(name)
    if (value is None) or (value == ""):
        return default
    return int(value)


class SessionClock(BaseModel):
    """
    Continuous-trading window applied to every session, in nanoseconds
    since session open. Events outside the window still update the book,
    market orders outside it are not observations.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    open_ns: int = 0
    close_ns: Optional[int] = None

    @field_validator("close_ns")
    @classmethod
    def _close_after_open(cls, v, info):
        if v is not None and v <= info.data.get("open_ns", 0):
            raise ValueError("close_ns must be greater than open_ns.")
        return v

    def contains(self, timestamp: int) -> bool:
        if timestamp < self.open_ns:
            return False
        return self.close_ns is None or timestamp <= self.close_ns

    @property
    def close_or_max(self) -> int:
        return self.close_ns if self.close_ns is not None else 2**62


class EstimatorOptions(BaseModel):
    """Options of the quasi-maximum likelihood fit."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    tolerance: float = Field(1e-8, gt=0)
    max_iter: int = Field(100, ge=1)
    max_halvings: int = Field(30, ge=0)
    box_radius: float = Field(50.0, gt=0)
    ridge: float = Field(0.0, ge=0)
    partitions: int = Field(1, ge=1)
    threads: int = Field(1, ge=1)


class ScheduleOptions(BaseModel):
    """Options of the rolling calibrate-then-predict experiments."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lookback_days: Optional[int] = Field(None, ge=1)
    l_values: List[int] = Field(default_factory=lambda: list(DEFAULT_L_VALUES))
    shared_mask: bool = False
    audit: bool = False
    dump_predictions: bool = False


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load a YAML, JSON or TOML configuration file into a dict.

    Raises:
        InputFormatError: If the extension is unknown or parsing fails.
    """
    path = Path(path)
    ext = path.suffix.lower()
    try:
        raw = path.read_bytes()
        if ext in (".yaml", ".yml"):
            data = yaml.safe_load(raw)
        elif ext == ".json":
            data = orjson.loads(raw)
        elif ext == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            raise InputFormatError(f"Unsupported config type {ext!r}.",
                                   path=path)
    except (OSError, yaml.YAMLError, orjson.JSONDecodeError,
            tomllib.TOMLDecodeError) as exc:
        raise InputFormatError(str(exc), path=path)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InputFormatError("Top level must be a mapping.", path=path)
    return data


def canonical_json(data: Any) -> bytes:
    return orjson.dumps(
        data, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
    )


def config_hash(data: Any) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON form."""
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    return hashlib.sha256(canonical_json(data)).hexdigest()[:16]
