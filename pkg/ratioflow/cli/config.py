import glob
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
)

from ..config import (
    EstimatorOptions,
    ScheduleOptions,
    SessionClock,
    config_hash,
    env_int,
    load_config_file,
)
from ..errors import InputFormatError, ModelNotFoundError
from ..features.catalog import resolve_models
from ..features.descriptors import ModelSpec, load_model_spec


DEFAULT_INSTRUMENT = "instrument"


class RunConfig(BaseModel):
    """
    Resolved configuration of one CLI run.

    `inputs` maps an instrument id to the paths or glob patterns of its
    event files; a plain list stands for a single instrument named
    `instrument`.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    instrument: str = DEFAULT_INSTRUMENT
    inputs: Dict[str, List[str]] = Field(default_factory=dict)
    clock: SessionClock = SessionClock()
    tick_size: float = Field(1.0, gt=0)
    models: List[str] = Field(default_factory=lambda: ["imb1"])
    model_files: List[str] = Field(default_factory=list)
    estimator: EstimatorOptions = EstimatorOptions()
    schedule: ScheduleOptions = ScheduleOptions()
    out: str = "out"
    seed: int = Field(0, ge=0, lt=2**64)
    jobs: int = Field(1, ge=1)
    simulation: Optional[Dict[str, Any]] = None

    @field_validator("inputs", mode="before")
    @classmethod
    def _inputs_as_mapping(cls, v, info):
        if isinstance(v, (str, Path)):
            v = [str(v)]
        if isinstance(v, (list, tuple)):
            name = info.data.get("instrument", DEFAULT_INSTRUMENT)
            return {name: [str(p) for p in v]}
        return v

    @property
    def hash(self) -> str:
        return config_hash(self)

    def input_paths(self) -> Dict[str, List[Path]]:
        """
        Expand the glob patterns of every instrument, sorted, in instrument
        order.

        Raises:
            InputFormatError: If a pattern matches nothing.
        """
        out: Dict[str, List[Path]] = {}
        for instrument in sorted(self.inputs):
            paths: List[Path] = []
            for pattern in self.inputs[instrument]:
                matches = sorted(glob.glob(pattern))
                if not matches:
                    raise InputFormatError(f"No file matches {pattern!r}.")
                paths.extend(Path(m) for m in matches)
            out[instrument] = paths
        return out

    def specs(self, include_lday: bool = True) -> List[ModelSpec]:
        """
        Catalog models named in `models` followed by the specs loaded from
        `model_files`.

        Raises:
            ModelNotFoundError: For an unknown model name.
            InputFormatError: For an unreadable spec file.
        """
        names = [m for m in self.models if m]
        specs = resolve_models(names, include_lday=include_lday) \
            if names else []
        seen = {s.name for s in specs}
        for path in self.model_files:
            try:
                spec = load_model_spec(path)
            except (OSError, ValueError) as exc:
                raise InputFormatError(str(exc), path=path)
            if spec.name not in seen:
                seen.add(spec.name)
                specs.append(spec)
        if not specs:
            raise ModelNotFoundError("No model selected.")
        return specs

    def out_dir(self) -> Path:
        """The output directory, created if needed."""
        path = Path(self.out)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputFormatError(f"Output directory not writable: {exc}",
                                   path=path)
        return path


# Sections merged key by key; every other key is replaced whole.
SECTIONS = ("clock", "estimator", "schedule", "simulation")


def _merge(base: Dict[str, Any], top: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in top.items():
        if key in SECTIONS and isinstance(value, dict) and \
                isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def env_defaults() -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    jobs = env_int("RATIOFLOW_JOBS")
    if jobs is not None:
        out["jobs"] = jobs
    seed = env_int("RATIOFLOW_SEED")
    if seed is not None:
        out["seed"] = seed
    return out


def resolve_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Build the run configuration. Precedence, highest first: `overrides`
    (CLI flags), the config file, RATIOFLOW_* environment variables,
    built-in defaults. The nested SECTIONS merge key by key.

    Args:
        path (str | Path, optional): YAML, JSON or TOML config file.
        overrides (dict, optional): Values given on the command line; None
            values are ignored.

    Raises:
        InputFormatError: If the file cannot be read or the result does not
            validate.
    """
    data = env_defaults()
    if path is not None:
        data = _merge(data, load_config_file(path))
    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items()
                             if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise InputFormatError(f"Invalid configuration: {exc}", path=path)
