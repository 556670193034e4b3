import subprocess
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Union

import orjson
import pandas as pd

from . import __version__
from .log import logger


JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | \
    orjson.OPT_SERIALIZE_NUMPY


@lru_cache(maxsize=1)
def version_string() -> str:
    """
    `git describe` of the source tree, or the package version when the
    package does not run from a checkout.
    """
    root = Path(__file__).resolve().parent.parent
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=root, capture_output=True, text=True, timeout=5, check=True,
        )
        described = out.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError) as exc:
        logger.debug(f"git describe unavailable: {exc}")
    return f"v{__version__}"


@dataclass(frozen=True)
class Provenance:
    """What every output file carries: code version and config hash."""
    version: str
    config_hash: str

    @classmethod
    def for_hash(cls, config_hash: str) -> "Provenance":
        return cls(version=version_string(), config_hash=config_hash)

    def as_dict(self) -> Dict[str, str]:
        return {"version": self.version, "config_hash": self.config_hash}

    def comment(self) -> str:
        return f"# ratioflow {self.version} config {self.config_hash}\n"


def write_json(path: Union[str, Path], payload: Dict[str, Any],
               provenance: Provenance):
    """Sorted-key JSON with the provenance fields at top level."""
    data = dict(payload)
    data.update(provenance.as_dict())
    Path(path).write_bytes(orjson.dumps(data, option=JSON_OPTIONS) + b"\n")


def write_csv(path: Union[str, Path], frame: pd.DataFrame,
              provenance: Provenance):
    """CSV preceded by a `#` provenance line; read back with `read_csv`."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(provenance.comment())
        frame.to_csv(f, index=False, float_format="%.10g", lineterminator="\n")


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    return orjson.loads(Path(path).read_bytes())


def collect_outputs(out_dir: Union[str, Path]) -> Dict[str, Any]:
    """
    Gather the fit, criteria, selection and accuracy outputs found under a
    run directory into one summary.

    Returns:
        dict: Keys "fits", "criteria", "selection", "accuracy", each
            present only when matching files exist, and "config_hashes",
            the distinct hashes seen.
    """
    out_dir = Path(out_dir)
    summary: Dict[str, Any] = {}
    hashes = set()

    fits = []
    for path in sorted(out_dir.glob("fits/**/*.json")):
        data = read_json(path)
        hashes.add(data.get("config_hash"))
        fit = data.get("fit", data)
        fits.append({
            "instrument": data.get("instrument", ""),
            "window": data.get("window"),
            "model": fit["model"],
            "d": fit["d"],
            "T": fit["T"],
            "objective": fit["objective"],
            "converged": fit["converged"],
            "boundary_hit": fit["boundary_hit"],
        })
    if fits:
        summary["fits"] = fits

    for key, name in (("criteria", "criteria.csv"),
                      ("accuracy", "accuracy.csv")):
        path = out_dir / name
        if path.exists():
            with open(path, encoding="utf-8") as f:
                first = f.readline().split()
            if len(first) >= 5 and first[0] == "#":
                hashes.add(first[4])
            summary[key] = read_csv(path).to_dict(orient="records")

    path = out_dir / "selection.json"
    if path.exists():
        data = read_json(path)
        hashes.add(data.get("config_hash"))
        summary["selection"] = data.get("counts", {})

    hashes.discard(None)
    summary["config_hashes"] = sorted(hashes)
    return summary

