"""ARD dataset bundle, ground-truth ledger, and their on-disk formats.

A dataset named ``<prefix>`` lives in three files:

* ``<prefix>.ard.csv``   headerless integer matrix, one row per respondent
* ``<prefix>.meta.json`` ``{"population_n": N, "subpops": [{"name", "known_size"?}]}``
* ``<prefix>.truth.json`` simulator ground truth (never read by fitting code)
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import gammaln


class DataValidationError(ValueError):
    """Raised when a dataset or fit request fails validation."""


@dataclass(frozen=True)
class SubpopMeta:
    name: str
    known_size: int | None = None

    @property
    def known(self) -> bool:
        return self.known_size is not None


@dataclass(frozen=True)
class ArdDataset:
    """An ``n x K`` matrix of ARD counts plus subpopulation metadata."""

    y: np.ndarray
    subpops: tuple
    population_n: int

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 2:
            raise DataValidationError(f"ARD matrix must be 2-D, got shape {y.shape}")
        if y.dtype.kind == "f":
            if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
                raise DataValidationError("ARD counts must be finite integers")
        elif y.dtype.kind not in "iu":
            raise DataValidationError(f"ARD counts must be integers, got dtype {y.dtype}")
        if np.any(y < 0):
            raise DataValidationError("ARD counts must be non-negative")
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        subpops = tuple(s if isinstance(s, SubpopMeta) else SubpopMeta(**s) for s in self.subpops)
        object.__setattr__(self, "subpops", subpops)
        N = self.population_n
        if int(N) != N or N <= 0:
            raise DataValidationError("population_n must be a positive integer")
        object.__setattr__(self, "population_n", int(N))
        if len(subpops) != y.shape[1]:
            raise DataValidationError(
                f"dimension mismatch: {y.shape[1]} count columns but {len(subpops)} subpopulations"
            )
        sizes = [s.known_size for s in subpops if s.known]
        if not sizes:
            raise DataValidationError("at least one subpopulation must have a known size")
        for s in subpops:
            if s.known and not (0 < s.known_size < N):
                raise DataValidationError(
                    f"known size of {s.name!r} must lie in (0, N), got {s.known_size}"
                )
        if sum(sizes) >= N:
            raise DataValidationError("sum of known subpopulation sizes must be below population_n")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def K(self) -> int:
        return self.y.shape[1]

    @property
    def known_idx(self) -> np.ndarray:
        return np.array([k for k, s in enumerate(self.subpops) if s.known], dtype=int)

    @property
    def known_sizes(self) -> np.ndarray:
        return np.array([s.known_size for s in self.subpops if s.known], dtype=float)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.subpops]

    @cached_property
    def log_factorial(self) -> np.ndarray:
        return gammaln(self.y + 1.0)

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(format_ard_csv(self.y).encode())
        h.update(json.dumps(meta_dict(self), sort_keys=True).encode())
        return h.hexdigest()[:16]


@dataclass
class GroundTruth:
    """Simulator-side values the fitted models try to recover."""

    degrees: np.ndarray
    subpop_sizes: np.ndarray
    generator_params: dict = field(default_factory=dict)

    def check_against(self, data: ArdDataset):
        if len(self.degrees) != data.n or len(self.subpop_sizes) != data.K:
            raise DataValidationError("ground truth does not match dataset dimensions")


# ---------------------------------------------------------------------------
# file formats


def format_ard_csv(y) -> str:
    buf = io.StringIO()
    for row in np.asarray(y, dtype=np.int64):
        buf.write(",".join(str(int(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def parse_ard_csv(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            vals = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise DataValidationError(f"line {lineno}: non-numeric count") from exc
        rows.append(vals)
    if not rows:
        raise DataValidationError("ARD file contains no rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataValidationError("ARD rows have differing numbers of columns")
    y = np.array(rows)
    if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
        raise DataValidationError("ARD counts must be integers")
    if np.any(y < 0):
        raise DataValidationError("ARD counts must be non-negative")
    return y.astype(np.int64)


def meta_dict(data: ArdDataset) -> dict:
    subpops = []
    for s in data.subpops:
        entry = {"name": s.name}
        if s.known:
            entry["known_size"] = int(s.known_size)
        subpops.append(entry)
    return {"population_n": data.population_n, "subpops": subpops}


def load_dataset(ard_path, meta_path) -> ArdDataset:
    """Read and validate a dataset from its CSV and JSON sidecar."""
    y = parse_ard_csv(Path(ard_path).read_text())
    meta = json.loads(Path(meta_path).read_text())
    if "population_n" not in meta or "subpops" not in meta:
        raise DataValidationError("meta file needs 'population_n' and 'subpops'")
    subpops = []
    for s in meta["subpops"]:
        unknown = set(s) - {"name", "known_size"}
        if unknown:
            raise DataValidationError(f"unexpected subpopulation fields: {sorted(unknown)}")
        subpops.append(SubpopMeta(name=str(s["name"]), known_size=s.get("known_size")))
    return ArdDataset(y=y, subpops=tuple(subpops), population_n=meta["population_n"])


def dataset_paths(prefix) -> tuple[Path, Path, Path]:
    prefix = str(prefix)
    return Path(prefix + ".ard.csv"), Path(prefix + ".meta.json"), Path(prefix + ".truth.json")


def load_prefix(prefix) -> ArdDataset:
    ard, meta, _ = dataset_paths(prefix)
    return load_dataset(ard, meta)


def save_dataset(data: ArdDataset, prefix) -> None:
    ard, meta, _ = dataset_paths(prefix)
    ard.parent.mkdir(parents=True, exist_ok=True)
    with open(ard, "w", newline="\n") as fh:
        fh.write(format_ard_csv(data.y))
    meta.write_text(json.dumps(meta_dict(data), indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def save_truth(truth: GroundTruth, prefix, extra: dict | None = None) -> None:
    """Write the truth ledger. Population-wide arrays (key ``population``) stay in memory."""
    _, _, path = dataset_paths(prefix)
    params = {k: v for k, v in truth.generator_params.items() if k != "population"}
    doc = {
        "degrees": _jsonable(truth.degrees),
        "subpop_sizes": _jsonable(truth.subpop_sizes),
        "generator_params": _jsonable(params),
    }
    if extra:
        doc.update(_jsonable(extra))
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_truth(path) -> GroundTruth:
    doc = json.loads(Path(path).read_text())
    return GroundTruth(
        degrees=np.asarray(doc["degrees"]),
        subpop_sizes=np.asarray(doc["subpop_sizes"]),
        generator_params=doc.get("generator_params", {}),
    )


# ---------------------------------------------------------------------------
# model-specific requirements

MODEL_KINDS = ("er", "vd", "od", "latent", "barrier")


def validate_fit_inputs(data: ArdDataset, model_kind: str, *, n_fixed: int = 4, max_degree: int | None = None):
    """Check the requirements a particular model places on the data.

    Raises :class:`DataValidationError` describing the first unmet requirement.
    """
    if model_kind not in MODEL_KINDS:
        raise DataValidationError(f"unknown model {model_kind!r}; choose from {MODEL_KINDS}")
    if model_kind == "latent":
        n_known = len(data.known_idx)
        if n_known < n_fixed:
            raise DataValidationError(
                f"latent-space model anchors {n_fixed} subpopulation centers but only "
                f"{n_known} subpopulations have known sizes"
            )
    if model_kind == "barrier" and max_degree is not None:
        worst = int(data.y.max())
        if worst > max_degree:
            i, k = np.unravel_index(int(np.argmax(data.y)), data.y.shape)
            raise DataValidationError(
                f"count y[{i},{k}] = {worst} exceeds the barrier model's max degree cap {max_degree}"
            )
