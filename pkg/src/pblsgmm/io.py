"""Long-format dataset files, deterministic JSON and the run configuration.

Dataset file: one header row ``id,time,y,z[,covariate...]`` then one row per
measurement occasion. Empty ``y``/``z`` cells are missing outcomes. Times must
increase strictly within an id and covariates must be constant within an id.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import IngestionError, InvalidInputError
from .mixture import Individual
from .spline import Schedule

HEADER = ("id", "time", "y", "z")


def _parse_id(raw: str):
    try:
        v = int(raw)
    except ValueError:
        return raw
    return v if str(v) == raw else raw


def _num(cell: str, what: str, ident, line: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise IngestionError(f"non-numeric {what} {cell!r}", ident, line) from None
    if not math.isfinite(v):
        raise IngestionError(f"non-finite {what}", ident, line)
    return v


def ingest(path, covariates=None) -> list:
    """Read a long-format CSV into Individuals (file order of first appearance)."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError("empty file", line=1) from None
        if tuple(header[:4]) != HEADER:
            raise IngestionError(f"header must start with {','.join(HEADER)}", line=1)
        extra = header[4:]
        if covariates is None:
            covariates = extra
        missing = [c for c in covariates if c not in extra]
        if missing:
            raise IngestionError(f"covariate columns not found: {missing}", line=1)
        cidx = [4 + extra.index(c) for c in covariates]

        groups = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"expected {len(header)} fields, got {len(row)}", line=line)
            ident = _parse_id(row[0].strip())
            t = _num(row[1], "time", ident, line)
            vals = []
            for cell, name in zip(row[2:4], "yz"):
                cell = cell.strip()
                vals.append(np.nan if cell == "" else _num(cell, name, ident, line))
            if all(np.isnan(vals)):
                raise IngestionError("row has no observed outcome", ident, line)
            x = tuple(_num(row[j], f"covariate {header[j]}", ident, line) for j in cidx)
            g = groups.setdefault(ident, {"t": [], "v": [], "x": x, "line": line})
            if g["t"] and t <= g["t"][-1]:
                raise IngestionError(f"time {t!r} does not increase (previous {g['t'][-1]!r})", ident, line)
            if x != g["x"]:
                raise IngestionError("covariates differ from the first row of this id", ident, line)
            g["t"].append(t)
            g["v"].append(vals)
    if not groups:
        raise IngestionError("no data rows", line=2)
    out = []
    for ident, g in groups.items():
        values = np.array(g["v"], dtype=float)
        out.append(Individual(ident, Schedule(np.array(g["t"]), np.isfinite(values)), values, np.array(g["x"])))
    return out


def _cell(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


def export(individuals, path, covariate_names=None) -> Path:
    """Write Individuals as a long-format CSV (shortest round-trip float repr)."""
    path = Path(path)
    individuals = list(individuals)
    p = individuals[0].x.size if individuals else 0
    names = list(covariate_names) if covariate_names is not None else [f"x{j + 1}" for j in range(p)]
    if len(names) != p:
        raise InvalidInputError("covariate name count does not match the data")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(HEADER) + names)
        for ind in individuals:
            vals = ind.values
            if vals.shape[1] == 1:
                vals = np.column_stack([vals, np.full(len(vals), np.nan)])
            xs = [repr(float(v)) for v in ind.x]
            for j, t in enumerate(ind.times):
                if not np.any(np.isfinite(vals[j])):
                    continue
                w.writerow([ind.id, repr(float(t)), _cell(vals[j, 0]), _cell(vals[j, 1])] + xs)
    return path


# -- JSON ----------------------------------------------------------------------

def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    """Byte-deterministic JSON: sorted keys, fixed indentation, NaN as null."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def write_csv(df, path) -> Path:
    path = Path(path)
    df.to_csv(path, index=False, lineterminator="\n", na_rep="")
    return path


# -- run configuration ---------------------------------------------------------

COMMANDS = ("fit", "enumerate", "simulate", "generate", "compare", "kappa")
WORKERS_ENV = "PBLSGMM_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


@dataclass
class RunConfig:
    command: str
    output: str = "out"
    data: str = None
    K: int = 2
    Kmax: int = 3
    outcomes: list = field(default_factory=lambda: ["y", "z"])
    covariates: list = None
    # FitConfig
    max_restarts: int = 10
    gtol: float = 1e-5
    ftol: float = 1e-10
    fd_step: float = 1e-5
    hessian_step: float = 1e-4
    knot_margin: float = 0.5
    max_iter: int = 1000
    compute_se: bool = True
    # SimulationCondition
    scenario: int = 1
    separation: float = 1.0
    beta0: float = 0.0
    resid_var: float = 1.0
    rho: float = -0.3
    n: int = 500
    assignment_mode: str = "multinomial"
    S: int = 100
    # kappa
    labels: list = None
    seed: int = 0
    workers: int = None

    _TYPES = {
        "command": str, "output": str, "data": str, "K": int, "Kmax": int, "outcomes": list,
        "covariates": list, "max_restarts": int, "gtol": float, "ftol": float, "fd_step": float,
        "hessian_step": float, "knot_margin": float, "max_iter": int, "compute_se": bool,
        "scenario": int, "separation": float, "beta0": float, "resid_var": float, "rho": float,
        "n": int, "assignment_mode": str, "S": int, "labels": list, "seed": int, "workers": int,
    }

    def __post_init__(self):
        self.validate()

    @classmethod
    def keys(cls) -> list:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = sorted(set(d) - set(cls.keys()))
        if unknown:
            raise InvalidInputError(f"unknown config keys: {unknown}")
        if "command" not in d:
            raise InvalidInputError("config needs a 'command'")
        return cls(**d)

    @classmethod
    def load(cls, path, overrides=None) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise InvalidInputError("config file must hold a JSON object")
        d.update(overrides or {})
        return cls.from_dict(d)

    def validate(self):
        for name, typ in self._TYPES.items():
            v = getattr(self, name)
            if v is None and name in ("data", "covariates", "labels", "workers"):
                continue
            if typ is float and isinstance(v, int) and not isinstance(v, bool):
                setattr(self, name, float(v))
                continue
            if typ is int and isinstance(v, bool) or not isinstance(v, typ):
                raise InvalidInputError(f"config field {name!r} must be {typ.__name__}, got {v!r}")
        if self.command not in COMMANDS:
            raise InvalidInputError(f"command must be one of {COMMANDS}")
        if not self.outcomes or not set(self.outcomes) <= {"y", "z"} or len(set(self.outcomes)) != len(self.outcomes):
            raise InvalidInputError("outcomes must be a non-empty subset of ['y', 'z']")
        if self.K < 1 or self.Kmax < 1 or self.S < 1 or self.n < 1:
            raise InvalidInputError("K, Kmax, S and n must be positive")
        if self.workers is not None and self.workers < 1:
            raise InvalidInputError("workers must be positive")
        if self.command in ("fit", "enumerate") and not self.data:
            raise InvalidInputError(f"'{self.command}' needs a data file")
        if self.command == "kappa" and (not self.labels or len(self.labels) != 2):
            raise InvalidInputError("'kappa' needs two label files")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.keys()}

    def fit_config(self):
        from .estimation.fit import FitConfig

        return FitConfig(
            max_restarts=self.max_restarts, gtol=self.gtol, ftol=self.ftol, fd_step=self.fd_step,
            hessian_step=self.hessian_step, knot_margin=self.knot_margin, max_iter=self.max_iter,
            seed=self.seed, compute_se=self.compute_se,
        )

    def condition(self):
        from .simulation.design import build_condition

        return build_condition(self.scenario, self.separation, self.beta0, self.resid_var, self.rho, n=self.n)

    def n_workers(self) -> int:
        return self.workers if self.workers is not None else default_workers()
