"""Monte Carlo experiment grids with incremental CSV/JSON persistence and replay.

A config is one JSON document; each grid cell is (scale(s), intensity or
sample size). Replication ``r`` of cell ``c`` draws from the seed block
(master_seed, c, r), so any cell can be recomputed bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .distances import fit_rate, kolmogorov_distance, multivariate_diag, wasserstein1_distance
from .frame import NeedletFrame, build_frame
from .moments import (
    bound_quadratic,
    compute_moments,
    u1_linear_bound,
)
from .point_process import sample_coupled, sample_poisson_field
from .special import gegenbauer_at_one, harmonic_dim
from .sphere import Density, perturbed_density, surface_measure, uniform_density
from .ustatistics import (
    StatisticSpec,
    coupled_u_pair,
    jupp_statistic,
    u1_raw,
    u1_standardize,
    u2_raw,
    u2_standardize,
)

__all__ = [
    "CSV_COLUMNS",
    "CellError",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "ReplayMismatch",
    "antipodal_centers",
    "equatorial_center",
    "export_report",
    "load_config",
    "load_preset",
    "preset_names",
    "read_report",
    "replay_cell",
    "run_experiment",
]

OUTDIR_ENV = "NEEDLET_USTATS_OUTDIR"
FAMILIES = ("U1", "U2", "U2-vector", "U1-vector", "Jupp", "depoissonize")
CSV_COLUMNS = ["cell", "family", "j", "R_t", "n", "M", "mean", "var", "d_K", "W1", "bound",
               "max_offdiag", "reject_rate", "depois_stat", "master_seed", "cell_index"]
Z95_ONE_SIDED = 1.6448536269514722
Z975 = 1.959963984540054


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class CellError(RuntimeError):
    """A grid cell failed; wraps the original error with the cell context."""


class ReplayMismatch(RuntimeError):
    """A replayed cell differs from its stored values."""


PRESET_DIR = Path(__file__).with_name("presets")


def preset_names() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def load_preset(name: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = PRESET_DIR / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return load_config(path, overrides)


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "results"))


@dataclass
class ExperimentConfig:
    family: str
    q: int = 2
    B: float = 2.0
    u: int = 2
    scales: list = field(default_factory=lambda: [2])
    intensities: list = field(default_factory=list)
    sample_sizes: list = field(default_factory=list)
    replications: int = 2000
    density: dict = field(default_factory=lambda: {"kind": "uniform"})
    centers: object = "equatorial"
    statistic: str = "U2"
    jupp_weights: list = field(default_factory=list)
    paired_schedule: bool = False
    rate_mode: bool = False
    master_seed: int = 0
    output: Optional[str] = None
    workers: int = 1

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.B <= 1 or self.q < 1 or self.u < 2 or self.replications < 1:
            raise ConfigError("need B > 1, q >= 1, u >= 2 and at least one replication")
        grid = self.sample_sizes if self.family == "depoissonize" else self.intensities
        if not grid or not self.scales:
            raise ConfigError("empty grid: give scales and intensities (or sample_sizes)")
        if any(v <= 0 for v in grid) or any(j < 0 for j in self.scales):
            raise ConfigError("grid values must be positive")
        if self.family in ("U2-vector",):
            js = sorted(self.scales)
            if any(b - a < 2 for a, b in zip(js, js[1:])):
                raise ConfigError("U2-vector scales must satisfy |j - j'| >= 2")
        if self.family == "Jupp" and not self.jupp_weights:
            raise ConfigError("Jupp family needs jupp_weights")
        if self.family == "depoissonize" and self.statistic not in ("U1", "U2"):
            raise ConfigError("depoissonize statistic must be U1 or U2")
        if self.paired_schedule and len(self.scales) != len(grid):
            raise ConfigError("paired schedule needs one scale per grid value")
        if self.rate_mode:
            self._check_rate_hypothesis()

    def _check_rate_hypothesis(self) -> None:
        # along the schedule, B^(q j / 2) R^(-1/2) must decrease towards zero
        cells = self.cells()
        ratios = [self.B ** (self.q * max(js) / 2.0) / math.sqrt(R) for js, R in cells]
        if any(b >= a for a, b in zip(ratios, ratios[1:])) or ratios[-1] >= 1.0:
            raise ConfigError("rate mode requires B^(q j/2) R_t^(-1/2) to decrease to 0 along the "
                              f"grid (j = j(t) hypothesis); got {ratios}")

    def cells(self) -> list:
        grid = self.sample_sizes if self.family == "depoissonize" else self.intensities
        if self.family in ("U2-vector",):
            return [(tuple(self.scales), float(R)) for R in grid]
        if self.paired_schedule:
            return [((int(j),), float(R)) for j, R in zip(self.scales, grid)]
        return [((int(j),), float(R)) for j in self.scales for R in grid]

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = ExperimentConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def make_density(spec: dict, q: int) -> Density:
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return uniform_density(q)
    if kind == "perturbed":
        return perturbed_density(q, int(spec["ell"]), float(spec["eps"]), spec.get("axis"))
    if kind == "custom":
        with open(spec["file"]) as fh:
            doc = json.load(fh)
        return zonal_density(q, doc["coefficients"], doc.get("axis"))
    raise ConfigError(f"unknown density kind {kind!r}")


def zonal_density(q: int, coefficients, axis=None) -> Density:
    """(1 + sum_l c_l C_l(<z, n>) / C_l(1)) / omega_q for l = 1, 2, ..."""
    from .special import gegenbauer

    c = [float(v) for v in coefficients]
    slack = sum(abs(v) for v in c)
    if slack >= 1.0:
        raise ConfigError("custom zonal density needs sum |c_l| < 1 to stay positive")
    n = np.zeros(q + 1)
    n[0] = 1.0
    if axis is not None:
        n = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    om = surface_measure(q)

    def f(z):
        x = np.clip(np.asarray(z) @ n, -1.0, 1.0)
        return (1.0 + sum(cl * gegenbauer(l, q, x) / gegenbauer_at_one(l, q)
                          for l, cl in enumerate(c, start=1))) / om

    return Density(q=q, eval=f, lower=(1 - slack) / om, upper=(1 + slack) / om, band_limit=len(c),
                   name="custom", params={"coefficients": c})


def equatorial_center(frame: NeedletFrame) -> int:
    """Index of the largest cubature weight (an equatorial node for product rules)."""
    return int(np.argmax(frame.cubature.weights))


def antipodal_centers(frame: NeedletFrame) -> list:
    k = equatorial_center(frame)
    return [k, int(np.argmin(frame.centers @ frame.centers[k]))]


# ----------------------------------------------------------------- cells

@dataclass
class _Cell:
    index: int
    key: str
    cfg: ExperimentConfig
    js: tuple
    size: float
    density: Density
    frames: list
    centers: list
    tables: list
    null_tables: list

    @property
    def R_t(self):
        return self.size


_FRAMES: dict = {}


def _frame(B, j, q):
    key = (B, j, q)
    if key not in _FRAMES:
        _FRAMES[key] = build_frame(B, j, q)
    return _FRAMES[key]


def _resolve_centers(cfg, frame):
    c = cfg.centers
    if c == "equatorial":
        return [equatorial_center(frame)]
    if c == "antipodal":
        return antipodal_centers(frame)
    if isinstance(c, (list, tuple)):
        ks = [int(v) for v in c]
        if any(k < 0 or k >= frame.K for k in ks):
            raise ConfigError(f"centre index out of range [0, {frame.K})")
        return ks
    raise ConfigError(f"unknown centres spec {c!r}")


def cell_key(family, js, size) -> str:
    return f"{family}|j={'-'.join(str(j) for j in js)}|s={size:.17g}"


def _build_cell(cfg: ExperimentConfig, index: int, js, size) -> _Cell:
    f = make_density(cfg.density, cfg.q)
    frames = [_frame(cfg.B, j, cfg.q) for j in js]
    centers, tables, null_tables = [], [], []
    fam = cfg.family if cfg.family != "depoissonize" else cfg.statistic
    if fam.startswith("U1"):
        centers = _resolve_centers(cfg, frames[0])
        if fam == "U1":
            centers = centers[:1]
        tables = [compute_moments(frames[0], k, f, cfg.u) for k in centers]
    if fam.startswith("U2"):
        # U2 is standardised under the uniformity null
        u = uniform_density(cfg.q)
        null_tables = [compute_moments(fr, 0, u, 2) for fr in frames]
    return _Cell(index, cell_key(cfg.family, js, size), cfg, tuple(js), size, f, frames, centers,
                 tables, null_tables)


def _jupp_sd(weights, q, R_t):
    om = surface_measure(q)
    s = sum(a**4 * harmonic_dim(l, q) for l, a in enumerate(weights) if a)
    return math.sqrt(2.0 * s) * R_t / om


def _replicate(cell: _Cell, rep: int) -> list:
    cfg = cell.cfg
    seed = (cfg.master_seed, cell.index, rep)
    fam = cfg.family
    if fam == "depoissonize":
        coupled = sample_coupled(cell.density, int(cell.size), seed)
        fr = cell.frames[0]
        if cfg.statistic == "U1":
            spec = StatisticSpec("U1", fr, cell.tables[0], cell.centers[0], cfg.u)
        else:
            spec = StatisticSpec("U2", fr, cell.null_tables[0])
        U, Uc = coupled_u_pair(coupled, spec)
        return [U, Uc]
    field_ = sample_poisson_field(cell.density, cell.R_t, seed)
    R = cell.R_t
    if fam in ("U1", "U1-vector"):
        fr = cell.frames[0]
        return [u1_standardize(u1_raw(field_, fr, k, cfg.u), fr, k, cfg.u, t, R).standardized
                for k, t in zip(cell.centers, cell.tables)]
    if fam in ("U2", "U2-vector"):
        return [u2_standardize(u2_raw(field_, fr), fr, t, R).standardized
                for fr, t in zip(cell.frames, cell.null_tables)]
    if fam == "Jupp":
        raw = jupp_statistic(field_, cfg.jupp_weights, cfg.q)
        return [raw / _jupp_sd(cfg.jupp_weights, cfg.q, R)]
    raise ConfigError(f"unknown family {fam!r}")


def _replicate_block(cfg_doc: dict, index: int, js, size, reps) -> list:
    # densities hold closures, so workers rebuild the cell from the plain config
    cell = _build_cell(ExperimentConfig(**cfg_doc), index, js, size)
    return [_replicate(cell, r) for r in reps]


def _run_cell_values(cell: _Cell, workers: int = 1) -> np.ndarray:
    M = cell.cfg.replications
    if workers > 1:
        blocks = np.array_split(np.arange(M), workers)
        doc = cell.cfg.to_dict()
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(_replicate_block, doc, cell.index, cell.js, cell.size, b.tolist())
                    for b in blocks]
            rows = [r for f in futs for r in f.result()]
    else:
        rows = [_replicate(cell, r) for r in range(M)]
    return np.asarray(rows, dtype=float)


def _bound(cell: _Cell) -> float:
    cfg = cell.cfg
    fam = cfg.family if cfg.family != "depoissonize" else None
    try:
        if fam in ("U1", "U1-vector"):
            return float(u1_linear_bound(cell.frames[0], cell.centers, cell.density, cfg.u, cell.R_t).total)
        if fam in ("U2", "U2-vector") and cell.density.is_uniform:
            return float(bound_quadratic(cell.frames, cell.R_t).total)
    except ValueError:
        pass
    return float("nan")


def _summarize(cell: _Cell, values: np.ndarray) -> dict:
    cfg = cell.cfg
    fam = cfg.family
    row = {"cell": cell.key, "family": fam, "j": "-".join(str(j) for j in cell.js),
           "R_t": cell.size if fam != "depoissonize" else float("nan"),
           "n": int(cell.size) if fam == "depoissonize" else -1, "M": int(values.shape[0]),
           "master_seed": cfg.master_seed, "cell_index": cell.index}
    if fam == "depoissonize":
        diff = values[:, 0] - values[:, 1]
        main = values[:, 1]
        row["depois_stat"] = math.sqrt(cell.size) * float(np.mean(diff**2))
    else:
        main = values[:, 0]
        row["depois_stat"] = float("nan")
    row["mean"] = float(np.mean(main))
    row["var"] = float(np.var(main, ddof=1))
    if values.shape[1] > 1 and fam != "depoissonize":
        diag = multivariate_diag([values[:, i] for i in range(values.shape[1])], seed=cfg.master_seed)
        row["d_K"] = float(max(diag["component_dK"]))
        row["max_offdiag"] = float(np.max(np.abs(np.corrcoef(values.T) - np.eye(values.shape[1]))))
    else:
        row["d_K"] = kolmogorov_distance(main)
        row["max_offdiag"] = float("nan")
    row["W1"] = wasserstein1_distance(main)
    if fam in ("U1", "U1-vector"):
        row["reject_rate"] = float(np.mean(np.abs(main) > Z975))
    else:
        row["reject_rate"] = float(np.mean(main > Z95_ONE_SIDED))
    row["bound"] = _bound(cell)
    return {c: row[c] for c in CSV_COLUMNS}


# ------------------------------------------------------------- persistence

def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _csv_line(row: dict) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _parse_value(col, text):
    if col in ("cell", "family", "j"):
        return text
    if col in ("n", "M", "master_seed", "cell_index"):
        return int(text)
    return float(text)


@dataclass
class ExperimentResult:
    config: dict
    rows: list
    rates: dict
    values: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)


def _values_path(outdir: Path, index: int) -> Path:
    return outdir / "cells" / f"cell{index:04d}.json"


def _write_cell(outdir: Path, cell: _Cell, values: np.ndarray, row: dict) -> None:
    (outdir / "cells").mkdir(parents=True, exist_ok=True)
    doc = {"cell": cell.key, "index": cell.index, "seed_block": [cell.cfg.master_seed, cell.index],
           "values": [["%.17g" % v for v in r] for r in values], "row": {k: _fmt(v) for k, v in row.items()}}
    tmp = _values_path(outdir, cell.index).with_suffix(".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(_values_path(outdir, cell.index))
    with open(outdir / "cells.csv", "a") as fh:
        fh.write(_csv_line(row))


def _fit_rates(cfg: ExperimentConfig, rows: list) -> dict:
    out = {}
    sizes = [(r["n"] if cfg.family == "depoissonize" else r["R_t"], r) for r in rows]
    by_j: dict = {}
    for s, r in sizes:
        by_j.setdefault(r["j"], []).append((s, r))
    for j, items in by_j.items():
        if len(items) >= 3:
            metric = "depois_stat" if cfg.family == "depoissonize" else "d_K"
            try:
                fit = fit_rate([(s, r[metric]) for s, r in items])
            except ValueError:
                continue
            out[f"j={j}"] = {"metric": metric, "slope": fit.slope, "intercept": fit.intercept,
                             "stderr": fit.stderr}
    return out


def run_experiment(cfg: ExperimentConfig, outdir=None, keep_values: bool = False) -> ExperimentResult:
    """Run every grid cell, flushing each finished cell to ``outdir`` before the next."""
    cfg.validate()
    outdir = Path(outdir or cfg.output or default_output_dir())
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "cells.csv").write_text(",".join(CSV_COLUMNS) + "\n")
    (outdir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    rows, values, timing = [], {}, {}
    for index, (js, size) in enumerate(cfg.cells()):
        t0 = time.perf_counter()
        try:
            cell = _build_cell(cfg, index, js, size)
            vals = _run_cell_values(cell, cfg.workers)
            row = _summarize(cell, vals)
        except Exception as exc:
            raise CellError(f"cell {index} (j={js}, size={size}): {exc}") from exc
        _write_cell(outdir, cell, vals, row)
        rows.append(row)
        timing[cell.key] = time.perf_counter() - t0
        if keep_values:
            values[cell.key] = vals
    result = ExperimentResult(cfg.to_dict(), rows, _fit_rates(cfg, rows), values, timing)
    export_report(result, outdir)
    return result


def export_report(result: ExperimentResult, outdir) -> tuple:
    if not result.rows:
        raise ValueError("cannot export an empty result")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "report.csv"
    csv_path.write_text(",".join(CSV_COLUMNS) + "\n" + "".join(_csv_line(r) for r in result.rows))
    doc = {"config": result.config, "columns": CSV_COLUMNS,
           "rows": [{k: _fmt(v) for k, v in r.items()} for r in result.rows],
           "rates": {k: {kk: _fmt(vv) for kk, vv in v.items()} for k, v in result.rates.items()}}
    json_path = outdir / "report.json"
    json_path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    (outdir / "metadata.json").write_text(json.dumps(
        {"created": time.strftime("%Y-%m-%dT%H:%M:%S"), "wall_time_s": result.timing}, indent=1))
    return csv_path, json_path


def read_report(outdir) -> list:
    with open(Path(outdir) / "report.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError("report header does not match the documented schema")
        return [{c: _parse_value(c, r[c]) for c in CSV_COLUMNS} for r in reader]


def replay_cell(outdir, key: str, seed_block=None) -> dict:
    """Recompute one stored cell and check it matches bit for bit.

    ``seed_block`` overrides the stored (master_seed, cell_index) pair; any
    mismatch with the stored values raises :class:`ReplayMismatch`.
    """
    outdir = Path(outdir)
    cfg_doc = json.loads((outdir / "config.json").read_text())
    cfg = ExperimentConfig(**cfg_doc)
    cells = cfg.cells()
    matches = [i for i, (js, s) in enumerate(cells) if cell_key(cfg.family, js, s) == key]
    if not matches:
        raise KeyError(f"no cell {key!r} in {outdir}")
    index = matches[0]
    stored = json.loads(_values_path(outdir, index).read_text())
    master, cidx = stored["seed_block"] if seed_block is None else seed_block
    cfg.master_seed = int(master)
    js, size = cells[index]
    cell = _build_cell(cfg, int(cidx), js, size)
    cell.key = key
    vals = _run_cell_values(cell, 1)
    row = _summarize(cell, vals)
    ref = np.array([[float(v) for v in r] for r in stored["values"]])
    if ref.shape != vals.shape or not np.array_equal(ref, vals):
        raise ReplayMismatch(f"replayed values differ from stored values for cell {key!r}")
    want = stored["row"]
    for col in CSV_COLUMNS:
        if col in ("master_seed", "cell_index"):
            continue
        if _fmt(row[col]) != want[col]:
            raise ReplayMismatch(f"column {col!r} differs on replay: {_fmt(row[col])} vs {want[col]}")
    return row
