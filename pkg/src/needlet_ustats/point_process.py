"""Point-field samplers: Poisson fields with intensity R_t f, i.i.d. samples,
and the coupled pair sharing one i.i.d. stream.

Only the count and the marks are simulated; the time axis never is.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .sphere import Density, as_points, uniform_density

__all__ = [
    "CoupledFields",
    "PointField",
    "make_rng",
    "read_field_csv",
    "read_field_json",
    "sample_classical",
    "sample_coupled",
    "sample_poisson_field",
    "sample_uniform_sphere",
    "write_field_csv",
    "write_field_json",
]

MAX_PROPOSALS_PER_POINT = 1_000_000


def make_rng(seed) -> np.random.Generator:
    """Philox counter-based generator; ``seed`` is an int or a sequence of ints."""
    entropy = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(s) for s in entropy])))


def sample_uniform_sphere(rng: np.random.Generator, n: int, q: int) -> np.ndarray:
    g = rng.standard_normal((n, q + 1))
    return g / np.linalg.norm(g, axis=1)[:, None]


def _draw(density: Density, n: int, rng: np.random.Generator) -> np.ndarray:
    q = density.q
    if n == 0:
        return np.empty((0, q + 1))
    if density.lower == density.upper:
        return sample_uniform_sphere(rng, n, q)
    M = density.upper
    budget = MAX_PROPOSALS_PER_POINT * (density.upper / density.lower) * n
    accept_rate = density.lower / density.upper
    out = []
    have = 0
    used = 0
    while have < n:
        if used > budget:
            raise RuntimeError("rejection sampler exceeded its proposal budget; "
                               "the density likely violates its declared bounds")
        batch = int(min(max(1.2 * (n - have) / accept_rate, 64), 1 << 20))
        z = sample_uniform_sphere(rng, batch, q)
        u = rng.random(batch)
        keep = u * M < density.eval(z)
        used += batch
        out.append(z[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n]


@dataclass(frozen=True)
class PointField:
    points: np.ndarray
    model: str
    R_t: Optional[float]
    n: Optional[int]
    density_name: str = "uniform"
    density_params: dict = field(default_factory=dict)
    seed: Optional[tuple] = None

    def __post_init__(self):
        if self.model not in ("poissonized", "classical"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "classical" and self.n is not None and self.points.shape[0] != self.n:
            raise ValueError("classical field must hold exactly n points")

    @property
    def q(self) -> int:
        return self.points.shape[1] - 1

    def __len__(self):
        return self.points.shape[0]

    def metadata(self) -> dict:
        return {"model": self.model, "R_t": self.R_t, "n": self.n, "q": self.q,
                "count": len(self), "density": self.density_name,
                "density_params": self.density_params,
                "seed": list(self.seed) if self.seed is not None else None}


def _seed_tuple(seed):
    return tuple(int(s) for s in seed) if isinstance(seed, (list, tuple)) else (int(seed),)


def sample_poisson_field(density: Density, R_t: float, seed) -> PointField:
    """Poisson(R_t) many i.i.d. draws from ``density`` (rejection against uniform)."""
    if not R_t > 0:
        raise ValueError("intensity R_t must be positive")
    rng = make_rng(seed)
    count = int(rng.poisson(R_t))
    pts = _draw(density, count, rng)
    return PointField(pts, "poissonized", float(R_t), None, density.name, dict(density.params),
                      _seed_tuple(seed))


def sample_classical(density: Density, n: int, seed) -> PointField:
    if n < 0:
        raise ValueError("sample size must be non-negative")
    pts = _draw(density, int(n), make_rng(seed))
    return PointField(pts, "classical", None, int(n), density.name, dict(density.params),
                      _seed_tuple(seed))


@dataclass(frozen=True)
class CoupledFields:
    base_points: np.ndarray
    n: int
    N_n: int

    @property
    def classical_points(self) -> np.ndarray:
        return self.base_points[: self.n]

    @property
    def poisson_points(self) -> np.ndarray:
        return self.base_points[: self.N_n]


def sample_coupled(density: Density, n: int, seed) -> CoupledFields:
    """One i.i.d. stream of length max(n, N_n) with N_n ~ Poisson(n) independent of it."""
    if n < 1:
        raise ValueError("coupled sampling needs n >= 1")
    rng = make_rng(seed)
    N_n = int(rng.poisson(n))
    pts = _draw(density, max(n, N_n), rng)
    return CoupledFields(pts, int(n), N_n)


# ------------------------------------------------------------------- I/O

def write_field_csv(fieldobj: PointField, path) -> None:
    q = fieldobj.q
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(q + 1)])
        for row in fieldobj.points:
            w.writerow([repr(float(v)) for v in row])


def read_field_csv(path, model: str = "classical", R_t: Optional[float] = None) -> PointField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    body = rows[1:] if not _is_numeric(rows[0]) else rows
    pts = np.array([[float(v) for v in r] for r in body if r], dtype=float)
    if pts.size == 0:
        pts = np.empty((0, len(rows[0])))
    pts = as_points(pts, normalize=False) if pts.shape[0] else pts
    n = pts.shape[0] if model == "classical" else None
    return PointField(pts, model, R_t, n, "external", {}, None)


def _is_numeric(row: Sequence[str]) -> bool:
    try:
        [float(v) for v in row]
    except ValueError:
        return False
    return True


def write_field_json(fieldobj: PointField, path) -> None:
    doc = fieldobj.metadata()
    doc["points"] = fieldobj.points.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_field_json(path) -> PointField:
    with open(path) as fh:
        doc = json.load(fh)
    pts = np.asarray(doc["points"], dtype=float).reshape(-1, int(doc["q"]) + 1)
    seed = tuple(doc["seed"]) if doc.get("seed") is not None else None
    return PointField(pts, doc["model"], doc.get("R_t"), doc.get("n"), doc.get("density", "external"),
                      doc.get("density_params", {}), seed)


def default_density(q: int) -> Density:
    return uniform_density(q)
