"""Deterministic quadrature over chart regions.

Two methods: a midpoint tensor grid with membership weighting, and uniform
Monte Carlo over the region box.  Work is split into fixed chunks whose
partial sums are reduced in chunk order, so results are bit-identical for a
given spec regardless of the worker count.  Monte Carlo draws one RNG
stream per chunk, seeded by (seed, chunk index).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DegreeError
from .geometry import ChartRegion

_CHUNK = 1 << 18


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "grid"  # "grid" | "mc"
    points_per_axis: int = 256
    sample_count: int = 200_000
    seed: int = 0
    tol: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        if self.method not in ("grid", "mc"):
            raise DegreeError(f"unknown quadrature method {self.method!r}")

    def with_(self, **kw) -> "QuadratureSpec":
        return replace(self, **kw)


Integrand = Callable[[np.ndarray], np.ndarray]
Sink = Callable[[np.ndarray, np.ndarray], None]


def _map_chunks(q: QuadratureSpec, jobs, worker):
    if q.workers > 1:
        with ThreadPoolExecutor(max_workers=q.workers) as pool:
            return list(pool.map(worker, jobs))
    return [worker(j) for j in jobs]


def _grid_sum(region: ChartRegion, f: Integrand, q: QuadratureSpec,
              per_axis: int, sink: Optional[Sink]) -> float:
    d = region.dim
    lows = np.array([lo for lo, _ in region.box])
    steps = np.array([(hi - lo) / per_axis for lo, hi in region.box])
    cell = float(np.prod(steps))
    total = per_axis**d
    shape = (per_axis,) * d

    def worker(bounds):
        i0, i1 = bounds
        flat = np.arange(i0, i1)
        idx = np.stack(np.unravel_index(flat, shape), axis=-1)
        pts = lows + (idx + 0.5) * steps
        mask = region.contains(pts)
        if not mask.any():
            return 0.0
        pts_in = pts[mask]
        with np.errstate(all="ignore"):
            vals = f(pts_in)
        if sink is not None:
            sink(pts_in, vals)
        return float(np.sum(vals))

    jobs = [(i, min(i + _CHUNK, total)) for i in range(0, total, _CHUNK)]
    partial = _map_chunks(q, jobs, worker)
    return math.fsum(partial) * cell


def _mc_sum(region: ChartRegion, f: Integrand, q: QuadratureSpec,
            count: int, sink: Optional[Sink]) -> tuple[float, float]:
    lows = np.array([lo for lo, _ in region.box])
    highs = np.array([hi for _, hi in region.box])
    vol = region.box_volume

    def worker(job):
        chunk_idx, n = job
        rng = np.random.default_rng((q.seed, chunk_idx))
        pts = rng.uniform(lows, highs, size=(n, region.dim))
        mask = region.contains(pts)
        vals = np.zeros(n)
        if mask.any():
            with np.errstate(all="ignore"):
                vals[mask] = f(pts[mask])
        if sink is not None:
            sink(pts[mask], vals[mask])
        return float(np.sum(vals)), float(np.sum(vals * vals))

    jobs = []
    left, k = count, 0
    while left > 0:
        n = min(_CHUNK, left)
        jobs.append((k, n))
        left -= n
        k += 1
    partial = _map_chunks(q, jobs, worker)
    s1 = math.fsum(p[0] for p in partial)
    s2 = math.fsum(p[1] for p in partial)
    mean = s1 / count
    var = max(s2 / count - mean * mean, 0.0)
    return vol * mean, vol * math.sqrt(var / count)


def integrate_region(region: ChartRegion, integrand: Integrand,
                     q: QuadratureSpec, sink: Optional[Sink] = None) -> float:
    """Integral of `integrand` against Lebesgue measure over the region."""
    if region.dim == 0:
        pts = np.zeros((1, 0))
        vals = integrand(pts)
        if sink is not None:
            sink(pts, vals)
        return float(vals[0])
    if q.method == "grid":
        return _grid_sum(region, integrand, q, q.points_per_axis, sink)
    return _mc_sum(region, integrand, q, q.sample_count, sink)[0]


def integrate_region_with_error(region: ChartRegion, integrand: Integrand,
                                q: QuadratureSpec) -> tuple[float, float]:
    """Integral plus a cheap error estimate.

    Grid: Richardson difference against half resolution (order h^2 model).
    Monte Carlo: standard error of the mean.
    """
    if region.dim == 0:
        return float(integrand(np.zeros((1, 0)))[0]), 0.0
    if q.method == "grid":
        full = _grid_sum(region, integrand, q, q.points_per_axis, None)
        half = _grid_sum(region, integrand, q, max(q.points_per_axis // 2, 2), None)
        return full, abs(full - half) / 3.0
    return _mc_sum(region, integrand, q, q.sample_count, None)


def scaled_spec(q: QuadratureSpec, dim: int, budget: Optional[int] = None) -> QuadratureSpec:
    """Adapt points_per_axis to the dimension so grids stay affordable.

    The spec's points_per_axis is interpreted for 1-d integrals; higher
    dimensions take the per-axis count that keeps the total point budget
    comparable, unless the caller overrides it.
    """
    if q.method != "grid" or dim <= 1:
        return q
    budget = budget or max(q.points_per_axis, 2) ** 2
    per_axis = max(int(round(budget ** (1.0 / dim))), 8)
    return q.with_(points_per_axis=per_axis)
