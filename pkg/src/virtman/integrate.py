"""Integration of glued form families.

Two equivalent definitions are implemented: the alternating sum over chart
tuples (each intersection integrated in the chart of the union index), and
the partition-of-unity sum.  The partition of unity is built directly from
smooth step cutoffs in the chart regions and normalized symbolically, so
the weights sum to 1 exactly wherever the supports cover.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import expr as ex
from .complexes import BoundaryComplex, OverlapDatum, VirtualComplex, boundary
from .errors import CoverGapError, DegreeError, StructureError, SupportLeakError
from .forms import (
    ChartForm,
    FormFamily,
    VirtualFormFamily,
    exterior_derivative,
    face_restrict,
    family_wedge_virtual,
    virtual_family_d,
)
from .geometry import ChartRegion, IndexSet, intersect_regions
from .quadrature import QuadratureSpec, integrate_region, integrate_region_with_error


def chart_integral(region: ChartRegion, form: ChartForm, q: QuadratureSpec,
                   sink=None, weight: Optional[Callable] = None) -> float:
    """Integral of a top-degree form over a region, coordinate orientation."""
    if form.degree != region.dim:
        raise DegreeError(
            f"form degree {form.degree} does not match region dim {region.dim}"
        )
    if form.is_zero:
        return 0.0
    top = ex.compile_expression(form.top_coefficient())
    if weight is None:
        integrand = lambda pts: top(pts)
    else:
        integrand = lambda pts: weight(pts) * top(pts)
    return integrate_region(region, integrand, q, sink=sink)


# ---------------------------------------------------------------------------
# Partition of unity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PouWeight:
    beta: ex.Expression
    denom: ex.Expression

    @property
    def eta(self) -> ex.Expression:
        return ex.div(self.beta, self.denom)

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Masked evaluation: 0 wherever beta vanishes (denom may too)."""
        b = ex.compile_expression(self.beta)(pts)
        out = np.zeros_like(b)
        m = b > 0.0
        if m.any():
            d = ex.compile_expression(self.denom)(pts[m])
            out[m] = b[m] / d
        return out


@dataclass(frozen=True)
class PartitionOfUnity:
    """Chart weights eta_I = beta_I / sum of lifted betas.

    Betas are products of one-sided smooth step cutoffs that decay toward
    interior cut faces and cut constraints only; true boundary faces and
    fiber directions carry no factor, so weights are constant along bundle
    fibers and extend as 1 up to the boundary.
    """

    shrink: float
    weights: dict[IndexSet, PouWeight] = field(default_factory=dict)

    def eta(self, index: IndexSet) -> ex.Expression:
        return self.weights[index].eta

    def weight_values(self, index: IndexSet, pts) -> np.ndarray:
        return self.weights[index].values(np.atleast_2d(np.asarray(pts, dtype=float)))


def _chart_fiber_axes(c: VirtualComplex, index: IndexSet) -> set[int]:
    axes: set[int] = set()
    for (small, big), ov in c.overlaps.items():
        if big != index or ov.rank == 0:
            continue
        fib = ov.fiber_axes
        if fib is None:
            raise StructureError(
                f"overlap {small}<{big} has a non-coordinate projection; "
                "partition-of-unity weights need the standard split form"
            )
        axes.update(fib)
    return axes


def _one_sided_step(t_num: ex.Expression, margin: float) -> ex.Expression:
    # exactly 1 on t_num <= 0, exactly 0 for t_num >= margin/2
    return ex.call("step", ex.div(t_num, margin / 2.0))


def _chart_beta(c: VirtualComplex, index: IndexSet, shrink: float) -> ex.Expression:
    region = c.charts[index]
    fiber_axes = _chart_fiber_axes(c, index)
    factors: list[ex.Expression] = []
    for a in range(region.dim):
        if a in fiber_axes or region.periodic[a]:
            continue
        lo, hi = region.box[a]
        m = (1.0 - shrink) * (hi - lo) / 2.0
        keep = region.boundary_faces | region.free_faces
        if (a, 1) not in keep:
            factors.append(_one_sided_step(ex.sub(ex.var(a), ex.num(hi - m)), m))
        if (a, -1) not in keep:
            factors.append(_one_sided_step(ex.sub(ex.num(lo + m), ex.var(a)), m))
    probes = None
    for g, is_cut in zip(region.constraints, region.constraint_is_cut):
        if not is_cut:
            continue
        if probes is None:
            grid = region.probe_grid(6)
            inside = region.contains(grid, 0.0)
            probes = grid[inside]
        if probes.shape[0] == 0:
            raise CoverGapError(f"chart {index} region has no interior probe points")
        vals = ex.compile_expression(g)(probes)
        depth = float(np.max(-vals))
        if depth <= 0:
            raise CoverGapError(
                f"cut constraint of chart {index} has no interior depth"
            )
        delta = (1.0 - shrink) * depth
        factors.append(_one_sided_step(ex.add(g, ex.num(delta)), delta))
    beta: ex.Expression = ex.Num(1.0)
    for f in factors:
        beta = ex.mul(beta, f)
    return beta


def _path_exprs(c: VirtualComplex, src: IndexSet, dst: IndexSet):
    """Expressions mapping src-chart coordinates to dst-chart coordinates
    along the canonical overlap path, or None when the charts never meet."""
    if src == dst:
        return ex.identity_map(c.dim(src))
    if dst.issubset(src):
        ov = c.overlap(dst, src)
        return ov.projection if ov else None
    if src.issubset(dst):
        if c.overlap(src, dst) is None:
            return None
        return c.lift_map(src, dst)
    k = src.inter(dst)
    if k not in c.charts:
        return None
    down = c.overlap(k, src)
    if down is None or c.overlap(k, dst) is None:
        return None
    return ex.compose_map(c.lift_map(k, dst), down.projection)


def _numeric_rep(c: VirtualComplex, src: IndexSet, dst: IndexSet,
                 pts: np.ndarray, tol: float) -> Optional[np.ndarray]:
    """Representatives of src-chart points in the dst chart, region-checked.

    Returns an array with nan rows where no representative exists.
    """
    out = np.full((pts.shape[0], c.dim(dst)), np.nan)
    if src == dst:
        return pts.copy()
    if dst.issubset(src):
        ov = c.overlap(dst, src)
        if ov is None:
            return out
        m = ov.region_in_big.contains(pts, tol)
        if m.any():
            out[m] = ov.project(pts[m])
        return out
    if src.issubset(dst):
        ov = c.overlap(src, dst)
        if ov is None:
            return out
        m = ov.region_in_small.contains(pts, tol)
        if m.any():
            out[m] = ov.lift(pts[m])
        return out
    k = src.inter(dst)
    if k not in c.charts:
        return out
    ov_down = c.overlap(k, src)
    ov_up = c.overlap(k, dst)
    if ov_down is None or ov_up is None:
        return out
    m = ov_down.region_in_big.contains(pts, tol)
    if m.any():
        base = ov_down.project(pts[m])
        m2 = ov_up.region_in_small.contains(base, tol)
        rows = np.where(m)[0][m2]
        if rows.size:
            out[rows] = ov_up.lift(base[m2])
    return out


def build_pou(c: VirtualComplex, shrink: float = 0.8, samples: int = 64,
              seed: int = 0, verify: bool = True) -> PartitionOfUnity:
    """Partition of unity subordinate to the shrunk chart regions.

    Raises CoverGapError (with a witness) when the shrunk supports fail to
    cover some sampled chart point.
    """
    if not 0.0 < shrink < 1.0:
        raise StructureError("shrink must lie in (0, 1)")
    betas = {index: _chart_beta(c, index, shrink) for index in c.sorted_indices()}

    weights = {}
    for index in c.sorted_indices():
        denom: ex.Expression = ex.Num(0.0)
        for other in c.sorted_indices():
            path = _path_exprs(c, index, other)
            if path is None:
                continue
            denom = ex.add(denom, ex.subs(betas[other], {
                f"x{i}": g for i, g in enumerate(path)
            }))
        weights[index] = PouWeight(beta=betas[index], denom=denom)

    pou = PartitionOfUnity(shrink=shrink, weights=weights)

    rng = np.random.default_rng(seed)
    for index in c.sorted_indices():
        region = c.charts[index]
        pts = region.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            continue
        denom_vals = ex.compile_expression(weights[index].denom)(pts)
        bad = ~(denom_vals > 1e-12)
        if bad.any():
            witness = pts[bad][0].tolist()
            raise CoverGapError(
                f"partition supports leave a gap near {witness} in chart {index}",
                witness=witness,
            )
        if verify:
            honest = np.zeros(pts.shape[0])
            for other in c.sorted_indices():
                reps = _numeric_rep(c, index, other, pts, tol=1e-9)
                valid = ~np.isnan(reps).any(axis=1)
                if valid.any():
                    vals = ex.compile_expression(betas[other])(reps[valid])
                    honest[valid] += vals
            dev = np.abs(honest - denom_vals)
            worst = float(dev.max())
            if worst > 1e-7 * (1.0 + float(np.abs(denom_vals).max())):
                raise StructureError(
                    f"partition weights disagree with pointwise lifting in chart "
                    f"{index} (max dev {worst:.2e}); supports leak outside overlaps"
                )
    return pou


# ---------------------------------------------------------------------------
# Support verification
# ---------------------------------------------------------------------------

def check_compact_support(c: VirtualComplex, z: VirtualFormFamily,
                          probes: int = 64, seed: int = 0,
                          boundary_tol: float = 1e-12,
                          truncation_tol: float = 1e-9) -> None:
    """All boundary probe points must evaluate to (numerically) zero.

    True boundary faces enforce interior compact support; fiber-axis box
    faces enforce that the fiber truncation does not clip the form.
    """
    rng = np.random.default_rng(seed)
    for index in c.sorted_indices():
        chart = c.charts[index]
        zf = z.charts.get(index)
        if zf is None or zf.is_zero:
            continue
        fiber_axes = _chart_fiber_axes(c, index)
        faces = set(chart.boundary_faces)
        for a in fiber_axes:
            faces.add((a, -1))
            faces.add((a, 1))
        for axis, side in sorted(faces):
            tol = boundary_tol if (axis, side) in chart.boundary_faces else truncation_tol
            face = chart.face_region(axis, side)
            pts = face.sample(rng, probes, 0.0) if face.dim else np.zeros((1, 0))
            if pts.shape[0] == 0:
                continue
            ambient = ex.evaluate_map(chart.face_inclusion(axis, side), pts)
            worst = zf.max_abs(ambient)
            if worst > tol:
                raise SupportLeakError(
                    f"form is {worst:.2e} on face x{axis}"
                    f"{'+' if side > 0 else '-'} of chart {index}; "
                    "shrink the profile radius or the support"
                )


# ---------------------------------------------------------------------------
# The two integrals
# ---------------------------------------------------------------------------

def integrate_pou(c: VirtualComplex, z: VirtualFormFamily, pou: PartitionOfUnity,
                  q: QuadratureSpec, sink=None, check_support: bool = True) -> float:
    """Sum over charts of the weighted chart integrals."""
    if check_support:
        check_compact_support(c, z)
    total = 0.0
    for index in c.sorted_indices():
        region = c.charts[index]
        zf = z.charts.get(index)
        if zf is None or zf.is_zero:
            continue
        if zf.degree != region.dim:
            raise DegreeError(
                f"chart {index} carries a degree-{zf.degree} form on a "
                f"dim-{region.dim} chart; not a top-degree family"
            )
        w = pou.weights[index]
        total += chart_integral(region, zf, q, sink=sink,
                                weight=lambda pts, w=w: w.values(pts))
    return total


def integrate_incl_excl(c: VirtualComplex, z: VirtualFormFamily,
                        q: QuadratureSpec, sink=None,
                        check_support: bool = True,
                        emptiness_probes: int = 64) -> float:
    """Alternating sum over chart tuples, each evaluated in the union chart."""
    if check_support:
        check_compact_support(c, z)
    order = c.sorted_indices()
    empty_cache: set[frozenset] = set()
    total = 0.0
    for m in range(1, len(order) + 1):
        sign = 1.0 if m % 2 == 1 else -1.0
        for combo in itertools.combinations(order, m):
            key = frozenset(combo)
            if any(known <= key for known in empty_cache):
                continue
            union = combo[0]
            for other in combo[1:]:
                union = union.union(other)
            if union not in c.charts:
                empty_cache.add(key)
                continue
            region = c.charts[union]
            zf = z.charts.get(union)
            if zf is None:
                raise StructureError(f"family has no form on chart {union}")
            ok = True
            for member in combo:
                if member == union:
                    continue
                ov = c.overlap(member, union)
                if ov is None:
                    ok = False
                    break
                try:
                    region = intersect_regions(region, ov.region_in_big)
                except StructureError:
                    ok = False
                    break
            if not ok:
                empty_cache.add(key)
                continue
            if region.looks_empty(emptiness_probes, seed=11):
                empty_cache.add(key)
                continue
            total += sign * chart_integral(region, zf, q, sink=sink)
    return total


def pairing_mu(c: VirtualComplex, a: FormFamily, z: VirtualFormFamily,
               pou: PartitionOfUnity, q: QuadratureSpec,
               closedness_tol: float = 1e-7, seed: int = 0) -> float:
    """Pairing of a closed family against a closed compactly supported one."""
    if a.degree + z.virtual_degree != c.virtual_dim:
        raise DegreeError(
            f"degree {a.degree} + virtual degree {z.virtual_degree} "
            f"!= virtual dimension {c.virtual_dim}"
        )
    rng = np.random.default_rng(seed)
    for index in c.sorted_indices():
        pts = c.charts[index].sample(rng, 8, 0.0)
        if pts.shape[0] == 0:
            continue
        for fam, tag in ((a.charts[index], "a"), (z.charts[index], "z")):
            resid = exterior_derivative(fam).max_abs(pts)
            if resid > closedness_tol:
                warnings.warn(
                    f"{tag} is not closed on chart {index} (d residual {resid:.2e})",
                    stacklevel=2,
                )
    return integrate_pou(c, family_wedge_virtual(a, z), pou, q)


def stokes_check(c: VirtualComplex, z: VirtualFormFamily, q: QuadratureSpec,
                 pou: Optional[PartitionOfUnity] = None,
                 bc: Optional[BoundaryComplex] = None,
                 shrink: float = 0.8):
    """Integral of the derivative family against the boundary restriction.

    Returns (lhs, rhs, residual) with the boundary carrying the
    outward-normal-first orientation.
    """
    pou = pou or build_pou(c, shrink)
    bc = bc if bc is not None else boundary(c)
    lhs = integrate_pou(c, virtual_family_d(z), pou, q, check_support=False)
    rhs = 0.0
    for face in bc.faces:
        zf = z.charts.get(face.parent)
        if zf is None or zf.is_zero:
            continue
        restricted = face_restrict(zf, face.axis,
                                   c.charts[face.parent].face_value(face.axis, face.side))
        if restricted.is_zero:
            continue
        if restricted.degree != face.region.dim:
            raise DegreeError(
                f"restriction to {face.label} has degree {restricted.degree}, "
                f"face dim is {face.region.dim}"
            )
        w = pou.weights[face.parent]
        incl = face.inclusion

        def face_weight(pts, w=w, incl=incl):
            ambient = ex.evaluate_map(incl, pts)
            return w.values(ambient)

        rhs += face.orientation_sign * chart_integral(
            face.region, restricted, q, weight=face_weight
        )
    return lhs, rhs, abs(lhs - rhs)


def integral_with_error(c: VirtualComplex, z: VirtualFormFamily,
                        pou: PartitionOfUnity, q: QuadratureSpec,
                        check_support: bool = True) -> tuple[float, float]:
    """Partition-of-unity integral plus a summed per-chart error estimate."""
    if check_support:
        check_compact_support(c, z)
    total, err = 0.0, 0.0
    for index in c.sorted_indices():
        region = c.charts[index]
        zf = z.charts.get(index)
        if zf is None or zf.is_zero:
            continue
        w = pou.weights[index]
        top = ex.compile_expression(zf.top_coefficient())

        def integrand(pts, w=w, top=top):
            return w.values(pts) * top(pts)

        v, e = integrate_region_with_error(region, integrand, q)
        total += v
        err += e
    return total, err
