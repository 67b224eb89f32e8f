"""Circle actions, Cartan-model forms, fixed loci, and localization.

Equivariant forms are polynomials in a formal degree-2 generator u with
chart forms as coefficients; the differential is d - u * contraction with
the action vector field.  Localization compares the glued integral of a
closed pair against the fixed-component sum; the fixed-point contribution
of a rank-2m normal block carries the (2 pi)^m volume normalization that
makes the comparison numeric rather than cohomological.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .complexes import VirtualComplex
from .errors import DegreeError, StructureError
from .forms import (
    ChartForm,
    FormFamily,
    TransitionData,
    VirtualFormFamily,
    contract,
    exterior_derivative,
    forms_close,
    pullback,
    wedge,
)
from .geometry import EMPTY, ChartRegion, IndexSet
from .integrate import PartitionOfUnity, build_pou, chart_integral
from .quadrature import QuadratureSpec
from .report import ValidationReport

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CircleActionData:
    """Per-chart flows a(theta, x); the generator field is d/dtheta at 0."""

    flows: dict[IndexSet, tuple[ex.Expression, ...]]

    def flow(self, index: IndexSet) -> tuple[ex.Expression, ...]:
        return self.flows[index]

    def vector_field(self, index: IndexSet) -> tuple[ex.Expression, ...]:
        out = []
        for component in self.flows[index]:
            d = ex.differentiate(component, "theta")
            out.append(ex.subs(d, {"theta": ex.num(0.0)}))
        return tuple(out)


def trivial_action(c: VirtualComplex) -> CircleActionData:
    return CircleActionData(flows={
        i: ex.identity_map(c.dim(i)) for i in c.charts
    })


def validate_action(c: VirtualComplex, act: CircleActionData, samples: int = 32,
                    tol: float = 1e-7, seed: int = 0) -> ValidationReport:
    report = ValidationReport(title="circle-action")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-2.0, 2.0, size=4)

    for index in c.sorted_indices():
        if index not in act.flows:
            report.add("flow-present", str(index), False, "missing flow")
            continue
        chart = c.charts[index]
        flow = act.flows[index]
        if len(flow) != chart.dim:
            report.add("flow-present", str(index), False, "wrong arity")
            continue
        report.add("flow-present", str(index), True)
        pts = chart.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            continue
        at_zero = ex.evaluate_map(flow, pts, theta=0.0)
        err = float(np.abs(chart.diff_wrapped(at_zero, pts)).max())
        report.add("flow-identity-at-zero", str(index), err <= tol,
                   f"max dev {err:.2e}")
        worst = 0.0
        for th1 in angles[:2]:
            for th2 in angles[2:]:
                lhs = ex.evaluate_map(flow, pts, theta=th1 + th2)
                rhs = ex.evaluate_map(flow, ex.evaluate_map(flow, pts, theta=th2),
                                      theta=th1)
                worst = max(worst, float(np.abs(chart.diff_wrapped(lhs, rhs)).max()))
        report.add("flow-composition", str(index), worst <= max(tol, 1e-6),
                   f"max dev {worst:.2e}")

    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        if small not in act.flows or big not in act.flows:
            continue
        pts = ov.region_in_big.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            report.add("equivariance", f"{small}<{big}", True, "empty overlap")
            continue
        worst = 0.0
        for th in angles[:3]:
            moved = ex.evaluate_map(act.flows[big], pts, theta=th)
            lhs = ov.project(moved)
            rhs = ex.evaluate_map(act.flows[small], ov.project(pts), theta=th)
            worst = max(worst,
                        float(np.abs(c.charts[small].diff_wrapped(lhs, rhs)).max()))
        report.add("equivariance", f"{small}<{big}", worst <= max(tol, 1e-6),
                   f"max dev {worst:.2e}")
    return report


# ---------------------------------------------------------------------------
# Equivariant forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquivariantChartForm:
    """Polynomial in u with chart-form coefficients (u has degree 2)."""

    chart_dim: int
    parts: tuple[tuple[int, ChartForm], ...] = ()

    def __post_init__(self):
        clean = tuple(
            (p, f) for p, f in sorted(self.parts) if not f.is_zero
        )
        for p, f in clean:
            if p < 0:
                raise DegreeError("negative powers of u are not polynomial")
            if f.chart_dim != self.chart_dim:
                raise DegreeError("coefficient lives on the wrong chart")
        object.__setattr__(self, "parts", clean)

    @staticmethod
    def from_dict(chart_dim: int, parts: dict[int, ChartForm]) -> "EquivariantChartForm":
        return EquivariantChartForm(chart_dim, tuple(parts.items()))

    @staticmethod
    def of_form(f: ChartForm) -> "EquivariantChartForm":
        return EquivariantChartForm(f.chart_dim, ((0, f),))

    @staticmethod
    def zero(chart_dim: int) -> "EquivariantChartForm":
        return EquivariantChartForm(chart_dim, ())

    def part(self, power: int) -> ChartForm:
        for p, f in self.parts:
            if p == power:
                return f
        return ChartForm.zero(self.chart_dim, 0)

    @property
    def powers(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.parts)

    def total_degree(self) -> Optional[int]:
        degs = {f.degree + 2 * p for p, f in self.parts}
        return degs.pop() if len(degs) == 1 else (0 if not self.parts else None)

    def __add__(self, other: "EquivariantChartForm") -> "EquivariantChartForm":
        table: dict[int, ChartForm] = {}
        for p, f in self.parts + other.parts:
            if p in table:
                if table[p].degree != f.degree:
                    # pad by formal sum is not defined; keep separate impossible
                    raise DegreeError("cannot add coefficients of unequal degree")
                table[p] = table[p] + f
            else:
                table[p] = f
        return EquivariantChartForm.from_dict(self.chart_dim, table)

    def scale(self, factor: ex.ExprLike) -> "EquivariantChartForm":
        return EquivariantChartForm(
            self.chart_dim, tuple((p, f.scale(factor)) for p, f in self.parts)
        )


def eq_wedge(a: EquivariantChartForm, b: EquivariantChartForm) -> EquivariantChartForm:
    table: dict[int, ChartForm] = {}
    for pa, fa in a.parts:
        for pb, fb in b.parts:
            w = wedge(fa, fb)
            if w.is_zero:
                continue
            p = pa + pb
            if p in table:
                table[p] = table[p] + w
            else:
                table[p] = w
    return EquivariantChartForm.from_dict(a.chart_dim, table)


def eq_pullback(map_exprs: Sequence[ex.Expression], target: EquivariantChartForm,
                source_dim: int) -> EquivariantChartForm:
    return EquivariantChartForm.from_dict(
        source_dim,
        {p: pullback(map_exprs, f, source_dim) for p, f in target.parts},
    )


def cartan_d(alpha: EquivariantChartForm,
             vector: Sequence[ex.Expression]) -> EquivariantChartForm:
    """d minus u times contraction with the action generator."""
    table: dict[int, ChartForm] = {}

    def accumulate(p: int, f: ChartForm):
        if f.is_zero:
            return
        if p in table:
            table[p] = table[p] + f
        else:
            table[p] = f

    for p, f in alpha.parts:
        accumulate(p, exterior_derivative(f))
        accumulate(p + 1, contract(f, vector).scale(-1.0))
    return EquivariantChartForm.from_dict(alpha.chart_dim, table)


def eq_forms_close(a: EquivariantChartForm, b: EquivariantChartForm, pts,
                   tol: float) -> tuple[bool, float]:
    worst = 0.0
    for p in set(a.powers) | set(b.powers):
        _, dev = forms_close(a.part(p), b.part(p), pts, tol)
        worst = max(worst, dev)
    return worst <= tol, worst


@dataclass(frozen=True)
class EquivariantFamily:
    """Per-chart equivariant forms, pullback-compatible."""

    charts: dict[IndexSet, EquivariantChartForm]

    @staticmethod
    def of_family(fam: FormFamily) -> "EquivariantFamily":
        return EquivariantFamily(charts={
            i: EquivariantChartForm.of_form(f) for i, f in fam.charts.items()
        })

    def form(self, index: IndexSet) -> EquivariantChartForm:
        return self.charts[index]


@dataclass(frozen=True)
class EquivariantVirtualFamily:
    """Equivariant glued family with equivariant transition data."""

    charts: dict[IndexSet, EquivariantChartForm]
    transition: dict[tuple[IndexSet, IndexSet], EquivariantChartForm] = field(
        default_factory=dict
    )

    @staticmethod
    def of_virtual(z: VirtualFormFamily) -> "EquivariantVirtualFamily":
        return EquivariantVirtualFamily(
            charts={i: EquivariantChartForm.of_form(f) for i, f in z.charts.items()},
            transition={
                k: EquivariantChartForm.of_form(f)
                for k, f in z.transition.entries.items()
            },
        )

    def transition_entry(self, small: IndexSet, big: IndexSet,
                         big_dim: int) -> EquivariantChartForm:
        got = self.transition.get((small, big))
        if got is not None:
            return got
        return EquivariantChartForm.of_form(ChartForm.constant(big_dim, 1.0))


def cartan_residual(c: VirtualComplex, act: CircleActionData,
                    fam_charts: dict[IndexSet, EquivariantChartForm],
                    samples: int = 16, seed: int = 0) -> float:
    """Max sampled coefficient of the Cartan differential across charts."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for index, f in fam_charts.items():
        pts = c.charts[index].sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            continue
        dg = cartan_d(f, act.vector_field(index))
        for _, part in dg.parts:
            worst = max(worst, part.max_abs(pts))
    return worst


# ---------------------------------------------------------------------------
# Equivariant Thom blocks
# ---------------------------------------------------------------------------

def equivariant_thom_form(weights: Sequence[int], radius: float,
                          chart_dim: Optional[int] = None,
                          offset: int = 0) -> EquivariantChartForm:
    """Equivariantly closed Thom form of a direct sum of weight planes.

    Each weight-w plane contributes b(s) dv1^dv2 + u * (w / 2pi) * h(s)
    with h the smooth step in s = |v|^2 / r^2 and b = -h', normalized to
    fiber integral 1.  The zero-section restriction of one block is
    u * w / 2pi, which is exactly the numeric equivariant Euler factor the
    localization formula divides by.
    """
    k = 2 * len(weights)
    chart_dim = offset + k if chart_dim is None else chart_dim
    if chart_dim < offset + k:
        raise DegreeError("chart too small for the weight planes")
    r2 = radius * radius
    out: Optional[EquivariantChartForm] = None
    for j, w in enumerate(weights):
        if w == 0:
            raise StructureError("weight 0 is not a moving plane")
        a, b = offset + 2 * j, offset + 2 * j + 1
        s = ex.div(
            ex.add(ex.pow_(ex.var(a), 2.0), ex.pow_(ex.var(b), 2.0)), r2
        )
        top = ChartForm.from_dict(chart_dim, 2, {
            (a, b): ex.mul(ex.num(-1.0 / (math.pi * r2)), ex.ProfileDeriv("step", 1, s))
        })
        scalar = ChartForm.from_dict(chart_dim, 0, {
            (): ex.mul(ex.num(w / TWO_PI), ex.call("step", s))
        })
        block = EquivariantChartForm.from_dict(chart_dim, {0: top, 1: scalar})
        out = block if out is None else eq_wedge(out, block)
    if out is None:
        out = EquivariantChartForm.of_form(ChartForm.constant(chart_dim, 1.0))
    return out


# ---------------------------------------------------------------------------
# Fixed loci
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedComponentData:
    """A declared fixed component inside one chart.

    region lives in the component's own coordinates; embed maps them into
    the chart.  weights are the integer rotation speeds of the normal
    planes (normal_rank = 2 * len(weights) unless the normal bundle is
    trivial); euler optionally declares the scalar Euler polynomial
    {u-power: expression} for positive-dimensional components.
    """

    chart: IndexSet
    region: ChartRegion
    embed: tuple[ex.Expression, ...]
    normal_rank: int = 0
    weights: tuple[int, ...] = ()
    euler: Optional[dict[int, ex.Expression]] = None

    def __post_init__(self):
        if self.normal_rank and self.euler is None:
            if 2 * len(self.weights) != self.normal_rank:
                raise StructureError(
                    f"normal rank {self.normal_rank} needs "
                    f"{self.normal_rank // 2} weights, got {len(self.weights)}"
                )
        if any(w == 0 for w in self.weights):
            raise StructureError("all normal weights must be nonzero")

    @property
    def dim(self) -> int:
        return self.region.dim

    def embed_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.dim == 0 and pts.shape[0] == 0:
            pts = np.zeros((1, 0))
        return ex.evaluate_map(self.embed, pts)

    def normal_axes(self, chart_dim: int) -> Optional[tuple[int, ...]]:
        """Chart axes transverse to the component (coordinate embeds only)."""
        tangent = set()
        for e in self.embed:
            if isinstance(e, ex.Var) and e.index >= 0:
                continue
            if ex._const(e) is not None:
                continue
            return None
        for axis, e in enumerate(self.embed):
            if isinstance(e, ex.Var):
                tangent.add(axis)
        return tuple(a for a in range(chart_dim) if a not in tangent)


def trivial_fixed_components(c: VirtualComplex) -> list[FixedComponentData]:
    """The whole complex as fixed locus (trivial action)."""
    out = []
    for index in c.sorted_indices():
        chart = c.charts[index]
        out.append(FixedComponentData(
            chart=index,
            region=chart,
            embed=ex.identity_map(chart.dim),
            normal_rank=0,
            weights=(),
        ))
    return out


def _component_extraction(comp: FixedComponentData) -> Optional[dict[int, int]]:
    """chart axis -> component axis for coordinate embeds."""
    out = {}
    for axis, e in enumerate(comp.embed):
        if isinstance(e, ex.Var) and e.index >= 0:
            out[axis] = e.index
    if len(out) != comp.dim:
        return None
    return out


def fixed_locus(c: VirtualComplex, act: CircleActionData,
                fixed: Sequence[FixedComponentData], samples: int = 32,
                tol: float = 1e-6, seed: int = 0,
                clearance: float = 0.15) -> VirtualComplex:
    """Verify the declared fixed components and assemble their sub-complex.

    Raises StructureError on: a nonzero generator on a declared component,
    a sampled chart point with (numerically) zero generator away from every
    declared component, or linearization weights that contradict the
    declaration.
    """
    rng = np.random.default_rng(seed)
    by_chart: dict[IndexSet, list[FixedComponentData]] = {}
    for comp in fixed:
        by_chart.setdefault(comp.chart, []).append(comp)

    clouds: dict[IndexSet, np.ndarray] = {}
    for index, comps in by_chart.items():
        pieces = []
        for comp in comps:
            base = comp.region.sample(rng, max(samples, 8), 0.0)
            if comp.dim == 0:
                base = np.zeros((1, 0))
            pieces.append(comp.embed_points(base))
        clouds[index] = np.concatenate(pieces, axis=0)

    for index in c.sorted_indices():
        if index not in act.flows:
            raise StructureError(f"action has no flow on chart {index}")
        v_field = act.vector_field(index)

        for comp in by_chart.get(index, []):
            pts = comp.embed_points(comp.region.sample(rng, samples, 0.0))
            vals = ex.evaluate_map(v_field, pts)
            worst = float(np.abs(vals).max()) if vals.size else 0.0
            if worst > tol:
                raise StructureError(
                    f"generator is {worst:.2e} on a declared fixed component "
                    f"in chart {index}"
                )

        chart = c.charts[index]
        if chart.dim > 0:
            # a deterministic grid is the only reliable way to land on a
            # measure-zero fixed set; random samples supplement it
            grid = chart.probe_grid(9)
            grid = grid[chart.contains(grid, 0.0)]
            extra = chart.sample(rng, samples * 4, 0.0)
            chart_pts = np.concatenate([grid, extra], axis=0) if extra.shape[0] else grid
            if chart_pts.shape[0]:
                vals = ex.evaluate_map(v_field, chart_pts)
                speed = np.abs(vals).max(axis=1)
                scale = float(speed.max())
                calm = chart_pts[speed < max(tol * 10, 1e-3 * scale)]
                cloud = clouds.get(index)
                for p in calm:
                    if cloud is None:
                        raise StructureError(
                            f"undeclared fixed point near {p.tolist()} in chart {index}"
                        )
                    dist = np.abs(chart.diff_wrapped(cloud, p)).max(axis=1)
                    if float(dist.min()) > clearance:
                        raise StructureError(
                            f"undeclared fixed point near {p.tolist()} in chart {index}"
                        )

        # linearized weights at component points
        for comp in by_chart.get(index, []):
            if comp.normal_rank == 0:
                continue
            normal = comp.normal_axes(c.dim(index))
            base = comp.region.sample(rng, min(4, max(samples // 8, 1)), 0.0)
            pts = comp.embed_points(base)
            jac_exprs = [
                [ex.differentiate(v_field[r], f"x{s}") for s in range(c.dim(index))]
                for r in range(c.dim(index))
            ]
            for p in pts:
                a_mat = np.array([
                    [ex.evaluate(entry, tuple(p)) for entry in row]
                    for row in jac_exprs
                ])
                axes = normal if normal is not None else tuple(range(c.dim(index)))
                block = a_mat[np.ix_(axes, axes)]
                eigs = np.linalg.eigvals(block)
                got = sorted(abs(eigs.imag))
                want = sorted(
                    [abs(w) for w in comp.weights for _ in (0, 1)]
                )
                if len(got) != len(want) or any(
                    abs(g - w) > max(tol * 100, 1e-4) for g, w in zip(got, want)
                ):
                    raise StructureError(
                        f"linearized weights {got} contradict declared "
                        f"{comp.weights} in chart {index}"
                    )
                if normal is not None and len(axes) == 2:
                    skew = 0.5 * (block[1, 0] - block[0, 1])
                    if abs(skew - comp.weights[0]) > max(tol * 100, 1e-4):
                        raise StructureError(
                            f"signed weight {skew:.4f} contradicts declared "
                            f"{comp.weights[0]} in chart {index}"
                        )

    # assemble the sub-complex (one component per chart index)
    charts: dict[IndexSet, ChartRegion] = {}
    comp_of: dict[IndexSet, FixedComponentData] = {}
    for comp in fixed:
        if comp.chart in charts:
            raise StructureError(
                "multiple fixed components share a chart index; the fixed "
                "sub-complex supports one per chart"
            )
        charts[comp.chart] = comp.region
        comp_of[comp.chart] = comp
    if EMPTY not in charts:
        raise StructureError("the fixed locus must meet the basement chart")

    overlaps = {}
    from .complexes import OverlapDatum
    for (small, big), ov in sorted(c.overlaps.items()):
        if small not in comp_of or big not in comp_of:
            continue
        cs, cb = comp_of[small], comp_of[big]
        extract_s = _component_extraction(cs)
        extract_b = _component_extraction(cb)
        if extract_s is None or extract_b is None:
            raise StructureError(
                f"restricted overlap {small}<{big} needs coordinate embeds"
            )
        rank = ov.rank - (cb.normal_rank - cs.normal_rank)
        if rank < 0:
            raise StructureError(
                f"normal ranks of {small}<{big} exceed the overlap rank"
            )
        # projection between components: extract after project after embed
        proj_full = ex.compose_map(ov.projection, cb.embed)
        proj = tuple(
            proj_full[axis]
            for axis in sorted(extract_s, key=extract_s.get)
        )
        # fiber parametrization: the small-component embed feeds the parent
        # fiber_param; parent fiber slots tangent to the big component take
        # the surviving fiber coordinates, normal slots are frozen at 0
        fib_axes = tuple(sorted(ov.fiber_axes or ()))
        if not fib_axes and ov.rank > 0:
            raise StructureError(
                f"restricted overlap {small}<{big} needs a coordinate projection"
            )
        normal_big = set(cb.normal_axes(c.dim(big)) or ())
        tangent_fibers = [a for a in fib_axes if a not in normal_big]
        if len(tangent_fibers) != rank:
            raise StructureError(
                f"restricted overlap {small}<{big}: fiber axes do not split"
            )
        par_map: dict[str, ex.ExprLike] = {}
        d_small = c.dim(small)
        for i in range(d_small):
            par_map[f"x{i}"] = cs.embed[i]
        fiber_slot = 0
        for slot, axis in enumerate(fib_axes):
            if axis in tangent_fibers:
                par_map[f"x{d_small + slot}"] = ex.var(cs.dim + fiber_slot)
                fiber_slot += 1
            else:
                par_map[f"x{d_small + slot}"] = ex.num(0.0)
        lifted_chart = tuple(ex.subs(e, par_map) for e in ov.fiber_param)
        fiber_param = tuple(
            lifted_chart[axis]
            for axis in sorted(extract_b, key=extract_b.get)
        )
        region_small = _restrict_region(ov.region_in_small, cs)
        region_big = _restrict_region(ov.region_in_big, cb)
        overlaps[(small, big)] = OverlapDatum(
            small=small, big=big,
            region_in_small=region_small,
            region_in_big=region_big,
            rank=rank,
            projection=proj,
            fiber_param=fiber_param,
            fiber_box=tuple(ov.fiber_box[:rank]),
        )

    return VirtualComplex(
        n=c.n,
        charts=charts,
        overlaps=overlaps,
        virtual_dim=charts[EMPTY].dim,
    )


def _restrict_region(region: ChartRegion, comp: FixedComponentData) -> ChartRegion:
    """Pull a chart region back to component coordinates through the embed."""
    mapping = {f"x{i}": e for i, e in enumerate(comp.embed)}
    extract = _component_extraction(comp)
    if extract is None:
        raise StructureError("restriction needs a coordinate embed")
    box = list(comp.region.box)
    periodic = list(comp.region.periodic)
    for axis, comp_axis in extract.items():
        lo = max(region.box[axis][0], box[comp_axis][0])
        hi = min(region.box[axis][1], box[comp_axis][1])
        box[comp_axis] = (lo, hi)
    constraints = comp.region.constraints + tuple(
        ex.subs(g, {f"x{i}": comp.embed[i] for i in range(len(comp.embed))})
        for g in region.constraints
    )
    return ChartRegion(
        dim=comp.dim,
        box=tuple(box),
        periodic=tuple(periodic),
        constraints=constraints,
        boundary_faces=comp.region.boundary_faces,
        name=f"{region.name}^G",
    )


# ---------------------------------------------------------------------------
# Euler data and localization
# ---------------------------------------------------------------------------

def equivariant_euler(comp: FixedComponentData) -> dict[int, ex.Expression]:
    """Scalar Euler polynomial {u-power: coefficient} of the normal bundle.

    Zero-dimensional components (and curvature-free positive-dimensional
    ones) get (product of weights) * u^m; declared data is used verbatim.
    """
    if comp.euler is not None:
        return dict(comp.euler)
    if any(w == 0 for w in comp.weights):
        raise StructureError("zero weight in an Euler factor")
    m = len(comp.weights)
    prod = 1.0
    for w in comp.weights:
        prod *= w
    return {m: ex.num(prod)}


def _euler_values(euler: dict[int, ex.Expression], pts: np.ndarray,
                  u_value: float) -> np.ndarray:
    total = np.zeros(pts.shape[0])
    for p, coeff in euler.items():
        total += (u_value**p) * ex.compile_expression(coeff)(pts)
    return total


@dataclass
class LocalizationReport:
    u_probes: tuple[float, ...]
    lhs_poly: dict[int, float]
    lhs_values: tuple[float, ...]
    rhs_values: tuple[float, ...]
    residuals: tuple[float, ...]
    per_component: list[dict]

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0

    def to_dict(self) -> dict:
        return {
            "u_probes": list(self.u_probes),
            "lhs_poly": {str(k): v for k, v in sorted(self.lhs_poly.items())},
            "lhs": list(self.lhs_values),
            "rhs": list(self.rhs_values),
            "residuals": list(self.residuals),
            "components": self.per_component,
        }


def integrate_equivariant(c: VirtualComplex, charts: dict[IndexSet, EquivariantChartForm],
                          pou: PartitionOfUnity, q: QuadratureSpec) -> dict[int, float]:
    """Glued integral per power of u (top-degree coefficients only)."""
    out: dict[int, float] = {}
    for index in c.sorted_indices():
        region = c.charts[index]
        eform = charts.get(index)
        if eform is None:
            continue
        w = pou.weights[index]
        for p, f in eform.parts:
            if f.degree != region.dim:
                continue
            val = chart_integral(region, f, q,
                                 weight=lambda pts, w=w: w.values(pts))
            out[p] = out.get(p, 0.0) + val
    return out


def localize(c: VirtualComplex, act: CircleActionData, alpha: EquivariantFamily,
             zeta: EquivariantVirtualFamily, fixed: Sequence[FixedComponentData],
             q: QuadratureSpec, u_probes: Sequence[float] = (0.5, 1.0, 2.0),
             pou: Optional[PartitionOfUnity] = None, shrink: float = 0.8,
             closedness_tol: float = 1e-6, seed: int = 0) -> LocalizationReport:
    """Glued pairing of (alpha, zeta) against its fixed-component evaluation.

    The left side integrates alpha wedge zeta chart by chart; the right
    side sums, over declared fixed components, the weighted restriction
    divided by the scalar equivariant Euler polynomial, times (2 pi)^m for
    a rank-2m normal bundle.  Probes where the Euler value vanishes are
    rejected.
    """
    resid = cartan_residual(c, act, alpha.charts, seed=seed)
    if resid > closedness_tol:
        raise StructureError(
            f"alpha is not equivariantly closed (residual {resid:.2e})"
        )
    pou = pou or build_pou(c, shrink)

    product = {
        i: eq_wedge(alpha.charts[i], zeta.charts[i]) for i in c.sorted_indices()
    }
    lhs_poly = integrate_equivariant(c, product, pou, q)

    per_component = []
    rhs_totals = {u: 0.0 for u in u_probes}
    for comp in fixed:
        chart_dim = c.dim(comp.chart)
        euler = equivariant_euler(comp)
        m = comp.normal_rank // 2
        if comp.normal_rank % 2:
            raise StructureError("normal rank must be even for a circle action")
        restricted = eq_pullback(comp.embed, product[comp.chart], comp.dim)
        w = pou.weights[comp.chart]
        embed = comp.embed

        contribs = {}
        for u_val in u_probes:
            probe_pt = comp.region.probe_grid(1)
            e_at = _euler_values(euler, comp.embed_points(probe_pt), u_val)
            if np.abs(e_at).min() < 1e-12:
                raise StructureError(
                    f"Euler factor vanishes at u={u_val}; probe rejected"
                )

            def integrand(pts, u_val=u_val, w=w, embed=embed):
                ambient = ex.evaluate_map(embed, pts)
                weight = w.values(ambient)
                total = np.zeros(pts.shape[0])
                for p, f in restricted.parts:
                    if f.degree != comp.dim:
                        continue
                    total += (u_val**p) * ex.compile_expression(
                        f.top_coefficient()
                    )(pts)
                return weight * total / _euler_values(euler, pts, u_val)

            if comp.dim == 0:
                pts = np.zeros((1, 0))
                val = float(integrand(pts)[0])
            else:
                from .quadrature import integrate_region
                val = integrate_region(comp.region, integrand, q)
            contribs[u_val] = (TWO_PI**m) * val
            rhs_totals[u_val] += contribs[u_val]
        per_component.append({
            "chart": comp.chart.label,
            "normal_rank": comp.normal_rank,
            "weights": list(comp.weights),
            "contributions": {str(u): v for u, v in contribs.items()},
        })

    lhs_values = tuple(
        sum(coeff * u**p for p, coeff in lhs_poly.items()) for u in u_probes
    )
    rhs_values = tuple(rhs_totals[u] for u in u_probes)
    residuals = tuple(abs(a - b) for a, b in zip(lhs_values, rhs_values))
    return LocalizationReport(
        u_probes=tuple(u_probes),
        lhs_poly=lhs_poly,
        lhs_values=lhs_values,
        rhs_values=rhs_values,
        residuals=residuals,
        per_component=per_component,
    )
