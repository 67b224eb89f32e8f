"""Differential forms on charts and across complexes.

Coefficients are expressions keyed by strictly increasing multi-indices;
absent keys mean zero.  Pullback is fully symbolic (coefficients composed
with the map, differentials expanded through Jacobian minors), so exterior
derivative and pullback commute exactly and identities can be checked by
pointwise sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import expr as ex
from .complexes import OverlapDatum, VirtualComplex
from .errors import DegreeError, StructureError
from .geometry import ChartRegion, IndexSet, box_region
from .quadrature import QuadratureSpec, integrate_region
from .report import ValidationReport

MultiIndex = tuple[int, ...]


def merge_indices(a: MultiIndex, b: MultiIndex) -> Optional[tuple[int, MultiIndex]]:
    """Merge two increasing multi-indices; (sign, merged) or None on collision."""
    if set(a) & set(b):
        return None
    merged = a + b
    # inversion count of the concatenation relative to sorted order
    inversions = 0
    for i, x in enumerate(merged):
        for y in merged[i + 1:]:
            if y < x:
                inversions += 1
    sign = -1 if inversions % 2 else 1
    return sign, tuple(sorted(merged))


def insert_index(i: int, mi: MultiIndex) -> Optional[tuple[int, MultiIndex]]:
    return merge_indices((i,), mi)


@dataclass(frozen=True)
class ChartForm:
    """Degree-k form on one chart; zero coefficients are simply absent."""

    chart_dim: int
    degree: int
    coeffs: tuple[tuple[MultiIndex, ex.Expression], ...] = ()

    def __post_init__(self):
        if not 0 <= self.degree <= self.chart_dim:
            raise DegreeError(
                f"degree {self.degree} outside 0..{self.chart_dim}"
            )
        seen = {}
        for mi, coeff in self.coeffs:
            if len(mi) != self.degree:
                raise DegreeError(f"multi-index {mi} has wrong length")
            if tuple(sorted(set(mi))) != mi:
                raise DegreeError(f"multi-index {mi} must be strictly increasing")
            if mi and mi[-1] >= self.chart_dim:
                raise DegreeError(f"multi-index {mi} exceeds chart dim")
            if mi in seen:
                raise DegreeError(f"duplicate multi-index {mi}")
            seen[mi] = coeff
        # drop structural zeros and canonicalize the order
        clean = tuple(
            (mi, coeff) for mi, coeff in sorted(self.coeffs)
            if ex._const(coeff) != 0.0
        )
        object.__setattr__(self, "coeffs", clean)

    @staticmethod
    def from_dict(chart_dim: int, degree: int,
                  coeffs: Mapping[MultiIndex, ex.ExprLike]) -> "ChartForm":
        items = tuple(
            (tuple(mi), ex.as_expr(c)) for mi, c in coeffs.items()
        )
        return ChartForm(chart_dim, degree, items)

    @staticmethod
    def zero(chart_dim: int, degree: int) -> "ChartForm":
        return ChartForm(chart_dim, degree, ())

    @staticmethod
    def constant(chart_dim: int, value: float) -> "ChartForm":
        return ChartForm.from_dict(chart_dim, 0, {(): ex.num(value)})

    @cached_property
    def table(self) -> dict[MultiIndex, ex.Expression]:
        return dict(self.coeffs)

    def coeff(self, mi: MultiIndex) -> ex.Expression:
        return self.table.get(tuple(mi), ex.Num(0.0))

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def top_coefficient(self) -> ex.Expression:
        if self.degree != self.chart_dim:
            raise DegreeError(
                f"degree {self.degree} form on a dim {self.chart_dim} chart has no top part"
            )
        return self.coeff(tuple(range(self.chart_dim)))

    # -- algebra -------------------------------------------------------------

    def __add__(self, other: "ChartForm") -> "ChartForm":
        if (self.chart_dim, self.degree) != (other.chart_dim, other.degree):
            raise DegreeError("cannot add forms of different type")
        out = dict(self.coeffs)
        for mi, c in other.coeffs:
            out[mi] = ex.add(out.get(mi, ex.Num(0.0)), c)
        return ChartForm.from_dict(self.chart_dim, self.degree, out)

    def __sub__(self, other: "ChartForm") -> "ChartForm":
        return self + other.scale(-1.0)

    def scale(self, factor: ex.ExprLike) -> "ChartForm":
        f = ex.as_expr(factor)
        return ChartForm.from_dict(
            self.chart_dim, self.degree,
            {mi: ex.mul(f, c) for mi, c in self.coeffs},
        )

    def extend(self, new_dim: int) -> "ChartForm":
        """Reinterpret on a chart with extra trailing axes."""
        if new_dim < self.chart_dim:
            raise DegreeError("extend cannot shrink the chart")
        return ChartForm(new_dim, self.degree, self.coeffs)

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, points, u=None, theta=None) -> dict[MultiIndex, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return {
            mi: ex.compile_expression(c)(pts, u=u, theta=theta)
            for mi, c in self.coeffs
        }

    def max_abs(self, points, u=None) -> float:
        vals = self.evaluate(points, u=u)
        if not vals:
            return 0.0
        return max(float(np.abs(v).max()) for v in vals.values())


def wedge(a: ChartForm, b: ChartForm) -> ChartForm:
    """Antisymmetric product; collapses to the zero form above top degree."""
    if a.chart_dim != b.chart_dim:
        raise DegreeError("wedge requires a common chart")
    k = a.degree + b.degree
    if k > a.chart_dim:
        return ChartForm.zero(a.chart_dim, a.chart_dim)
    out: dict[MultiIndex, ex.Expression] = {}
    for mi_a, ca in a.coeffs:
        for mi_b, cb in b.coeffs:
            merged = merge_indices(mi_a, mi_b)
            if merged is None:
                continue
            sign, mi = merged
            term = ex.mul(ca, cb) if sign > 0 else ex.neg(ex.mul(ca, cb))
            out[mi] = ex.add(out.get(mi, ex.Num(0.0)), term)
    return ChartForm.from_dict(a.chart_dim, k, out)


def wedge_all(forms: Iterable[ChartForm]) -> ChartForm:
    forms = list(forms)
    if not forms:
        raise DegreeError("wedge_all needs at least one factor")
    out = forms[0]
    for f in forms[1:]:
        out = wedge(out, f)
    return out


def exterior_derivative(a: ChartForm) -> ChartForm:
    if a.degree >= a.chart_dim:
        return ChartForm.zero(a.chart_dim, a.chart_dim)
    out: dict[MultiIndex, ex.Expression] = {}
    for mi, c in a.coeffs:
        for j in range(a.chart_dim):
            if j in mi:
                continue
            dj = ex.differentiate(c, f"x{j}")
            if ex._const(dj) == 0.0:
                continue
            sign, merged = insert_index(j, mi)
            term = dj if sign > 0 else ex.neg(dj)
            out[merged] = ex.add(out.get(merged, ex.Num(0.0)), term)
    return ChartForm.from_dict(a.chart_dim, a.degree + 1, out)


def contract(a: ChartForm, vector: Sequence[ex.Expression]) -> ChartForm:
    """Interior product with a vector field given componentwise."""
    if len(vector) != a.chart_dim:
        raise DegreeError("vector field arity must match the chart")
    if a.degree == 0:
        return ChartForm.zero(a.chart_dim, 0)
    out: dict[MultiIndex, ex.Expression] = {}
    for mi, c in a.coeffs:
        for pos, axis in enumerate(mi):
            rest = mi[:pos] + mi[pos + 1:]
            term = ex.mul(c, vector[axis])
            if pos % 2:
                term = ex.neg(term)
            out[rest] = ex.add(out.get(rest, ex.Num(0.0)), term)
    return ChartForm.from_dict(a.chart_dim, a.degree - 1, out)


def _sym_det(entries: list[list[ex.Expression]]) -> ex.Expression:
    """Symbolic determinant by permutation expansion (small matrices only)."""
    k = len(entries)
    if k == 0:
        return ex.Num(1.0)
    total: ex.Expression = ex.Num(0.0)
    for perm in itertools.permutations(range(k)):
        inv = sum(
            1 for i in range(k) for j in range(i + 1, k) if perm[i] > perm[j]
        )
        term: ex.Expression = ex.Num(1.0)
        for row, col in enumerate(perm):
            term = ex.mul(term, entries[row][col])
            if ex._const(term) == 0.0:
                break
        if ex._const(term) == 0.0:
            continue
        total = ex.add(total, term if inv % 2 == 0 else ex.neg(term))
    return total


def pullback(map_exprs: Sequence[ex.Expression], target: ChartForm,
             source_dim: int) -> ChartForm:
    """Pull a form back through the map source -> target, symbolically."""
    if len(map_exprs) != target.chart_dim:
        raise DegreeError(
            f"map has {len(map_exprs)} components, target chart dim is {target.chart_dim}"
        )
    k = target.degree
    if k > source_dim:
        return ChartForm.zero(source_dim, source_dim)
    composition = {f"x{i}": g for i, g in enumerate(map_exprs)}
    jac: dict[tuple[int, int], ex.Expression] = {}

    def jac_entry(i: int, j: int) -> ex.Expression:
        if (i, j) not in jac:
            jac[(i, j)] = ex.differentiate(map_exprs[i], f"x{j}")
        return jac[(i, j)]

    out: dict[MultiIndex, ex.Expression] = {}
    for mi, c in target.coeffs:
        c_comp = ex.subs(c, composition)
        if ex._const(c_comp) == 0.0:
            continue
        for ni in itertools.combinations(range(source_dim), k):
            entries = [[jac_entry(mi[a], ni[b]) for b in range(k)] for a in range(k)]
            minor = _sym_det(entries)
            if ex._const(minor) == 0.0:
                continue
            term = ex.mul(c_comp, minor)
            out[ni] = ex.add(out.get(ni, ex.Num(0.0)), term)
    return ChartForm.from_dict(source_dim, k, out)


def reindex_form(a: ChartForm, axis_map: Mapping[int, int], new_dim: int) -> ChartForm:
    """Rename chart axes (injective map), tracking the sort sign per term."""
    rename = {f"x{old}": ex.var(new) for old, new in axis_map.items()}
    out: dict[MultiIndex, ex.Expression] = {}
    for mi, c in a.coeffs:
        mapped = [axis_map[i] for i in mi]
        inversions = sum(
            1 for i in range(len(mapped)) for j in range(i + 1, len(mapped))
            if mapped[i] > mapped[j]
        )
        coeff = ex.subs(c, rename)
        if inversions % 2:
            coeff = ex.neg(coeff)
        out[tuple(sorted(mapped))] = ex.add(
            out.get(tuple(sorted(mapped)), ex.Num(0.0)), coeff
        )
    return ChartForm.from_dict(new_dim, a.degree, out)


def face_restrict(a: ChartForm, axis: int, value: float) -> ChartForm:
    """Pull back along the inclusion of the box face x_axis = value."""
    mapping: dict[str, ex.ExprLike] = {f"x{axis}": ex.num(value)}
    keep = [i for i in range(a.chart_dim) if i != axis]
    for new, old in enumerate(keep):
        mapping[f"x{old}"] = ex.var(new)
    out: dict[MultiIndex, ex.Expression] = {}
    for mi, c in a.coeffs:
        if axis in mi:
            continue
        new_mi = tuple(keep.index(i) for i in mi)
        out[new_mi] = ex.subs(c, mapping)
    return ChartForm.from_dict(a.chart_dim - 1, a.degree, out)


def forms_close(a: ChartForm, b: ChartForm, points, tol: float,
                u=None) -> tuple[bool, float]:
    """Pointwise comparison over shared and missing multi-indices."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    worst = 0.0
    for mi in set(a.table) | set(b.table):
        va = ex.compile_expression(a.coeff(mi))(pts, u=u)
        vb = ex.compile_expression(b.coeff(mi))(pts, u=u)
        if va.size:
            worst = max(worst, float(np.abs(va - vb).max()))
    return worst <= tol, worst


# ---------------------------------------------------------------------------
# Thom profiles
# ---------------------------------------------------------------------------

_NORMALIZATION_POINTS = 1 << 20


@lru_cache(maxsize=None)
def _unit_profile_integral(rank: int) -> float:
    """Integral of bump(|w|^2) over R^rank via the radial reduction."""
    surface = 2.0 * math.pi ** (rank / 2.0) / math.gamma(rank / 2.0)
    radial = ex.mul(
        ex.call("bump", ex.pow_(ex.var(0), 2.0)),
        ex.pow_(ex.var(0), float(rank - 1)) if rank > 1 else ex.Num(1.0),
    )
    fn = ex.compile_expression(radial)
    region = box_region([(0.0, 1.0)], boundary=False)
    q = QuadratureSpec(method="grid", points_per_axis=_NORMALIZATION_POINTS)
    return surface * integrate_region(region, lambda pts: fn(pts), q)


def thom_profile_constant(rank: int, radius: float) -> float:
    """c with fiber integral of c*bump(|v|^2/r^2) dv equal to 1."""
    return 1.0 / (_unit_profile_integral(rank) * radius**rank)


def thom_form(rank: int, radius: float, chart_dim: Optional[int] = None,
              offset: int = 0) -> ChartForm:
    """Normalized radial profile times the fiber volume differentials.

    The form lives on a chart of chart_dim axes whose fiber block starts at
    `offset`; by default the chart is the fiber itself.  Support is strictly
    inside |v| = radius and the fiber integral is 1 up to the cached 1-d
    normalization quadrature.
    """
    if rank < 1:
        raise DegreeError("thom_form needs rank >= 1")
    if radius <= 0:
        raise DegreeError("thom_form needs a positive radius")
    chart_dim = rank + offset if chart_dim is None else chart_dim
    if chart_dim < offset + rank:
        raise DegreeError("chart too small for the fiber block")
    s = ex.esum(ex.pow_(ex.var(offset + i), 2.0) for i in range(rank))
    coeff = ex.mul(
        ex.num(thom_profile_constant(rank, radius)),
        ex.call("bump", ex.div(s, radius * radius)),
    )
    mi = tuple(range(offset, offset + rank))
    return ChartForm.from_dict(chart_dim, rank, {mi: coeff})


def fiber_integral(ov: OverlapDatum, theta: ChartForm, base_point,
                   q: Optional[QuadratureSpec] = None) -> float:
    """Integral of a degree-rank form over one bundle fiber.

    Freezes the base point, parametrizes the fiber through the overlap's
    fiber_param, pulls the form back symbolically, and integrates the top
    fiber component over the fiber box.
    """
    if ov.rank == 0:
        return 1.0
    k = ov.rank
    base_point = np.asarray(base_point, dtype=float)
    d_small = ov.region_in_small.dim
    mapping: dict[str, ex.ExprLike] = {
        f"x{i}": ex.num(float(base_point[i])) for i in range(d_small)
    }
    for j in range(k):
        mapping[f"x{d_small + j}"] = ex.var(j)
    fiber_map = tuple(ex.subs(e, mapping) for e in ov.fiber_param)
    pulled = pullback(fiber_map, theta, source_dim=k)
    top = pulled.coeff(tuple(range(k)))
    fn = ex.compile_expression(top)
    region = box_region(ov.fiber_box, boundary=False)
    per_axis = {1: 1 << 14, 2: 1 << 9, 3: 1 << 7}.get(k, 40)
    if q is not None:
        per_axis = min(q.points_per_axis, per_axis) if q.method == "grid" else per_axis
    spec = QuadratureSpec(method="grid", points_per_axis=per_axis)
    return integrate_region(region, lambda pts: fn(pts), spec)


# ---------------------------------------------------------------------------
# Families across a complex
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormFamily:
    """One form per chart, same degree, compatible under pullback."""

    degree: int
    charts: dict[IndexSet, ChartForm] = field(default_factory=dict)

    def form(self, index: IndexSet) -> ChartForm:
        return self.charts[index]


@dataclass(frozen=True)
class TransitionData:
    """Normalized gluing forms, one per comparable overlapping pair.

    Rank-0 overlaps may omit their entry; it is the constant 1.
    """

    entries: dict[tuple[IndexSet, IndexSet], ChartForm] = field(default_factory=dict)

    def entry(self, small: IndexSet, big: IndexSet,
              big_dim: int) -> ChartForm:
        got = self.entries.get((small, big))
        if got is not None:
            return got
        return ChartForm.constant(big_dim, 1.0)


@dataclass(frozen=True)
class VirtualFormFamily:
    """Forms z_I glued by z_big = pullback(z_small) ^ transition."""

    charts: dict[IndexSet, ChartForm]
    transition: TransitionData

    @property
    def virtual_degree(self) -> int:
        from .geometry import EMPTY
        return self.charts[EMPTY].degree

    def form(self, index: IndexSet) -> ChartForm:
        return self.charts[index]


def family_map(fam: FormFamily, fn) -> FormFamily:
    charts = {i: fn(f) for i, f in fam.charts.items()}
    degree = next(iter(charts.values())).degree if charts else fam.degree
    return FormFamily(degree=degree, charts=charts)


def virtual_family_d(z: VirtualFormFamily) -> VirtualFormFamily:
    """Chartwise exterior derivative; the transition data is closed, so the
    result glues with the same transition."""
    return VirtualFormFamily(
        charts={i: exterior_derivative(f) for i, f in z.charts.items()},
        transition=z.transition,
    )


def family_wedge_virtual(a: FormFamily, z: VirtualFormFamily) -> VirtualFormFamily:
    charts = {}
    for i, zf in z.charts.items():
        charts[i] = wedge(a.charts[i], zf)
    return VirtualFormFamily(charts=charts, transition=z.transition)


def constant_family(c: VirtualComplex, value: float = 1.0) -> FormFamily:
    return FormFamily(
        degree=0,
        charts={
            i: ChartForm.constant(c.dim(i), value) for i in c.charts
        },
    )


def push_through_complex(c: VirtualComplex, z_empty: ChartForm,
                         transition: TransitionData) -> VirtualFormFamily:
    """Build a glued family from its basement form by the defining relation.

    Charts are visited smallest first; each new chart takes its form from
    any already-built smaller neighbor.  Charts unreachable from the empty
    index raise.
    """
    from .geometry import EMPTY

    charts: dict[IndexSet, ChartForm] = {EMPTY: z_empty}
    for index in c.sorted_indices():
        if index in charts:
            continue
        placed = False
        for small in sorted(charts):
            ov = c.overlap(small, index)
            if ov is None:
                continue
            pulled = pullback(ov.projection, charts[small], source_dim=c.dim(index))
            theta = transition.entry(small, index, c.dim(index))
            charts[index] = wedge(pulled, theta)
            placed = True
            break
        if not placed:
            raise StructureError(f"chart {index} is unreachable from the basement")
    return VirtualFormFamily(charts=charts, transition=transition)


# ---------------------------------------------------------------------------
# Family validators
# ---------------------------------------------------------------------------

def validate_form_family(c: VirtualComplex, fam: FormFamily, samples: int = 32,
                         tol: float = 1e-8, seed: int = 0) -> ValidationReport:
    report = ValidationReport(title="form-family")
    rng = np.random.default_rng(seed)
    for index in c.sorted_indices():
        if index not in fam.charts:
            report.add("chart-form-present", str(index), False, "missing form")
            continue
        f = fam.charts[index]
        report.add("chart-form-present", str(index),
                   f.chart_dim == c.dim(index) and f.degree == fam.degree)
    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        pts = ov.region_in_big.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            report.add("pullback-compat", f"{small}<{big}", True, "empty overlap")
            continue
        pulled = pullback(ov.projection, fam.charts[small], source_dim=c.dim(big))
        ok, worst = forms_close(pulled, fam.charts[big], pts, tol)
        report.add("pullback-compat", f"{small}<{big}", ok, f"max dev {worst:.2e}")
    return report


def validate_transition_data(c: VirtualComplex, theta: TransitionData,
                             samples: int = 32, tol: float = 1e-6,
                             q: Optional[QuadratureSpec] = None,
                             seed: int = 0) -> ValidationReport:
    report = ValidationReport(title="transition-data")
    rng = np.random.default_rng(seed)

    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        subject = f"{small}<{big}"
        if ov.rank == 0:
            report.add("normalization", subject, True, "rank 0")
            continue
        entry = theta.entries.get((small, big))
        if entry is None:
            report.add("normalization", subject, False, "missing entry")
            continue
        if entry.degree != ov.rank:
            report.add("normalization", subject, False,
                       f"degree {entry.degree} != rank {ov.rank}")
            continue
        if ov.rank % 2 == 1:
            report.add("odd-rank-note", subject, True,
                       "odd fiber rank: Koszul signs are tracked explicitly")
        base_pts = ov.region_in_small.sample(rng, min(4, samples), 0.0)
        worst = 0.0
        for p in base_pts:
            val = fiber_integral(ov, entry, p, q)
            worst = max(worst, abs(val - 1.0))
        report.add("normalization", subject, worst <= max(tol, 1e-4),
                   f"max |fiber integral - 1| = {worst:.2e}")

    for I, J in c.index_pairs():
        if I.issubset(J) or J.issubset(I):
            continue
        K, Un = I.inter(J), I.union(J)
        subject = f"I={I} J={J}"
        ov_KU = c.overlap(K, Un) if Un in c.charts else None
        ov_IU = c.overlap(I, Un) if Un in c.charts else None
        ov_JU = c.overlap(J, Un) if Un in c.charts else None
        ov_KI = c.overlap(K, I)
        ov_KJ = c.overlap(K, J)
        if ov_KU is None or ov_IU is None or ov_JU is None \
                or ov_KI is None or ov_KJ is None:
            report.add("cocycle", subject, True, "vacuous (no common region)")
            continue
        pts = ov_KU.region_in_big.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            report.add("cocycle", subject, True, "empty region")
            continue
        d_u = c.dim(Un)
        lhs = theta.entry(K, Un, d_u)
        rhs = wedge(
            pullback(ov_IU.projection, theta.entry(K, I, c.dim(I)), source_dim=d_u),
            pullback(ov_JU.projection, theta.entry(K, J, c.dim(J)), source_dim=d_u),
        )
        ok, worst = forms_close(lhs, rhs, pts, tol)
        report.add("cocycle", subject, ok, f"max dev {worst:.2e}")
    return report


def validate_virtual_form(c: VirtualComplex, z: VirtualFormFamily,
                          samples: int = 32, tol: float = 1e-8,
                          seed: int = 0) -> ValidationReport:
    report = ValidationReport(title="virtual-form")
    rng = np.random.default_rng(seed)
    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        subject = f"{small}<{big}"
        z_small, z_big = z.charts.get(small), z.charts.get(big)
        if z_small is None or z_big is None:
            report.add("gluing", subject, False, "missing chart form")
            continue
        if z_big.degree != z_small.degree + ov.rank:
            report.add("gluing", subject, False,
                       f"degree {z_big.degree} != {z_small.degree}+{ov.rank}")
            continue
        pts = ov.region_in_big.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            report.add("gluing", subject, True, "empty overlap")
            continue
        expected = wedge(
            pullback(ov.projection, z_small, source_dim=c.dim(big)),
            z.transition.entry(small, big, c.dim(big)),
        )
        ok, worst = forms_close(expected, z_big, pts, tol)
        report.add("gluing", subject, ok, f"max dev {worst:.2e}")

    # compact support in the interior: coefficients vanish on true boundary
    for index in c.sorted_indices():
        chart = c.charts[index]
        zf = z.charts.get(index)
        if zf is None:
            continue
        worst = 0.0
        for axis, side in sorted(chart.boundary_faces):
            face = chart.face_region(axis, side)
            pts = face.sample(rng, max(samples, 8), 0.0)
            if face.dim == 0:
                pts = np.zeros((1, 0))
            if pts.shape[0] == 0:
                continue
            ambient = ex.evaluate_map(chart.face_inclusion(axis, side), pts)
            worst = max(worst, zf.max_abs(ambient))
        report.add("compact-support", str(index), worst <= 1e-12,
                   f"max boundary value {worst:.2e}")
    return report
