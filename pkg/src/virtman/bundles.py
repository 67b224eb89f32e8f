"""Bundles over a chart complex, their sections, Thom families, Euler forms.

A bundle appends one fiber block to every chart; along an overlap the big
chart's fiber splits as (overlap fiber) + (small chart's fiber), recorded
by slot lists rather than by position so interleaved layouts (as produced
by the moduli construction) stay exact.  Integrals over section zero sets
are always ambient integrals against the pulled-back Thom form.
"""

from __future__ import annotations

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
    forms_close,
    pullback,
    reindex_form,
    wedge,
)
from .geometry import IndexSet, product_region
from .integrate import PartitionOfUnity, build_pou, chart_integral
from .quadrature import QuadratureSpec
from .report import ValidationReport


@dataclass(frozen=True)
class BundleOverlapLayout:
    """How the big chart's fiber decomposes over an overlap.

    v_slots: positions (inside the big fiber block) of the overlap-fiber
    copy, listed in overlap-fiber order.  base_slots: positions of the
    small chart's fiber components.  Together they partition the block.
    """

    v_slots: tuple[int, ...]
    base_slots: tuple[int, ...]


@dataclass(frozen=True)
class VirtualBundle:
    """Per-chart fiber ranks plus the overlap identifications."""

    ranks: dict[IndexSet, int]
    fiber_boxes: dict[IndexSet, tuple[tuple[float, float], ...]] = field(
        default_factory=dict
    )
    layouts: dict[tuple[IndexSet, IndexSet], BundleOverlapLayout] = field(
        default_factory=dict
    )

    def rank(self, index: IndexSet) -> int:
        return self.ranks[index]

    def fiber_box(self, index: IndexSet) -> tuple[tuple[float, float], ...]:
        got = self.fiber_boxes.get(index)
        if got is not None:
            return got
        return ((-1.0, 1.0),) * self.ranks[index]

    def layout(self, small: IndexSet, big: IndexSet,
               overlap_rank: int) -> BundleOverlapLayout:
        got = self.layouts.get((small, big))
        if got is not None:
            return got
        k = overlap_rank
        r_big = self.ranks[big]
        return BundleOverlapLayout(
            v_slots=tuple(range(k)),
            base_slots=tuple(range(k, r_big)),
        )

    def total_region(self, c: VirtualComplex, index: IndexSet):
        return product_region(c.charts[index], self.fiber_box(index))


@dataclass(frozen=True)
class VirtualSection:
    """Componentwise section expressions per chart (chart coordinates only)."""

    components: dict[IndexSet, tuple[ex.Expression, ...]]

    def section(self, index: IndexSet) -> tuple[ex.Expression, ...]:
        return self.components[index]


@dataclass(frozen=True)
class ThomFamily:
    """Per-chart Thom forms on the bundle charts (chart + fiber axes)."""

    forms: dict[IndexSet, ChartForm]

    def form(self, index: IndexSet) -> ChartForm:
        return self.forms[index]


def _bundle_overlap_map(c: VirtualComplex, small: IndexSet, big: IndexSet,
                        bundle: VirtualBundle) -> tuple[ex.Expression, ...]:
    """Big bundle chart -> small bundle chart: project the base, extract the
    small fiber block through the layout."""
    ov = c.overlaps[(small, big)]
    d_big = c.dim(big)
    layout = bundle.layout(small, big, ov.rank)
    out = list(ov.projection)
    for slot in layout.base_slots:
        out.append(ex.var(d_big + slot))
    return tuple(out)


def validate_virtual_bundle(c: VirtualComplex, bundle: VirtualBundle,
                            section: VirtualSection, thom: ThomFamily,
                            theta: TransitionData, samples: int = 32,
                            tol: float = 1e-7, seed: int = 0) -> ValidationReport:
    report = ValidationReport(title="virtual-bundle")
    rng = np.random.default_rng(seed)

    for index in c.sorted_indices():
        if index not in bundle.ranks:
            report.add("rank-present", str(index), False, "missing rank")
            continue
        r = bundle.ranks[index]
        ok = True
        detail = ""
        sec = section.components.get(index)
        if sec is None or len(sec) != r:
            ok, detail = False, "section arity mismatch"
        tf = thom.forms.get(index)
        if tf is not None and r > 0 and tf.degree != r:
            ok, detail = False, f"thom degree {tf.degree} != rank {r}"
        report.add("chart-data", str(index), ok, detail)

    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        subject = f"{small}<{big}"
        r_small, r_big = bundle.ranks[small], bundle.ranks[big]
        report.add("rank-additivity", subject,
                   r_big == ov.rank + r_small,
                   f"{r_big} vs {ov.rank}+{r_small}")
        layout = bundle.layout(small, big, ov.rank)
        if sorted(layout.v_slots + layout.base_slots) != list(range(r_big)):
            report.add("layout", subject, False, "slots do not partition the block")
            continue
        report.add("layout", subject, True)

        base = ov.region_in_small.sample(rng, samples, 0.0)
        if base.shape[0] == 0:
            report.add("section-compat", subject, True, "empty overlap")
            continue
        fibers = ov.sample_fibers(rng, base.shape[0])
        lifted = ov.lift(base, fibers)
        s_small = ex.evaluate_map(section.components[small], base)
        s_big = ex.evaluate_map(section.components[big], lifted)
        worst = 0.0
        for t, slot in enumerate(layout.v_slots):
            worst = max(worst, float(np.abs(s_big[:, slot] - fibers[:, t]).max()))
        for t, slot in enumerate(layout.base_slots):
            worst = max(worst, float(np.abs(s_big[:, slot] - s_small[:, t]).max()))
        report.add("section-compat", subject, worst <= tol, f"max dev {worst:.2e}")

        # Thom compatibility on the bundle chart: the transition form moves
        # into the v-slots of the big fiber, the small Thom form pulls back
        # through the bundle overlap map
        tf_small, tf_big = thom.forms.get(small), thom.forms.get(big)
        if tf_small is None or tf_big is None:
            report.add("thom-compat", subject, ov.rank == 0 and tf_small is tf_big,
                       "missing thom form")
            continue
        d_big = c.dim(big)
        dim_big_total = d_big + r_big
        entry = theta.entry(small, big, d_big)
        axis_map = {a: a for a in range(d_big)}
        fib_axes = sorted(ov.fiber_axes or range(c.dim(small), d_big))
        for t, chart_axis in enumerate(fib_axes):
            axis_map[chart_axis] = d_big + layout.v_slots[t]
        theta_on_block = reindex_form(entry, axis_map, dim_big_total)
        bmap = _bundle_overlap_map(c, small, big, bundle)
        small_pulled = pullback(bmap, tf_small.extend(c.dim(small) + r_small)
                                if tf_small.chart_dim < c.dim(small) + r_small
                                else tf_small,
                                source_dim=dim_big_total)
        expected = wedge(theta_on_block, small_pulled)
        region = product_region(ov.region_in_big, bundle.fiber_box(big))
        pts = region.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            report.add("thom-compat", subject, True, "empty region")
            continue
        ok, worst = forms_close(expected, tf_big, pts, max(tol, 1e-6))
        report.add("thom-compat", subject, ok, f"max dev {worst:.2e}")

    return report


def transversality_diagnostic(c: VirtualComplex, section: VirtualSection,
                              samples: int = 128, value_tol: float = 1e-3,
                              rank_tol: float = 1e-3,
                              seed: int = 0) -> ValidationReport:
    """Flag sampled points where the section and its Jacobian degenerate
    together; cheap screening, not a transversality proof."""
    report = ValidationReport(title="transversality")
    rng = np.random.default_rng(seed)
    for index in c.sorted_indices():
        sec = section.components.get(index)
        if not sec:
            report.add("transversal", str(index), True, "rank 0")
            continue
        chart = c.charts[index]
        pts = chart.sample(rng, samples, 0.0)
        if pts.shape[0] == 0:
            continue
        vals = ex.evaluate_map(sec, pts)
        small = np.abs(vals).max(axis=1) < value_tol
        flagged = 0
        witness = ""
        if small.any():
            jac = [
                [ex.differentiate(e, f"x{a}") for a in range(chart.dim)]
                for e in sec
            ]
            for p in pts[small]:
                mat = np.array([
                    [ex.evaluate(entry, tuple(p)) for entry in row] for row in jac
                ])
                sigma = np.linalg.svd(mat, compute_uv=False)
                if sigma.size == 0 or sigma[min(len(sec), chart.dim) - 1] < rank_tol:
                    flagged += 1
                    witness = f"near {p.tolist()}"
        report.add("transversal", str(index), flagged == 0,
                   f"{flagged} degenerate samples {witness}".strip())
    return report


def euler_form(c: VirtualComplex, bundle: VirtualBundle, section: VirtualSection,
               thom: ThomFamily, theta: TransitionData) -> VirtualFormFamily:
    """Pull each Thom form back along the section graph x -> (x, S(x))."""
    charts = {}
    for index in c.sorted_indices():
        d = c.dim(index)
        r = bundle.ranks[index]
        if r == 0:
            charts[index] = ChartForm.constant(d, 1.0)
            continue
        graph = ex.identity_map(d) + tuple(section.components[index])
        charts[index] = pullback(graph, thom.forms[index], source_dim=d)
    return VirtualFormFamily(charts=charts, transition=theta)


def section_euler_factor(dim: int, section_exprs: Sequence[ex.Expression],
                         radius: float) -> ChartForm:
    """Euler factor of a trivialized bundle: S pulled through a normalized
    radial Thom profile; integrals against it realize zero-set integrals."""
    from .forms import thom_form

    rank = len(section_exprs)
    if rank == 0:
        return ChartForm.constant(dim, 1.0)
    profile = thom_form(rank, radius, chart_dim=rank)
    return pullback(tuple(section_exprs), profile, source_dim=dim)


def direct_sum(c: VirtualComplex, b1: VirtualBundle, b2: VirtualBundle,
               s1: VirtualSection, s2: VirtualSection,
               t1: ThomFamily, t2: ThomFamily):
    """Whitney sum: fibers concatenated, sections stacked, Thom forms wedged.

    Only defined over complexes whose overlaps all have rank 0: over a
    positive-rank overlap each summand would claim its own copy of the
    gluing fiber and the slot bookkeeping of the sum becomes ill-posed.
    """
    for (small, big), ov in c.overlaps.items():
        if ov.rank > 0:
            raise StructureError(
                f"direct sum over the rank-{ov.rank} overlap {small}<{big} "
                "is not defined"
            )
    ranks, boxes, sections, thoms = {}, {}, {}, {}
    for index in c.sorted_indices():
        d = c.dim(index)
        r1, r2 = b1.ranks[index], b2.ranks[index]
        ranks[index] = r1 + r2
        boxes[index] = b1.fiber_box(index) + b2.fiber_box(index)
        sections[index] = tuple(s1.components[index]) + tuple(s2.components[index])
        f1 = t1.forms[index].extend(d + r1 + r2) if r1 else None
        if r2:
            shift = {a: a for a in range(d)}
            for t in range(r2):
                shift[d + t] = d + r1 + t
            f2 = reindex_form(t2.forms[index], shift, d + r1 + r2)
        else:
            f2 = None
        if f1 is not None and f2 is not None:
            thoms[index] = wedge(f1, f2)
        elif f1 is not None:
            thoms[index] = f1
        elif f2 is not None:
            thoms[index] = f2
        else:
            thoms[index] = ChartForm.constant(d, 1.0)
    layouts = {}
    for (small, big), ov in c.overlaps.items():
        r1b = b1.ranks[big]
        l1 = b1.layout(small, big, 0)
        l2 = b2.layout(small, big, 0)
        layouts[(small, big)] = BundleOverlapLayout(
            v_slots=(),
            base_slots=tuple(l1.base_slots)
            + tuple(r1b + s for s in l2.base_slots),
        )
    return (
        VirtualBundle(ranks=ranks, fiber_boxes=boxes, layouts=layouts),
        VirtualSection(components=sections),
        ThomFamily(forms=thoms),
    )


def check_splitting(c: VirtualComplex, b1: VirtualBundle, b2: VirtualBundle,
                    s1: VirtualSection, s2: VirtualSection,
                    t1: ThomFamily, t2: ThomFamily, a: FormFamily,
                    q: QuadratureSpec, theta: Optional[TransitionData] = None,
                    pou: Optional[PartitionOfUnity] = None,
                    shrink: float = 0.8):
    """The three readings of pairing a against a split section's Euler form.

    v0 takes the Whitney-sum bundle whole; v1 and v2 integrate over one
    factor's zero set, realized as ambient integrals against that factor's
    Euler form.  Odd-times-odd splittings pick up a Koszul sign on the
    middle term; it is corrected so all three agree.  Returns
    (v0, v1, v2, pairwise residuals).
    """
    theta = theta or TransitionData()
    pou = pou or build_pou(c, shrink)

    sum_bundle, sum_section, sum_thom = direct_sum(c, b1, b2, s1, s2, t1, t2)
    e_sum = euler_form(c, sum_bundle, sum_section, sum_thom, theta)
    e1 = euler_form(c, b1, s1, t1, theta)
    e2 = euler_form(c, b2, s2, t2, theta)

    def paired(factors) -> float:
        total = 0.0
        for index in c.sorted_indices():
            region = c.charts[index]
            form = a.charts[index]
            for fam in factors:
                form = wedge(form, fam.charts[index])
            if form.degree != region.dim:
                raise DegreeError(
                    f"split pairing has degree {form.degree} on a "
                    f"dim-{region.dim} chart"
                )
            w = pou.weights[index]
            total += chart_integral(region, form, q,
                                    weight=lambda pts, w=w: w.values(pts))
        return total

    v0 = paired([e_sum])
    r1 = max(b1.ranks.values())
    r2 = max(b2.ranks.values())
    sign = -1.0 if (r1 % 2 == 1 and r2 % 2 == 1) else 1.0
    v1 = sign * paired([e2, e1])
    v2 = paired([e1, e2])
    residuals = (abs(v0 - v1), abs(v0 - v2), abs(v1 - v2))
    return v0, v1, v2, residuals
