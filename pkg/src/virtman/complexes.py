"""Chart complexes glued along vector-bundle projections.

A complex holds one chart region per index set plus, for every comparable
pair I < J that meets, an overlap datum: the sub-regions being glued, the
bundle projection from the big chart onto the small one, and the fiber
parametrization going back up.  Validators check the patching axioms and
the bundle axioms by sampled mutual membership, never symbolically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .errors import StructureError
from .geometry import (
    EMPTY,
    HI,
    LO,
    ChartRegion,
    IndexSet,
    complement_constraint,
    intersect_regions,
    shrink_region,
    subsets_of,
)
from .report import ValidationReport


@dataclass(frozen=True)
class OverlapDatum:
    """Gluing data for a comparable pair small < big.

    projection maps big-chart coordinates onto small-chart coordinates
    (the bundle map); fiber_param maps (small coords, fiber coords) to
    big-chart coordinates and must be a section of the projection.  For
    rank 0 the fiber_param is the two-sided inverse of the projection.
    """

    small: IndexSet
    big: IndexSet
    region_in_small: ChartRegion
    region_in_big: ChartRegion
    rank: int
    projection: tuple[ex.Expression, ...]
    fiber_param: tuple[ex.Expression, ...]
    fiber_box: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.small.issubset(self.big) or self.small == self.big:
            raise StructureError(f"overlap pair {self.small} < {self.big} is not strict")
        if self.rank < 0:
            raise StructureError("overlap rank must be >= 0")
        if len(self.projection) != self.region_in_small.dim:
            raise StructureError("projection arity must match the small chart dim")
        if len(self.fiber_param) != self.region_in_big.dim:
            raise StructureError("fiber_param arity must match the big chart dim")
        if len(self.fiber_box) != self.rank:
            object.__setattr__(
                self,
                "fiber_box",
                tuple(self.fiber_box) + ((-1.0, 1.0),) * (self.rank - len(self.fiber_box)),
            )

    def project(self, pts: np.ndarray) -> np.ndarray:
        return ex.evaluate_map(self.projection, pts)

    def lift(self, pts: np.ndarray, fibers: Optional[np.ndarray] = None) -> np.ndarray:
        """fiber_param applied to base points and fiber coordinates."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if fibers is None:
            fibers = np.zeros((pts.shape[0], self.rank))
        joined = np.concatenate([pts, np.atleast_2d(fibers)], axis=1)
        return ex.evaluate_map(self.fiber_param, joined)

    def sample_fibers(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.rank == 0:
            return np.zeros((n, 0))
        lows = np.array([lo for lo, _ in self.fiber_box])
        highs = np.array([hi for _, hi in self.fiber_box])
        return rng.uniform(lows, highs, size=(n, self.rank))

    @cached_property
    def fiber_axes(self) -> Optional[tuple[int, ...]]:
        """Big-chart axes not used by a coordinate projection, or None.

        When the projection is a plain coordinate subset (xi per output),
        the remaining axes are the fiber block; general projections return
        None and callers fall back to sampled checks only.
        """
        used = []
        for e in self.projection:
            if isinstance(e, ex.Var) and e.index >= 0:
                used.append(e.index)
            else:
                return None
        if len(set(used)) != len(used):
            return None
        return tuple(a for a in range(self.region_in_big.dim) if a not in set(used))


@dataclass(frozen=True)
class VirtualComplex:
    """Charts indexed by subsets of {1..n} glued along bundle overlaps."""

    n: int
    charts: dict[IndexSet, ChartRegion]
    overlaps: dict[tuple[IndexSet, IndexSet], OverlapDatum]
    virtual_dim: int

    def __post_init__(self):
        if EMPTY not in self.charts:
            raise StructureError("the empty-index chart is required and must be nonempty")
        for (small, big), ov in self.overlaps.items():
            if small != ov.small or big != ov.big:
                raise StructureError("overlap key does not match its datum")
            if small not in self.charts or big not in self.charts:
                raise StructureError(
                    f"overlap {small}<{big} references a missing chart"
                )
        if self.dim(EMPTY) != self.virtual_dim:
            raise StructureError("virtual_dim must equal the empty chart dimension")
        for i_set in self.charts:
            for i in i_set:
                if not 1 <= i <= self.n:
                    raise StructureError(f"chart index {i_set} outside 1..{self.n}")

    def dim(self, index: IndexSet) -> int:
        return self.charts[index].dim

    def overlap(self, small: IndexSet, big: IndexSet) -> Optional[OverlapDatum]:
        return self.overlaps.get((small, big))

    def sorted_indices(self) -> list[IndexSet]:
        return sorted(self.charts)

    def comparable_pairs(self) -> list[tuple[IndexSet, IndexSet]]:
        return sorted(self.overlaps)

    def index_pairs(self) -> list[tuple[IndexSet, IndexSet]]:
        """All unordered chart index pairs, deterministic order."""
        idx = self.sorted_indices()
        return [(a, b) for i, a in enumerate(idx) for b in idx[i + 1:]]

    # -- point navigation ---------------------------------------------------

    def project_point(self, index: IndexSet, target: IndexSet,
                      point: Sequence[float], tol: float) -> Optional[np.ndarray]:
        """Representative of `point` in the target chart, or None.

        target must be a subset of index; requires the point to lie in the
        overlap region of the pair (within tol on constraint values).
        """
        p = np.asarray(point, dtype=float)
        if target == index:
            return p
        ov = self.overlap(target, index)
        if ov is None:
            return None
        if not ov.region_in_big.contains_point(p, tol):
            return None
        return ov.project(p[None, :])[0]

    def lift_map(self, small: IndexSet, big: IndexSet) -> tuple[ex.Expression, ...]:
        """fiber_param with fiber coordinates frozen to zero, as expressions."""
        ov = self.overlap(small, big)
        if ov is None:
            raise StructureError(f"no overlap {small} < {big}")
        d = self.dim(small)
        mapping = {f"x{d + j}": ex.num(0.0) for j in range(ov.rank)}
        return tuple(ex.subs(e, mapping) for e in ov.fiber_param)


# ---------------------------------------------------------------------------
# Sampled set-identity helpers
# ---------------------------------------------------------------------------

def _sample_region(region: Optional[ChartRegion], rng, n, tol):
    if region is None:
        return np.zeros((0, 0))
    return region.sample(rng, n, tol)


def _mutual_membership(report, name, subject, pts_left, member_right,
                       pts_right, member_left, tol):
    """Sampled equality of two sets given samplers and membership tests."""
    ok = True
    detail = ""
    if pts_left.shape[0]:
        bad = ~member_right(pts_left)
        if bad.any():
            ok = False
            detail = f"left point {pts_left[bad][0].tolist()} escapes right set"
    if ok and pts_right.shape[0]:
        bad = ~member_left(pts_right)
        if bad.any():
            ok = False
            detail = f"right point {pts_right[bad][0].tolist()} escapes left set"
    report.add(name, subject, ok, detail)


def validate_patchable(c: VirtualComplex, samples: int = 64, tol: float = 1e-9,
                       seed: int = 0) -> ValidationReport:
    """Check the patching axioms P1..P5 for every index pair by sampling."""
    report = ValidationReport(title="patchable")
    rng = np.random.default_rng(seed)

    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        for region, chart, where in (
            (ov.region_in_small, c.charts[small], "small"),
            (ov.region_in_big, c.charts[big], "big"),
        ):
            pts = region.sample(rng, samples // 4 + 1, 0.0)
            inside = chart.contains(pts, tol).all() if pts.shape[0] else True
            report.add("overlap-inside-chart", f"{small}<{big} ({where})", bool(inside))

    # Comparable pairs: P1-P3 are tautological, but P4 ("the projection maps
    # the big region onto the small one") and P5 ("the big region is the
    # full preimage of the small one") carry content.
    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        subject = f"I={small} J={big}"
        ok, detail = True, ""
        pts = ov.region_in_big.sample(rng, samples, 0.0)
        if pts.shape[0]:
            proj = ov.project(pts)
            inside = ov.region_in_small.contains(proj, tol)
            if not inside.all():
                ok = False
                detail = f"projection escapes at {pts[~inside][0].tolist()}"
        if ok:
            base = ov.region_in_small.sample(rng, samples, 0.0)
            for p in base[: max(samples // 8, 4)]:
                lifted = [ov.lift(p[None, :])]
                for _ in range(2):
                    lifted.append(ov.lift(p[None, :], ov.sample_fibers(rng, 1)))
                if not any(ov.region_in_big.contains(lp, tol)[0] for lp in lifted):
                    ok = False
                    detail = f"no lift of {p.tolist()} lands in the big region"
                    break
        report.add("P4", subject, ok, detail)

        ok, detail = True, ""
        chart_pts = c.charts[big].sample(rng, samples * 2, 0.0)
        if chart_pts.shape[0]:
            proj = ov.project(chart_pts)
            with np.errstate(all="ignore"):
                finite = np.isfinite(proj).all(axis=1)
            cands = chart_pts[finite][
                ov.region_in_small.contains(proj[finite], -tol)
            ]
            if cands.shape[0]:
                inside = ov.region_in_big.contains(cands, tol)
                if not inside.all():
                    ok = False
                    detail = (
                        f"{cands[~inside][0].tolist()} projects into the small "
                        "region but lies outside the big one"
                    )
        report.add("P5", subject, ok, detail)

    for I, J in c.index_pairs():
        if I.issubset(J) or J.issubset(I):
            report.add("P1-P3", f"{I},{J}", True, "comparable pair")
            continue
        K = I.inter(J)
        U = I.union(J)
        subject = f"I={I} J={J}"

        have_U = U in c.charts
        ov_KU = c.overlap(K, U) if have_U else None
        ov_IU = c.overlap(I, U) if have_U else None
        ov_JU = c.overlap(J, U) if have_U else None
        ov_KI = c.overlap(K, I)
        ov_KJ = c.overlap(K, J)

        def member(region: Optional[ChartRegion]):
            if region is None:
                return lambda pts: np.zeros(pts.shape[0], dtype=bool)
            return lambda pts: region.contains(pts, tol)

        # P1 in chart U: X_{U,K} = X_{U,I} n X_{U,J}
        left = _sample_region(ov_KU.region_in_big if ov_KU else None, rng, samples, 0.0)
        both = _sample_region(ov_IU.region_in_big if ov_IU else None, rng, samples, 0.0)
        if both.shape[0] and ov_JU is not None:
            both = both[ov_JU.region_in_big.contains(both, tol)]
        elif ov_JU is None:
            both = np.zeros((0, both.shape[1] if both.ndim == 2 and both.shape[1] else 0))
        _mutual_membership(
            report, "P1", subject,
            left,
            lambda pts: member(ov_IU.region_in_big if ov_IU else None)(pts)
            & member(ov_JU.region_in_big if ov_JU else None)(pts),
            both,
            member(ov_KU.region_in_big if ov_KU else None),
            tol,
        )

        # P2 in chart K: X_{K,U} = X_{K,I} n X_{K,J}
        left = _sample_region(ov_KU.region_in_small if ov_KU else None, rng, samples, 0.0)
        both = _sample_region(ov_KI.region_in_small if ov_KI else None, rng, samples, 0.0)
        if both.shape[0] and ov_KJ is not None:
            both = both[ov_KJ.region_in_small.contains(both, tol)]
        elif ov_KJ is None:
            both = np.zeros((0, 0))
        _mutual_membership(
            report, "P2", subject,
            left,
            lambda pts: member(ov_KI.region_in_small if ov_KI else None)(pts)
            & member(ov_KJ.region_in_small if ov_KJ else None)(pts),
            both,
            member(ov_KU.region_in_small if ov_KU else None),
            tol,
        )

        # P3: projections commute on X_{U,K}
        if ov_KU is not None and ov_IU is not None and ov_JU is not None \
                and ov_KI is not None and ov_KJ is not None:
            pts = ov_KU.region_in_big.sample(rng, samples, 0.0)
            if pts.shape[0]:
                direct = ov_KU.project(pts)
                via_i = ov_KI.project(ov_IU.project(pts))
                via_j = ov_KJ.project(ov_JU.project(pts))
                chart_k = c.charts[K]
                err = 0.0
                for other in (via_i, via_j):
                    err = max(err, float(np.abs(chart_k.diff_wrapped(direct, other)).max())
                              if direct.size else 0.0)
                report.add("P3", subject, err <= max(tol, 1e-7) * 10, f"max dev {err:.2e}")
            else:
                report.add("P3", subject, True, "empty intersection")
        else:
            report.add("P3", subject, True, "vacuous (missing overlap data)")

        # P4 / P5: image of X_{U,K} under the projection to I (resp. J)
        # equals the preimage of X_{K,U} inside X_{I,K} (resp. X_{J,K}).
        for tag, ov_leg, ov_Kleg, leg in (
            ("P4", ov_IU, ov_KI, I),
            ("P5", ov_JU, ov_KJ, J),
        ):
            if ov_KU is None or ov_leg is None or ov_Kleg is None:
                # all three sets should then be empty; verify the preimage is
                pre_ok = True
                if ov_Kleg is not None and ov_KU is not None:
                    pts = ov_Kleg.region_in_big.sample(rng, samples, 0.0)
                    if pts.shape[0]:
                        proj = ov_Kleg.project(pts)
                        pre_ok = not ov_KU.region_in_small.contains(proj, tol).any()
                report.add(tag, subject, pre_ok, "vacuous branch")
                continue
            # forward: image points satisfy the preimage description
            pts = ov_KU.region_in_big.sample(rng, samples, 0.0)
            ok = True
            detail = ""
            if pts.shape[0]:
                img = ov_leg.project(pts)
                in_leg_region = ov_Kleg.region_in_big.contains(img, tol)
                proj_k = ov_Kleg.project(img)
                in_target = ov_KU.region_in_small.contains(proj_k, tol)
                bad = ~(in_leg_region & in_target)
                if bad.any():
                    ok = False
                    detail = f"image point {img[bad][0].tolist()} escapes preimage"
            # reverse: preimage points are hit by some lift
            if ok:
                pts = ov_Kleg.region_in_big.sample(rng, samples, 0.0)
                if pts.shape[0]:
                    proj_k = ov_Kleg.project(pts)
                    pre = pts[ov_KU.region_in_small.contains(proj_k, tol)]
                    for p in pre[: max(samples // 8, 4)]:
                        lifted = [ov_leg.lift(p[None, :])]
                        for _ in range(2):
                            fib = ov_leg.sample_fibers(rng, 1)
                            lifted.append(ov_leg.lift(p[None, :], fib))
                        hits = any(
                            ov_KU.region_in_big.contains(lp, tol)[0] for lp in lifted
                        )
                        if not hits:
                            ok = False
                            detail = f"preimage point {p.tolist()} not in image"
                            break
            report.add(tag, subject, ok, detail)

    return report


def validate_virtual(c: VirtualComplex, samples: int = 64, tol: float = 1e-7,
                     seed: int = 0) -> ValidationReport:
    """Bundle-structure checks on top of patchability."""
    report = ValidationReport(title="virtual")
    rng = np.random.default_rng(seed)

    for small, big in c.comparable_pairs():
        ov = c.overlaps[(small, big)]
        subject = f"{small}<{big}"
        d_small, d_big = c.dim(small), c.dim(big)

        report.add("rank-dimension", subject, d_big - d_small == ov.rank,
                   f"d_big-d_small={d_big - d_small}, rank={ov.rank}")

        base = ov.region_in_small.sample(rng, samples, 0.0)
        if base.shape[0] == 0:
            report.add("bundle-chart", subject, True, "empty overlap region")
            continue

        fibers = ov.sample_fibers(rng, base.shape[0])
        lifted = ov.lift(base, fibers)
        back = ov.project(lifted)
        err = float(np.abs(ov.region_in_small.diff_wrapped(back, base)).max())
        report.add("bundle-chart", subject, err <= tol, f"|phi(psi(x,v))-x| max {err:.2e}")

        in_big = ov.region_in_big.contains(lifted, max(tol, 1e-9) * 10)
        report.add("fiber-into-region", subject, bool(in_big.all()),
                   "" if in_big.all() else f"lift escapes at {lifted[~in_big][0].tolist()}")

        if ov.rank == 0:
            pts_big = ov.region_in_big.sample(rng, samples, 0.0)
            if pts_big.shape[0]:
                round_trip = ov.lift(ov.project(pts_big))
                err = float(np.abs(ov.region_in_big.diff_wrapped(round_trip, pts_big)).max())
                report.add("rank0-bijection", subject, err <= tol,
                           f"|psi(phi(y))-y| max {err:.2e}")

        # orientation compatibility: the parametrization must preserve the
        # coordinate orientation (sampled Jacobian determinant sign)
        jac_rows = []
        d_total = d_small + ov.rank
        for e in ov.fiber_param:
            jac_rows.append([ex.differentiate(e, f"x{a}") for a in range(d_total)])
        joined = np.concatenate([base, fibers], axis=1)
        mats = np.empty((base.shape[0], d_big, d_total))
        for r, row in enumerate(jac_rows):
            for s, entry in enumerate(row):
                mats[:, r, s] = ex.compile_expression(entry)(joined)
        if d_big == d_total:
            dets = np.linalg.det(mats)
            report.add("orientation", subject, bool((dets > 0).all()),
                       f"min det {dets.min():.2e}")

    # rank additivity along chains
    for small, mid in c.comparable_pairs():
        for mid2, big in c.comparable_pairs():
            if mid != mid2:
                continue
            ov_sb = c.overlap(small, big)
            if ov_sb is None:
                continue
            r_chain = c.overlaps[(small, mid)].rank + c.overlaps[(mid, big)].rank
            report.add("rank-chain", f"{small}<{mid}<{big}",
                       ov_sb.rank == r_chain,
                       f"rank {ov_sb.rank} vs chain {r_chain}")

    # fiber-product dimension identity for incomparable pairs
    for I, J in c.index_pairs():
        if I.issubset(J) or J.issubset(I):
            continue
        U, K = I.union(J), I.inter(J)
        if U in c.charts and K in c.charts:
            lhs = c.dim(U) - c.dim(K)
            rhs = (c.dim(I) - c.dim(K)) + (c.dim(J) - c.dim(K))
            report.add("fiber-product-dim", f"I={I} J={J}", lhs == rhs,
                       f"{lhs} vs {rhs}")
    return report


# ---------------------------------------------------------------------------
# Equivalence relation and supports
# ---------------------------------------------------------------------------

def equivalent(c: VirtualComplex, a, b, tol: float = 1e-8) -> bool:
    """Whether two chart points represent the same virtual-space point.

    a and b are (IndexSet, point) pairs.  Searches every common sub-index K
    and compares the projected representatives within tol (componentwise,
    periodic axes wrapped).
    """
    (I, x), (J, y) = a, b
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for K in subsets_of(I.inter(J)):
        if K not in c.charts:
            continue
        px = c.project_point(I, K, x, tol)
        py = c.project_point(J, K, y, tol)
        if px is None or py is None:
            continue
        d = c.charts[K].diff_wrapped(px, py)
        if d.size == 0 or float(np.abs(d).max()) <= tol:
            return True
    return False


def support_representative(c: VirtualComplex, a, tol: float = 1e-8):
    """(minimal index set, representative point) for a chart point."""
    I, x = a
    x = np.asarray(x, dtype=float)
    for K in subsets_of(I):
        if K not in c.charts:
            continue
        px = c.project_point(I, K, x, tol)
        if px is not None:
            return K, px
    return I, x


def support(c: VirtualComplex, a, tol: float = 1e-8) -> IndexSet:
    return support_representative(c, a, tol)[0]


# ---------------------------------------------------------------------------
# Cover construction
# ---------------------------------------------------------------------------

def from_cover(ambient_dim: int, cover: Sequence[ChartRegion], shrink: float,
               seed: int = 0, probes: int = 64) -> VirtualComplex:
    """Complex of a one-space open cover, all gluing maps identities.

    cover[0] plays the basement role: the empty-index chart is
    cover[0] minus the shrunk later regions; the chart of a nonempty index
    set I is the intersection of its regions minus the shrunk others.
    """
    if not cover:
        raise StructureError("cover must contain at least one region")
    for r in cover:
        if r.dim != ambient_dim:
            raise StructureError("cover regions must share the ambient dimension")
    n = len(cover) - 1
    shrunk = {j: shrink_region(cover[j], shrink) for j in range(1, n + 1)}

    def minus_shrunk(base: ChartRegion, skip: IndexSet, name: str) -> ChartRegion:
        extra = [complement_constraint(shrunk[j]) for j in range(1, n + 1) if j not in skip]
        return ChartRegion(
            dim=base.dim,
            box=base.box,
            periodic=base.periodic,
            constraints=base.constraints + tuple(extra),
            boundary_faces=base.boundary_faces,
            free_faces=base.free_faces,
            constraint_is_cut=base.constraint_is_cut + (True,) * len(extra),
            name=name,
        )

    charts: dict[IndexSet, ChartRegion] = {}
    x_empty = minus_shrunk(cover[0], EMPTY, "X{}")
    if x_empty.looks_empty(probes, seed=seed + 1):
        raise StructureError("the empty-index chart computes empty for this cover")
    charts[EMPTY] = x_empty

    full = IndexSet.of(range(1, n + 1))
    for I in subsets_of(full):
        if len(I) == 0:
            continue
        inter = None
        try:
            for i in I:
                inter = cover[i] if inter is None else intersect_regions(inter, cover[i])
        except StructureError:
            continue  # boxes do not even meet
        chart = minus_shrunk(inter, I, f"X{I.label}")
        if chart.looks_empty(probes, seed=seed + 1 + sum(I.elems)):
            continue
        charts[I] = chart

    overlaps: dict[tuple[IndexSet, IndexSet], OverlapDatum] = {}
    ident = ex.identity_map(ambient_dim)
    order = sorted(charts)
    for a_pos, small in enumerate(order):
        for big in order[a_pos + 1:]:
            if not small.issubset(big):
                continue
            try:
                region = intersect_regions(charts[small], charts[big],
                                           name=f"X{small.label}&X{big.label}")
            except StructureError:
                continue
            if region.looks_empty(probes, seed=seed + 7):
                continue
            overlaps[(small, big)] = OverlapDatum(
                small=small,
                big=big,
                region_in_small=region,
                region_in_big=region,
                rank=0,
                projection=ident,
                fiber_param=ident,
            )

    return VirtualComplex(n=n, charts=charts, overlaps=overlaps,
                          virtual_dim=ambient_dim)


# ---------------------------------------------------------------------------
# Boundary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryFace:
    """One boundary face of one chart, with its inclusion map back in."""

    parent: IndexSet
    axis: int
    side: int
    region: ChartRegion
    inclusion: tuple[ex.Expression, ...]
    orientation_sign: float

    @property
    def label(self) -> str:
        side = "+" if self.side == HI else "-"
        return f"dX{self.parent.label}[x{self.axis}{side}]"


@dataclass(frozen=True)
class BoundaryComplex:
    """All declared boundary faces of a complex, one lower dimension each.

    Faces of bundle charts sit over faces of base charts through the parent
    overlap maps, so the parent partition of unity restricts to a partition
    of unity here; integration uses that directly.
    """

    parent: VirtualComplex
    faces: tuple[BoundaryFace, ...]

    @property
    def is_empty(self) -> bool:
        return not self.faces


def boundary(c: VirtualComplex, samples: int = 32, tol: float = 1e-7,
             seed: int = 0) -> BoundaryComplex:
    """Boundary faces of every chart, with sampled bundle compatibility.

    Raises StructureError when an overlap maps a boundary face of one chart
    off the boundary of the other.
    """
    rng = np.random.default_rng(seed)
    faces = []
    for index in c.sorted_indices():
        chart = c.charts[index]
        for axis, side in sorted(chart.boundary_faces):
            region = chart.face_region(axis, side)
            if region.dim > 0 and region.looks_empty(seed=seed + 3):
                continue
            sign = (1.0 if side == HI else -1.0) * (-1.0) ** axis
            faces.append(BoundaryFace(
                parent=index,
                axis=axis,
                side=side,
                region=region,
                inclusion=chart.face_inclusion(axis, side),
                orientation_sign=sign,
            ))

    # bundle-boundary compatibility: faces of the big chart project onto
    # faces of the small chart and vice versa under lifting
    for (small, big), ov in sorted(c.overlaps.items()):
        small_faces = {(f.axis, f.side): f for f in faces if f.parent == small}
        big_faces = {(f.axis, f.side): f for f in faces if f.parent == big}
        for (axis, side), face in sorted(big_faces.items()):
            sample = face.region.sample(rng, samples, 0.0)
            if sample.shape[0] == 0:
                continue
            ambient = ex.evaluate_map(face.inclusion, sample)
            on_overlap = ov.region_in_big.contains(ambient, tol)
            if not on_overlap.any():
                continue
            proj = ov.project(ambient[on_overlap])
            hit = np.zeros(proj.shape[0], dtype=bool)
            for (s_axis, s_side) in small_faces:
                value = c.charts[small].face_value(s_axis, s_side)
                hit |= np.abs(proj[:, s_axis] - value) <= max(tol, 1e-9) * 100
            if not hit.all():
                raise StructureError(
                    f"boundary face {face.label} projects off the boundary of X{small.label}"
                )
        for (axis, side), face in sorted(small_faces.items()):
            sample = face.region.sample(rng, samples, 0.0)
            if sample.shape[0] == 0:
                continue
            ambient = ex.evaluate_map(face.inclusion, sample)
            on_overlap = ov.region_in_small.contains(ambient, tol)
            if not on_overlap.any():
                continue
            lifted = ov.lift(ambient[on_overlap])
            hit = np.zeros(lifted.shape[0], dtype=bool)
            for (b_axis, b_side) in big_faces:
                value = c.charts[big].face_value(b_axis, b_side)
                hit |= np.abs(lifted[:, b_axis] - value) <= max(tol, 1e-9) * 100
            if lifted.shape[0] and not hit.all():
                raise StructureError(
                    f"boundary face {face.label} lifts off the boundary of X{big.label}"
                )

    return BoundaryComplex(parent=c, faces=tuple(faces))
