"""Index sets and chart regions.

A chart region is a coordinate box with optional periodic axes and a list
of smooth constraints g with the convention "inside iff g(x) <= 0 for all
g".  Set algebra on regions (intersection, complement of a shrunk region)
is done in constraint space, so curved regions cost nothing extra and
membership stays a pointwise evaluation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from . import expr as ex
from .errors import StructureError


@dataclass(frozen=True, order=True)
class IndexSet:
    """Canonical (sorted) subset of {1..n}; orders by (size, elements)."""

    sort_key: tuple = field(init=False, repr=False)
    elems: tuple[int, ...] = ()

    def __post_init__(self):
        canon = tuple(sorted(set(self.elems)))
        object.__setattr__(self, "elems", canon)
        object.__setattr__(self, "sort_key", (len(canon), canon))

    @staticmethod
    def of(items: Iterable[int]) -> "IndexSet":
        return IndexSet(tuple(items))

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(self.elems + other.elems)

    def inter(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(tuple(i for i in self.elems if i in set(other.elems)))

    def minus(self, other: "IndexSet") -> "IndexSet":
        drop = set(other.elems)
        return IndexSet(tuple(i for i in self.elems if i not in drop))

    def issubset(self, other: "IndexSet") -> bool:
        return set(self.elems) <= set(other.elems)

    def __contains__(self, i: int) -> bool:
        return i in self.elems

    def __iter__(self):
        return iter(self.elems)

    def __len__(self):
        return len(self.elems)

    @property
    def label(self) -> str:
        return "{" + ",".join(str(i) for i in self.elems) + "}"

    def __str__(self):
        return self.label


EMPTY = IndexSet()


def subsets_of(s: IndexSet) -> list[IndexSet]:
    """All subsets, smallest first, deterministic order."""
    out = []
    for r in range(len(s) + 1):
        for combo in itertools.combinations(s.elems, r):
            out.append(IndexSet(combo))
    return out


LO, HI = -1, 1


@dataclass(frozen=True)
class ChartRegion:
    """Box + constraints region in chart coordinates.

    boundary_faces lists the (axis, side) box faces that are genuine
    boundary of the underlying space; every other face is an interior cut
    produced by the covering construction.  side is -1 for the low face,
    +1 for the high face.  Periodic axes have no faces.
    """

    dim: int
    box: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...] = ()
    constraints: tuple[ex.Expression, ...] = ()
    boundary_faces: frozenset[tuple[int, int]] = frozenset()
    free_faces: frozenset[tuple[int, int]] = frozenset()
    constraint_is_cut: tuple[bool, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.dim < 0:
            raise StructureError("region dimension must be >= 0")
        if len(self.box) != self.dim:
            raise StructureError(f"box has {len(self.box)} axes for dim {self.dim}")
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * self.dim)
        if len(self.periodic) != self.dim:
            raise StructureError("periodic flags must match dim")
        for lo, hi in self.box:
            if not (hi > lo):
                raise StructureError(f"empty box axis [{lo}, {hi}]")
        if not self.constraint_is_cut:
            object.__setattr__(
                self, "constraint_is_cut", (False,) * len(self.constraints)
            )
        if len(self.constraint_is_cut) != len(self.constraints):
            raise StructureError("constraint_is_cut must match constraints")
        for axis, side in self.boundary_faces | self.free_faces:
            if not (0 <= axis < self.dim) or side not in (LO, HI):
                raise StructureError(f"bad face ({axis}, {side})")
            if self.periodic[axis]:
                raise StructureError(f"periodic axis {axis} cannot carry a face")
        if self.boundary_faces & self.free_faces:
            raise StructureError("a face cannot be both boundary and free")
        for g in self.constraints:
            top = ex.max_coord(g)
            if top >= self.dim:
                raise StructureError(
                    f"constraint uses x{top} but region has dim {self.dim}"
                )

    # -- basic measures ----------------------------------------------------

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.box)

    @property
    def box_volume(self) -> float:
        v = 1.0
        for w in self.widths:
            v *= w
        return v

    @cached_property
    def _constraint_fns(self):
        return [ex.compile_expression(g) for g in self.constraints]

    # -- membership ---------------------------------------------------------

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Reduce periodic axes into the fundamental box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        for a in range(self.dim):
            if self.periodic[a]:
                lo, hi = self.box[a]
                w = hi - lo
                pts[:, a] = lo + np.mod(pts[:, a] - lo, w)
        return pts

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of membership; tol loosens both box and constraints."""
        pts = self.wrap(points)
        if self.dim == 0:
            return np.ones(pts.shape[0], dtype=bool)
        ok = np.ones(pts.shape[0], dtype=bool)
        for a, (lo, hi) in enumerate(self.box):
            if self.periodic[a]:
                continue
            ok &= (pts[:, a] >= lo - tol) & (pts[:, a] <= hi + tol)
        for fn in self._constraint_fns:
            with np.errstate(all="ignore"):
                vals = fn(pts)
            ok &= np.where(np.isfinite(vals), vals <= tol, False)
        return ok

    def contains_point(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return bool(self.contains(np.asarray([point], dtype=float), tol)[0])

    def diff_wrapped(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Componentwise difference respecting periodic wrap."""
        d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
        for a in range(self.dim):
            if self.periodic[a]:
                w = self.box[a][1] - self.box[a][0]
                d[..., a] = (d[..., a] + 0.5 * w) % w - 0.5 * w
        return d

    # -- sampling ------------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int, tol: float = 0.0,
               max_tries: int = 64) -> np.ndarray:
        """Up to n interior points by rejection from the box; may return fewer."""
        if self.dim == 0:
            return np.zeros((min(n, 1), 0))
        lows = np.array([lo for lo, _ in self.box])
        highs = np.array([hi for _, hi in self.box])
        got = []
        need = n
        for _ in range(max_tries):
            cand = rng.uniform(lows, highs, size=(max(4 * need, 64), self.dim))
            mask = self.contains(cand, tol)
            hits = cand[mask]
            if hits.size:
                got.append(hits[:need])
                need -= len(got[-1])
            if need <= 0:
                break
        if not got:
            return np.zeros((0, self.dim))
        return np.concatenate(got, axis=0)

    def sample_or_fail(self, rng, n, tol=0.0, what="region") -> np.ndarray:
        pts = self.sample(rng, n, tol)
        if pts.shape[0] == 0:
            raise StructureError(f"could not sample any point of {what or self.name}")
        return pts

    def probe_grid(self, per_axis: int = 5) -> np.ndarray:
        """Small deterministic grid of box points (not membership filtered)."""
        if self.dim == 0:
            return np.zeros((1, 0))
        axes = [
            np.linspace(lo, hi, per_axis + 2)[1:-1] for lo, hi in self.box
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def looks_empty(self, probes: int = 64, tol: float = 0.0,
                    seed: int = 1) -> bool:
        """Sampled emptiness test: no probe point passes membership."""
        rng = np.random.default_rng(seed)
        pts = self.sample(rng, probes, tol, max_tries=8)
        if pts.shape[0]:
            return False
        grid = self.probe_grid(4)
        return not bool(self.contains(grid, tol).any())

    # -- faces ----------------------------------------------------------------

    def face_value(self, axis: int, side: int) -> float:
        return self.box[axis][0] if side == LO else self.box[axis][1]

    def face_region(self, axis: int, side: int) -> "ChartRegion":
        """The (dim-1)-region of a box face, coordinates reindexed."""
        value = self.face_value(axis, side)
        keep = [a for a in range(self.dim) if a != axis]
        mapping = {f"x{axis}": ex.num(value)}
        for new, old in enumerate(keep):
            mapping[f"x{old}"] = ex.var(new)
        constraints = tuple(ex.subs(g, mapping) for g in self.constraints)
        faces = frozenset(
            (keep.index(a), s) for a, s in self.boundary_faces if a != axis
        )
        free = frozenset(
            (keep.index(a), s) for a, s in self.free_faces if a != axis
        )
        return ChartRegion(
            dim=self.dim - 1,
            box=tuple(self.box[a] for a in keep),
            periodic=tuple(self.periodic[a] for a in keep),
            constraints=constraints,
            boundary_faces=faces,
            free_faces=free,
            constraint_is_cut=self.constraint_is_cut,
            name=f"{self.name}|x{axis}={value:g}",
        )

    def face_inclusion(self, axis: int, side: int) -> tuple[ex.Expression, ...]:
        """Chart coordinates as expressions of the face coordinates."""
        value = self.face_value(axis, side)
        out = []
        k = 0
        for a in range(self.dim):
            if a == axis:
                out.append(ex.num(value))
            else:
                out.append(ex.var(k))
                k += 1
        return tuple(out)


# ---------------------------------------------------------------------------
# Region algebra
# ---------------------------------------------------------------------------

def box_face_constraints(region: ChartRegion) -> list[ex.Expression]:
    """Box faces rewritten as constraints (periodic axes contribute none)."""
    out = []
    for a, (lo, hi) in enumerate(region.box):
        if region.periodic[a]:
            continue
        out.append(ex.sub(ex.num(lo), ex.var(a)))
        out.append(ex.sub(ex.var(a), ex.num(hi)))
    return out


def complement_constraint(region: ChartRegion) -> ex.Expression:
    """Single constraint g <= 0 holding exactly outside the region.

    Inside the region all of its constraints (and folded box faces) are
    <= 0, so their max is <= 0; the complement is -max(...) <= 0.
    """
    gs = box_face_constraints(region) + list(region.constraints)
    if not gs:
        raise StructureError("cannot complement an unconstrained region")
    m = gs[0]
    for g in gs[1:]:
        m = ex.emax(m, g)
    return ex.neg(m)


def shrink_region(region: ChartRegion, factor: float) -> ChartRegion:
    """Dilate the region toward its box center by `factor` in (0, 1).

    Implemented as the coordinate substitution x -> c + (x - c)/factor, which
    shrinks any constraint region exactly; box extents scale the same way.
    Periodic axes are left alone.
    """
    if not (0.0 < factor < 1.0):
        raise StructureError("shrink factor must lie in (0, 1)")
    centers = [(lo + hi) / 2.0 for lo, hi in region.box]
    mapping = {}
    new_box = []
    for a, (lo, hi) in enumerate(region.box):
        if region.periodic[a]:
            new_box.append((lo, hi))
            continue
        c = centers[a]
        mapping[f"x{a}"] = ex.add(ex.num(c), ex.div(ex.sub(ex.var(a), ex.num(c)), factor))
        half = (hi - lo) / 2.0 * factor
        new_box.append((c - half, c + half))
    return ChartRegion(
        dim=region.dim,
        box=tuple(new_box),
        periodic=region.periodic,
        constraints=tuple(ex.subs(g, mapping) for g in region.constraints),
        boundary_faces=frozenset(),
        name=f"shrink({region.name or 'region'},{factor:g})",
    )


def intersect_regions(a: ChartRegion, b: ChartRegion, name: str = "") -> ChartRegion:
    """Intersection in a common coordinate space."""
    if a.dim != b.dim:
        raise StructureError("cannot intersect regions of different dimension")
    if a.periodic != b.periodic:
        raise StructureError("cannot intersect regions with mismatched periodicity")
    box = []
    faces = set()
    free = set()
    for ax in range(a.dim):
        lo = max(a.box[ax][0], b.box[ax][0])
        hi = min(a.box[ax][1], b.box[ax][1])
        if not hi > lo:
            raise StructureError(f"empty intersection on axis {ax}")
        box.append((lo, hi))
        # a face of the intersection inherits its kind from whichever region
        # contributed that face
        for src in (a, b):
            if not src.periodic[ax]:
                if src.box[ax][0] == lo:
                    if (ax, LO) in src.boundary_faces:
                        faces.add((ax, LO))
                    if (ax, LO) in src.free_faces:
                        free.add((ax, LO))
                if src.box[ax][1] == hi:
                    if (ax, HI) in src.boundary_faces:
                        faces.add((ax, HI))
                    if (ax, HI) in src.free_faces:
                        free.add((ax, HI))
    return ChartRegion(
        dim=a.dim,
        box=tuple(box),
        periodic=a.periodic,
        constraints=a.constraints + b.constraints,
        boundary_faces=frozenset(faces),
        free_faces=frozenset(free - faces),
        constraint_is_cut=a.constraint_is_cut + b.constraint_is_cut,
        name=name or f"({a.name})&({b.name})",
    )


def product_region(base: ChartRegion, fiber_box: Sequence[tuple[float, float]],
                   name: str = "") -> ChartRegion:
    """base x box, fiber axes appended after the base axes."""
    k = len(fiber_box)
    return ChartRegion(
        dim=base.dim + k,
        box=base.box + tuple((float(lo), float(hi)) for lo, hi in fiber_box),
        periodic=base.periodic + (False,) * k,
        constraints=base.constraints,
        boundary_faces=base.boundary_faces,
        free_faces=base.free_faces,
        constraint_is_cut=base.constraint_is_cut,
        name=name or (f"{base.name}xR{k}" if base.name else ""),
    )


def interval(lo: float, hi: float, boundary: bool = True, name: str = "") -> ChartRegion:
    faces = frozenset({(0, LO), (0, HI)}) if boundary else frozenset()
    return ChartRegion(dim=1, box=((lo, hi),), boundary_faces=faces, name=name)


def box_region(bounds: Sequence[tuple[float, float]], periodic=None,
               boundary: bool = True, name: str = "") -> ChartRegion:
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    d = len(bounds)
    periodic = tuple(periodic) if periodic is not None else (False,) * d
    faces = set()
    if boundary:
        for a in range(d):
            if not periodic[a]:
                faces.add((a, LO))
                faces.add((a, HI))
    return ChartRegion(dim=d, box=bounds, periodic=periodic,
                       boundary_faces=frozenset(faces), name=name)


def disk_region(center: Sequence[float], radius: float, box_pad: float = 0.0,
                name: str = "") -> ChartRegion:
    """Closed ball as a single smooth constraint inside its bounding box."""
    c = [float(v) for v in center]
    r = float(radius)
    d = len(c)
    g = ex.esum(ex.pow_(ex.sub(ex.var(a), ex.num(c[a])), 2.0) for a in range(d))
    g = ex.sub(g, ex.num(r * r))
    pad = box_pad if box_pad > 0 else 0.0
    bounds = tuple((ci - r - pad, ci + r + pad) for ci in c)
    return ChartRegion(dim=d, box=bounds, constraints=(g,), name=name)
