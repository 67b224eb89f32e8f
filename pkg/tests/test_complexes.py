import numpy as np
import pytest

from virtman import expr as ex
from virtman.complexes import (
    OverlapDatum,
    VirtualComplex,
    boundary,
    equivalent,
    from_cover,
    support,
    support_representative,
    validate_patchable,
    validate_virtual,
)
from virtman.errors import StructureError
from virtman.geometry import (
    EMPTY,
    ChartRegion,
    IndexSet,
    box_region,
    interval,
)

from helpers import (
    I1,
    interval_cover_complex,
    line_plane_complex,
    stereo_sphere_complex,
    torus_complex,
)


def test_indexset_basics():
    a = IndexSet.of([3, 1])
    assert a.elems == (1, 3)
    assert a.label == "{1,3}"
    b = IndexSet.of([1])
    assert b.issubset(a)
    assert a.union(b) == a
    assert a.inter(b) == b
    assert sorted([a, b, EMPTY]) == [EMPTY, b, a]


def test_interval_cover_structure():
    c = interval_cover_complex()
    assert set(c.charts) == {EMPTY, I1}
    assert c.virtual_dim == 1
    assert c.overlaps[(EMPTY, I1)].rank == 0


def test_interval_cover_passes_axioms():
    c = interval_cover_complex()
    rep = validate_patchable(c, samples=64, tol=1e-9)
    assert rep.ok, str(rep)
    rep = validate_virtual(c, samples=64)
    assert rep.ok, str(rep)


def test_single_chart_vacuous():
    c = torus_complex()
    rep = validate_patchable(c, samples=16)
    assert rep.ok
    assert all(i.passed for i in rep.items)


def test_mutated_overlap_detected():
    c = interval_cover_complex()
    ov = c.overlaps[(EMPTY, I1)]
    # shrink one side of the shared overlap region: mutual membership breaks
    shrunk = ChartRegion(
        dim=1,
        box=((ov.region_in_small.box[0][0] + 0.06, ov.region_in_small.box[0][1]),),
        constraints=ov.region_in_small.constraints,
        constraint_is_cut=ov.region_in_small.constraint_is_cut,
    )
    bad = OverlapDatum(
        small=EMPTY, big=I1,
        region_in_small=shrunk,
        region_in_big=ov.region_in_big,
        rank=0,
        projection=ov.projection,
        fiber_param=ov.fiber_param,
    )
    c_bad = VirtualComplex(
        n=c.n, charts=dict(c.charts),
        overlaps={(EMPTY, I1): bad}, virtual_dim=1,
    )
    rep = validate_patchable(c_bad, samples=256)
    assert any(i.name == "P4" and not i.passed for i in rep.items), str(rep)


def test_rank_dimension_mismatch_detected():
    c = line_plane_complex()
    ov = c.overlaps[(EMPTY, I1)]
    bad = OverlapDatum(
        small=EMPTY, big=I1,
        region_in_small=ov.region_in_small,
        region_in_big=ov.region_in_big,
        rank=3,
        projection=ov.projection,
        fiber_param=ov.fiber_param,
        fiber_box=ov.fiber_box + ((-1.0, 1.0),),
    )
    c_bad = VirtualComplex(n=1, charts=dict(c.charts),
                           overlaps={(EMPTY, I1): bad}, virtual_dim=1)
    rep = validate_virtual(c_bad, samples=16)
    assert any(i.name == "rank-dimension" and not i.passed for i in rep.items)


def test_line_plane_validates():
    c = line_plane_complex()
    assert validate_patchable(c, samples=32).ok
    rep = validate_virtual(c, samples=64)
    assert rep.ok, str(rep)


def test_sphere_two_charts_validate():
    c = stereo_sphere_complex()
    assert validate_patchable(c, samples=64).ok
    rep = validate_virtual(c, samples=64, tol=1e-7)
    assert rep.ok, str(rep)


def test_missing_chart_reference_rejected():
    base = interval(0.0, 1.0)
    ov = OverlapDatum(
        small=EMPTY, big=I1,
        region_in_small=base, region_in_big=base,
        rank=0, projection=(ex.var(0),), fiber_param=(ex.var(0),),
    )
    with pytest.raises(StructureError):
        VirtualComplex(n=1, charts={EMPTY: base},
                       overlaps={(EMPTY, I1): ov}, virtual_dim=1)


def test_equivalent_examples():
    c = line_plane_complex()
    assert equivalent(c, (EMPTY, [0.3]), (EMPTY, [0.3]))
    assert equivalent(c, (EMPTY, [0.3]), (I1, [0.3, 0.2, -0.1]))
    assert not equivalent(c, (EMPTY, [1.7]), (I1, [0.3, 0.0, 0.0]))


def test_equivalence_reflexive_symmetric():
    c = interval_cover_complex()
    rng = np.random.default_rng(42)
    indices = list(c.charts)
    checked = 0
    for _ in range(1000):
        i = indices[rng.integers(len(indices))]
        p = c.charts[i].sample(rng, 1)
        if p.shape[0] == 0:
            continue
        j = indices[rng.integers(len(indices))]
        q = c.charts[j].sample(rng, 1)
        if q.shape[0] == 0:
            continue
        a, b = (i, p[0]), (j, q[0])
        assert equivalent(c, a, a, tol=1e-8)
        assert equivalent(c, a, b, tol=1e-8) == equivalent(c, b, a, tol=1e-8)
        checked += 1
    assert checked > 900


def test_equivalence_transitive_on_constructed_triples():
    c = line_plane_complex()
    rng = np.random.default_rng(7)
    tol = 1e-8
    count = 0
    for _ in range(200):
        x = rng.uniform(-0.99, 0.99)
        a = (EMPTY, np.array([x]))
        b = (I1, np.array([x, rng.uniform(-1, 1), rng.uniform(-1, 1)]))
        cc = (I1, np.array([x, rng.uniform(-1, 1), rng.uniform(-1, 1)]))
        assert equivalent(c, a, b, tol)
        assert equivalent(c, b, cc, tol)
        assert equivalent(c, a, cc, 3 * tol)
        count += 1
    assert count == 200


def test_support_examples():
    c = line_plane_complex()
    assert support(c, (EMPTY, [0.3])) == EMPTY
    # the whole glued region collapses onto the base, fibers included
    assert support(c, (I1, [0.3, 0.0, 0.0])) == EMPTY
    assert support(c, (I1, [0.3, 0.5, 0.0])) == EMPTY


def test_support_outside_overlap_region():
    # bundle chart with a flap that is not glued to the base: points there
    # are their own minimal representatives
    base = interval(-2.0, 2.0, boundary=False)
    bundle = box_region([(-1.5, 1.5), (-1.0, 1.0), (-1.0, 1.0)], boundary=False)
    glued = box_region([(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)], boundary=False)
    ov = OverlapDatum(
        small=EMPTY, big=I1,
        region_in_small=interval(-1.0, 1.0, boundary=False),
        region_in_big=glued,
        rank=2,
        projection=(ex.var(0),),
        fiber_param=(ex.var(0), ex.var(1), ex.var(2)),
        fiber_box=((-1.0, 1.0), (-1.0, 1.0)),
    )
    c = VirtualComplex(n=1, charts={EMPTY: base, I1: bundle},
                       overlaps={(EMPTY, I1): ov}, virtual_dim=1)
    assert support(c, (I1, [0.3, 0.5, 0.0])) == EMPTY
    assert support(c, (I1, [1.3, 0.0, 0.0])) == I1


def test_support_idempotent():
    c = line_plane_complex()
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = c.charts[I1].sample(rng, 1)[0]
        k, rep = support_representative(c, (I1, p))
        k2, rep2 = support_representative(c, (k, rep))
        assert k2 == k
        assert np.allclose(rep, rep2)


def test_from_cover_single_region():
    u0 = interval(0.0, 1.0, name="U0")
    c = from_cover(1, [u0], shrink=0.75)
    assert set(c.charts) == {EMPTY}
    assert not c.overlaps


def test_from_cover_empty_basement_rejected():
    u0 = interval(0.0, 1.0, boundary=False, name="U0")
    # a huge second region swallows U0 entirely after shrinking
    u1 = interval(-5.0, 6.0, boundary=False, name="U1")
    with pytest.raises(StructureError):
        from_cover(1, [u0, u1], shrink=0.99)


def test_from_cover_random_square_covers_validate():
    rng = np.random.default_rng(2024)
    for trial in range(3):
        regions = [box_region([(0.0, 1.0), (0.0, 1.0)], boundary=True, name="U0")]
        for j in range(2):
            cx, cy = rng.uniform(0.15, 0.85, 2)
            w, h = rng.uniform(0.35, 0.7, 2)
            regions.append(box_region(
                [(cx - w / 2, cx + w / 2), (cy - h / 2, cy + h / 2)],
                boundary=False, name=f"U{j + 1}",
            ))
        c = from_cover(2, regions, shrink=0.75, seed=trial)
        rep = validate_patchable(c, samples=48, tol=1e-9, seed=trial)
        assert rep.ok, f"trial {trial}:\n{rep}"


def test_boundary_interval():
    c = VirtualComplex(n=0, charts={EMPTY: interval(0.0, 1.0)}, overlaps={},
                       virtual_dim=1)
    bc = boundary(c)
    assert len(bc.faces) == 2
    dims = {f.region.dim for f in bc.faces}
    assert dims == {0}
    signs = sorted(f.orientation_sign for f in bc.faces)
    assert signs == [-1.0, 1.0]


def test_boundary_free_torus():
    bc = boundary(torus_complex())
    assert bc.is_empty


def test_boundary_line_plane():
    c = line_plane_complex(boundary=True)
    bc = boundary(c)
    # two base endpoints; the bundle chart has no declared faces
    assert len(bc.faces) == 2
    assert all(f.parent == EMPTY for f in bc.faces)
