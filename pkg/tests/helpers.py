"""Shared fixture builders for the test suite."""

import numpy as np

from virtman import expr as ex
from virtman.complexes import OverlapDatum, VirtualComplex, from_cover
from virtman.equivariant import (
    CircleActionData,
    EquivariantChartForm,
    EquivariantFamily,
    EquivariantVirtualFamily,
    FixedComponentData,
    equivariant_thom_form,
)
from virtman.forms import (
    ChartForm,
    FormFamily,
    TransitionData,
    VirtualFormFamily,
    push_through_complex,
    thom_form,
)
from virtman.geometry import EMPTY, ChartRegion, IndexSet, box_region, interval

I1 = IndexSet.of([1])

E = ex.parse_expression


def interval_cover_complex(shrink=0.75):
    """Two-interval cover of [0, 1]; all gluing maps identities."""
    u0 = ChartRegion(dim=1, box=((0.0, 0.6),), boundary_faces=frozenset({(0, -1)}),
                     name="U0")
    u1 = ChartRegion(dim=1, box=((0.4, 1.0),), boundary_faces=frozenset({(0, 1)}),
                     name="U1")
    return from_cover(1, [u0, u1], shrink=shrink)


def interval_bump_family(c, center=0.5, width=0.45):
    f = ex.call("bump", ex.div(ex.sub(ex.var(0), ex.num(center)), width))
    z0 = ChartForm.from_dict(1, 1, {(0,): f})
    return push_through_complex(c, z0, TransitionData())


def line_plane_complex(boundary=True, base_halfwidth=2.0, overlap_halfwidth=1.0,
                       fiber_halfwidth=1.0):
    """Interval glued to a rank-2 bundle block over its middle."""
    faces = frozenset({(0, -1), (0, 1)}) if boundary else frozenset()
    free = frozenset() if boundary else frozenset({(0, -1), (0, 1)})
    base = ChartRegion(dim=1, box=((-base_halfwidth, base_halfwidth),),
                       boundary_faces=faces, free_faces=free, name="base")
    h = overlap_halfwidth
    fh = fiber_halfwidth
    bundle = box_region([(-h, h), (-fh, fh), (-fh, fh)], boundary=False,
                        name="bundle")
    ov = OverlapDatum(
        small=EMPTY,
        big=I1,
        region_in_small=interval(-h, h, boundary=False, name="base-overlap"),
        region_in_big=bundle,
        rank=2,
        projection=(ex.var(0),),
        fiber_param=(ex.var(0), ex.var(1), ex.var(2)),
        fiber_box=((-fh, fh), (-fh, fh)),
    )
    return VirtualComplex(
        n=1,
        charts={EMPTY: base, I1: bundle},
        overlaps={(EMPTY, I1): ov},
        virtual_dim=1,
    )


def line_plane_theta(radius=0.8):
    return TransitionData(entries={
        (EMPTY, I1): thom_form(2, radius, chart_dim=3, offset=1),
    })


def line_plane_family(c, theta=None, support=0.9):
    theta = theta or line_plane_theta()
    f = ex.call("bump", ex.div(ex.var(0), support))
    z0 = ChartForm.from_dict(1, 1, {(0,): f})
    return push_through_complex(c, z0, theta)


def torus_complex(side=2.0 * np.pi):
    chart = box_region([(0.0, side), (0.0, side)], periodic=[True, True],
                       boundary=False, name="torus")
    return VirtualComplex(n=0, charts={EMPTY: chart}, overlaps={}, virtual_dim=2)


def torus_closed_one_form():
    f = ex.parse_expression("sin(x0)*cos(x1)")
    return VirtualFormFamily(
        charts={EMPTY: ChartForm.from_dict(2, 1, {(1,): f})},
        transition=TransitionData(),
    )


def polar_disk_complex():
    """Unit disk in polar coordinates (r, angle); the rim is true boundary,
    the r = 0 edge is a coordinate degeneracy (free face)."""
    chart = ChartRegion(
        dim=2,
        box=((0.0, 1.0), (0.0, 2.0 * np.pi)),
        periodic=(False, True),
        boundary_faces=frozenset({(0, 1)}),
        free_faces=frozenset({(0, -1)}),
        name="disk-polar",
    )
    return VirtualComplex(n=0, charts={EMPTY: chart}, overlaps={}, virtual_dim=2)


def sphere_polar_complex():
    """Single polar chart of the unit sphere (theta_s in (0, pi), azimuth
    periodic).  Good for action and area checks; the poles sit on the chart
    edge, so fixed-locus work uses the two-chart stereographic model."""
    chart = ChartRegion(
        dim=2,
        box=((0.0, np.pi), (0.0, 2.0 * np.pi)),
        periodic=(False, True),
        free_faces=frozenset({(0, -1), (0, 1)}),
        name="sphere-polar",
    )
    return VirtualComplex(n=0, charts={EMPTY: chart}, overlaps={}, virtual_dim=2)


def sphere_polar_rotation(c):
    return CircleActionData(flows={
        EMPTY: (ex.var(0), ex.add(ex.var(1), ex.Var("theta"))),
    })


def stereo_sphere_complex(r_max=1.3):
    """Two stereographic charts of the unit sphere, orientation-compatible.

    Chart {} holds the north pole at its origin, chart {1} the south pole;
    the transition is complex inversion, and the rotation about the poles'
    axis acts with speed +1 on chart {} and -1 on chart {1}.
    """
    r2 = r_max * r_max
    rho2 = E("x0^2 + x1^2")

    def disk_chart(name):
        return ChartRegion(
            dim=2,
            box=((-r_max - 0.2, r_max + 0.2),) * 2,
            constraints=(ex.sub(rho2, ex.num(r2)),),
            constraint_is_cut=(True,),
            name=name,
        )

    annulus = ChartRegion(
        dim=2,
        box=((-r_max - 0.2, r_max + 0.2),) * 2,
        constraints=(ex.sub(rho2, ex.num(r2)),
                     ex.sub(ex.num(1.0 / r2), rho2)),
        constraint_is_cut=(True, True),
        name="annulus",
    )
    inversion = (
        E("x0/(x0^2+x1^2)"),
        E("-x1/(x0^2+x1^2)"),
    )
    ov = OverlapDatum(
        small=EMPTY,
        big=I1,
        region_in_small=annulus,
        region_in_big=annulus,
        rank=0,
        projection=inversion,
        fiber_param=inversion,
    )
    return VirtualComplex(
        n=1,
        charts={EMPTY: disk_chart("north-chart"), I1: disk_chart("south-chart")},
        overlaps={(EMPTY, I1): ov},
        virtual_dim=2,
    )


def stereo_sphere_rotation():
    th = ex.Var("theta")
    return CircleActionData(flows={
        EMPTY: (
            ex.sub(ex.mul(ex.var(0), ex.call("cos", th)),
                   ex.mul(ex.var(1), ex.call("sin", th))),
            ex.add(ex.mul(ex.var(0), ex.call("sin", th)),
                   ex.mul(ex.var(1), ex.call("cos", th))),
        ),
        I1: (
            ex.add(ex.mul(ex.var(0), ex.call("cos", th)),
                   ex.mul(ex.var(1), ex.call("sin", th))),
            ex.sub(ex.mul(ex.var(1), ex.call("cos", th)),
                   ex.mul(ex.var(0), ex.call("sin", th))),
        ),
    })


def stereo_sphere_area_and_height():
    """alpha = area form + u * height, equivariantly closed for the rotation."""
    area = E("4/(1 + x0^2 + x1^2)^2")
    h_north = E("(1 - x0^2 - x1^2)/(1 + x0^2 + x1^2)")
    h_south = E("(x0^2 + x1^2 - 1)/(x0^2 + x1^2 + 1)")
    charts = {
        EMPTY: EquivariantChartForm.from_dict(2, {
            0: ChartForm.from_dict(2, 2, {(0, 1): area}),
            1: ChartForm.from_dict(2, 0, {(): h_north}),
        }),
        I1: EquivariantChartForm.from_dict(2, {
            0: ChartForm.from_dict(2, 2, {(0, 1): area}),
            1: ChartForm.from_dict(2, 0, {(): h_south}),
        }),
    }
    return EquivariantFamily(charts=charts)


def stereo_sphere_fixed_components():
    point = ChartRegion(dim=0, box=())
    return [
        FixedComponentData(chart=EMPTY, region=point,
                           embed=(ex.num(0.0), ex.num(0.0)),
                           normal_rank=2, weights=(1,)),
        FixedComponentData(chart=I1, region=point,
                           embed=(ex.num(0.0), ex.num(0.0)),
                           normal_rank=2, weights=(-1,)),
    ]


def unit_equivariant_family(c):
    return EquivariantFamily(charts={
        i: EquivariantChartForm.of_form(ChartForm.constant(c.dim(i), 1.0))
        for i in c.charts
    })


def unit_equivariant_virtual(c):
    return EquivariantVirtualFamily(charts={
        i: EquivariantChartForm.of_form(ChartForm.constant(c.dim(i), 1.0))
        for i in c.charts
    })


def line_plane_rotation():
    th = ex.Var("theta")
    return CircleActionData(flows={
        EMPTY: (ex.var(0),),
        I1: (
            ex.var(0),
            ex.sub(ex.mul(ex.var(1), ex.call("cos", th)),
                   ex.mul(ex.var(2), ex.call("sin", th))),
            ex.add(ex.mul(ex.var(1), ex.call("sin", th)),
                   ex.mul(ex.var(2), ex.call("cos", th))),
        ),
    })


def line_plane_equivariant_zeta(c, radius=0.8, support=0.9):
    """Glued family whose transition is the equivariant Thom block."""
    theta_g = equivariant_thom_form([1], radius, chart_dim=3, offset=1)
    f = ex.call("bump", ex.div(ex.var(0), support))
    z0 = ChartForm.from_dict(1, 1, {(0,): f})
    z0_eq = EquivariantChartForm.of_form(z0)
    from virtman.equivariant import eq_pullback, eq_wedge
    ov = c.overlaps[(EMPTY, I1)]
    z1 = eq_wedge(eq_pullback(ov.projection, z0_eq, 3), theta_g)
    return EquivariantVirtualFamily(
        charts={EMPTY: z0_eq, I1: z1},
        transition={(EMPTY, I1): theta_g},
    )


def line_plane_fixed_components(c):
    base = c.charts[EMPTY]
    section = interval(-1.0, 1.0, boundary=False, name="zero-section")
    return [
        FixedComponentData(chart=EMPTY, region=base, embed=(ex.var(0),)),
        FixedComponentData(chart=I1, region=section,
                           embed=(ex.var(0), ex.num(0.0), ex.num(0.0)),
                           normal_rank=2, weights=(1,)),
    ]
