import math

import numpy as np
import pytest

from virtman import expr as ex
from virtman.equivariant import (
    CircleActionData,
    EquivariantChartForm,
    EquivariantFamily,
    FixedComponentData,
    cartan_d,
    cartan_residual,
    equivariant_euler,
    equivariant_thom_form,
    fixed_locus,
    localize,
    trivial_action,
    trivial_fixed_components,
    validate_action,
)
from virtman.errors import StructureError
from virtman.forms import ChartForm
from virtman.geometry import EMPTY, ChartRegion
from virtman.integrate import build_pou, integrate_pou
from virtman.quadrature import QuadratureSpec

from helpers import (
    I1,
    interval_bump_family,
    interval_cover_complex,
    line_plane_complex,
    line_plane_equivariant_zeta,
    line_plane_fixed_components,
    line_plane_rotation,
    sphere_polar_complex,
    sphere_polar_rotation,
    stereo_sphere_area_and_height,
    stereo_sphere_complex,
    stereo_sphere_fixed_components,
    stereo_sphere_rotation,
    unit_equivariant_family,
    unit_equivariant_virtual,
)

E = ex.parse_expression


def test_validate_trivial_action():
    c = interval_cover_complex()
    rep = validate_action(c, trivial_action(c), samples=32)
    assert rep.ok, str(rep)


def test_validate_sphere_polar_rotation():
    c = sphere_polar_complex()
    rep = validate_action(c, sphere_polar_rotation(c), samples=48)
    assert rep.ok, str(rep)


def test_validate_stereo_sphere_rotation():
    c = stereo_sphere_complex()
    rep = validate_action(c, stereo_sphere_rotation(), samples=48)
    assert rep.ok, str(rep)


def test_broken_equivariance_detected():
    # rotate the bundle fibers but leave the base overlap data alone while
    # the base chart gets translated: the projection no longer intertwines
    c = line_plane_complex()
    th = ex.Var("theta")
    bad = CircleActionData(flows={
        EMPTY: (ex.add(ex.var(0), th),),  # base translates
        I1: ex.identity_map(3),           # bundle chart stays put
    })
    rep = validate_action(c, bad, samples=48)
    assert any(i.name == "equivariance" and not i.passed for i in rep.items)


def test_cartan_d_constant_vanishes():
    v = (E("-x1"), E("x0"))
    alpha = EquivariantChartForm.of_form(ChartForm.constant(2, 3.0))
    assert not cartan_d(alpha, v).parts


def test_cartan_d_squared_on_invariant_form():
    # rotation-invariant 2-form on the plane: d_G^2 = -u L_V = 0 on it
    v = (E("-x1"), E("x0"))
    area = ChartForm.from_dict(2, 2, {(0, 1): E("exp(-x0^2-x1^2)")})
    alpha = EquivariantChartForm.of_form(area)
    ddg = cartan_d(cartan_d(alpha, v), v)
    pts = np.random.default_rng(0).uniform(-1, 1, (40, 2))
    worst = max((f.max_abs(pts) for _, f in ddg.parts), default=0.0)
    assert worst <= 1e-8


def test_moment_map_identity_on_sphere():
    # d_G(area + u * height) = 0 in both stereographic charts
    c = stereo_sphere_complex()
    act = stereo_sphere_rotation()
    alpha = stereo_sphere_area_and_height()
    resid = cartan_residual(c, act, alpha.charts, samples=32)
    assert resid <= 1e-8


def test_fixed_locus_trivial_action():
    c = interval_cover_complex()
    comps = trivial_fixed_components(c)
    sub = fixed_locus(c, trivial_action(c), comps, samples=24)
    assert set(sub.charts) == set(c.charts)
    assert sub.virtual_dim == c.virtual_dim


def test_fixed_locus_sphere_poles():
    c = stereo_sphere_complex()
    act = stereo_sphere_rotation()
    comps = stereo_sphere_fixed_components()
    sub = fixed_locus(c, act, comps, samples=32)
    assert set(sub.charts) == {EMPTY, I1}
    assert all(r.dim == 0 for r in sub.charts.values())


def test_fixed_locus_weight_mismatch_detected():
    c = stereo_sphere_complex()
    act = stereo_sphere_rotation()
    point = ChartRegion(dim=0, box=())
    wrong = [
        FixedComponentData(chart=EMPTY, region=point,
                           embed=(ex.num(0.0), ex.num(0.0)),
                           normal_rank=2, weights=(2,)),
        stereo_sphere_fixed_components()[1],
    ]
    with pytest.raises(StructureError):
        fixed_locus(c, act, wrong, samples=16)


def test_fixed_locus_undeclared_fixed_point_detected():
    c = line_plane_complex()
    act = line_plane_rotation()
    # forget the zero-section component: the scan must object
    comps = [line_plane_fixed_components(c)[0]]
    with pytest.raises(StructureError):
        fixed_locus(c, act, comps, samples=64)


def test_equivariant_euler_values():
    point = ChartRegion(dim=0, box=())
    north = FixedComponentData(chart=EMPTY, region=point,
                               embed=(ex.num(0.0), ex.num(0.0)),
                               normal_rank=2, weights=(1,))
    south = FixedComponentData(chart=I1, region=point,
                               embed=(ex.num(0.0), ex.num(0.0)),
                               normal_rank=2, weights=(-1,))
    double = FixedComponentData(chart=EMPTY, region=point,
                                embed=(ex.num(0.0),) * 4,
                                normal_rank=4, weights=(1, 2))
    assert {p: ex.evaluate(e) for p, e in equivariant_euler(north).items()} == {1: 1.0}
    assert {p: ex.evaluate(e) for p, e in equivariant_euler(south).items()} == {1: -1.0}
    assert {p: ex.evaluate(e) for p, e in equivariant_euler(double).items()} == {2: 2.0}


def test_equivariant_thom_block_closed_and_normalized():
    # rank-2 weight-w block: equivariantly closed for the fiber rotation
    w = 2
    block = equivariant_thom_form([w], 0.8, chart_dim=2, offset=0)
    v = (ex.mul(ex.num(-w), ex.var(1)), ex.mul(ex.num(w), ex.var(0)))
    dg = cartan_d(block, v)
    pts = np.random.default_rng(1).uniform(-0.9, 0.9, (60, 2))
    worst = max((f.max_abs(pts) for _, f in dg.parts), default=0.0)
    assert worst <= 1e-9
    # fiber integral of the top part is 1
    from virtman.geometry import box_region
    from virtman.quadrature import integrate_region
    top = block.part(0).top_coefficient()
    fn = ex.compile_expression(top)
    val = integrate_region(box_region([(-0.8, 0.8)] * 2, boundary=False),
                           lambda p: fn(p), QuadratureSpec(points_per_axis=1 << 10))
    assert val == pytest.approx(1.0, abs=1e-8)
    # zero-section restriction of the u-part is w / (2 pi)
    at_zero = ex.evaluate(block.part(1).coeff(()), (0.0, 0.0))
    assert at_zero == pytest.approx(w / (2 * math.pi))


def test_localize_trivial_action_degenerate():
    c = interval_cover_complex()
    act = trivial_action(c)
    alpha = unit_equivariant_family(c)
    z = interval_bump_family(c)
    from virtman.equivariant import EquivariantVirtualFamily
    zeta = EquivariantVirtualFamily(
        charts={i: EquivariantChartForm.of_form(f) for i, f in z.charts.items()},
    )
    rep = localize(c, act, alpha, zeta, trivial_fixed_components(c),
                   QuadratureSpec(points_per_axis=1 << 12), u_probes=(0.5, 1.0, 2.0),
                   shrink=0.9)
    assert rep.max_residual <= 1e-12, rep.to_dict()


def test_localize_sphere_rotation():
    c = stereo_sphere_complex()
    act = stereo_sphere_rotation()
    alpha = stereo_sphere_area_and_height()
    zeta = unit_equivariant_virtual(c)
    rep = localize(c, act, alpha, zeta, stereo_sphere_fixed_components(),
                   QuadratureSpec(points_per_axis=768), u_probes=(0.5, 1.0, 2.0))
    assert rep.lhs_values[0] == pytest.approx(4 * math.pi, abs=5e-3)
    assert rep.max_residual <= 1e-2, rep.to_dict()


def test_localize_line_plane_fiber_rotation():
    c = line_plane_complex()
    act = line_plane_rotation()
    alpha = unit_equivariant_family(c)
    zeta = line_plane_equivariant_zeta(c)
    base = None
    rep = localize(c, act, alpha, zeta, line_plane_fixed_components(c),
                   QuadratureSpec(points_per_axis=160), u_probes=(0.5, 1.0, 2.0))
    assert rep.max_residual <= 1e-2, rep.to_dict()


def test_equivariant_stokes_pairing_vanishes():
    # mu_zeta(d_G beta) = 0 for compactly supported beta
    c = stereo_sphere_complex()
    act = stereo_sphere_rotation()
    zeta = unit_equivariant_virtual(c)
    # beta supported inside the north chart away from the gluing annulus
    g = E("bump((x0^2 + x1^2)/0.36)")
    beta = {
        EMPTY: EquivariantChartForm.of_form(
            ChartForm.from_dict(2, 1, {(0,): ex.mul(g, ex.var(1))})
        ),
        I1: EquivariantChartForm.zero(2),
    }
    dbeta = {
        i: cartan_d(f, act.vector_field(i)) for i, f in beta.items()
    }
    pou = build_pou(c, shrink=0.8)
    from virtman.equivariant import integrate_equivariant
    vals = integrate_equivariant(c, dbeta, pou, QuadratureSpec(points_per_axis=512))
    for p, v in vals.items():
        assert abs(v) <= 1e-6, (p, v)
