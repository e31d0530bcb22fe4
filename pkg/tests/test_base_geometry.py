import numpy as np
import pytest

from nct.base_geometry import (FormField, GeometryError, d01, d10, derivative, integrate, make_grid,
                               omega_pp_project, pp_equal, scalar_field)
from nct.group_core import build_group
from nct.nc_forms import form_dim


def test_grid_validation():
    with pytest.raises(GeometryError):
        make_grid("circle", 4)
    with pytest.raises(GeometryError):
        make_grid("sphere", 16)
    with pytest.raises(GeometryError):
        make_grid("circle", 16, "upwind7")
    g = make_grid("circle", 64)
    assert g.spacing[0] == pytest.approx(2 * np.pi / 64)


def test_d10_examples():
    g = make_grid("circle", 64)
    th, = g.coords()
    assert d10(scalar_field(g, np.full(64, 3.0))).max_abs() <= 1e-12
    df = d10(scalar_field(g, np.sin(th)))
    np.testing.assert_allclose(df[(1, 0)], np.cos(th), atol=1e-10)
    t = make_grid("torus2", 32)
    a, b = t.coords()
    f = scalar_field(t, np.sin(a) * np.cos(2 * b) + np.cos(3 * a))
    assert d10(d10(f)).max_abs() <= 1e-8
    pt = make_grid("point")
    assert d10(scalar_field(pt, np.array(1.0))).max_abs() == 0
    with pytest.raises(GeometryError):
        scalar_field(pt, np.array(1.0), mask=1)


@pytest.mark.parametrize("stencil,order", [("central2", 2), ("central4", 4), ("forward1", 1)])
def test_stencil_refinement_order(stencil, order):
    errs = []
    for n in (64, 128):
        g = make_grid("circle", n, stencil)
        x, = g.coords()
        errs.append(np.abs(derivative(np.sin(x), g, 0) - np.cos(x)).max())
    assert np.log2(errs[0] / errs[1]) >= order - 0.2


def test_d01_examples():
    G = build_group("Z2")
    g = make_grid("circle", 16)
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(16, form_dim(G, 0)))
    f = scalar_field(g, vals, group=G)
    assert d01(d01(f)).max_abs() == 0
    df = d01(f)
    assert list(df.keys()) == [(0, 1)]
    # value e + 2g: d(e) = 0 so only the g-coefficient survives, with sign +
    one = scalar_field(g, np.tile([1.0, 2.0], (16, 1)), group=G)
    out = d01(one)[(0, 1)]
    assert np.all(out[:, np.nonzero(out[0])[0]] == 2.0)
    mixed = FormField(g, {(0, 0): vals, (1, 0): rng.normal(size=(16, 2))}, G)
    anti = d10(d01(mixed)) + d01(d10(mixed))
    assert anti.max_abs() <= 1e-10
    with pytest.raises(GeometryError):
        d01(d01(f), q_max=1)


def test_integrate_examples():
    g = make_grid("circle", 64)
    th, = g.coords()
    assert integrate(scalar_field(g, np.ones(64), mask=1))[0] == pytest.approx(2 * np.pi, abs=1e-12)
    assert abs(integrate(scalar_field(g, np.sin(th), mask=1))[0]) <= 1e-10
    t = make_grid("torus2", 16)
    assert integrate(scalar_field(t, np.ones((16, 16)), mask=3))[0] == pytest.approx(4 * np.pi ** 2, abs=1e-12)
    with pytest.raises(GeometryError):
        integrate(scalar_field(g, np.ones(64)))
    with pytest.raises(GeometryError):
        integrate(scalar_field(g, np.ones(64), mask=1), cycle="torus2")


def test_stokes():
    t = make_grid("torus2", 24)
    a, b = t.coords()
    f = FormField(t, {(1, 0): np.sin(a + 2 * b), (2, 0): np.exp(np.cos(b))})
    assert abs(integrate(d10(f))[0]) <= 1e-10
    g = make_grid("circle", 32)
    th, = g.coords()
    assert abs(integrate(d10(scalar_field(g, np.exp(np.sin(th)))))[0]) <= 1e-10


def test_omega_pp_examples():
    g = make_grid("circle", 32)
    th, = g.coords()
    assert omega_pp_project(scalar_field(g, np.full(32, 2.0))).max_abs() <= 1e-14
    assert omega_pp_project(scalar_field(g, np.sin(th), mask=1, q=1)).max_abs() == 0
    assert omega_pp_project(scalar_field(g, np.sin(th), q=1), "odd").max_abs() == 0
    f = FormField(g, {(0, 0): np.sin(th) + 3, (1, 0): np.cos(th)})
    p = omega_pp_project(f)
    np.testing.assert_allclose(p[(0, 0)], np.sin(th), atol=1e-14)
    assert omega_pp_project(p).max_abs() == pytest.approx(p.max_abs())
    assert pp_equal(f, FormField(g, {(0, 0): np.sin(th) - 1, (1, 0): np.cos(th)}))


def test_omega_pp_torus_11_closed_part():
    t = make_grid("torus2", 16)
    a, b = t.coords()
    # df is closed; a constant 1-form is closed; both vanish in the quotient
    f = d10(scalar_field(t, np.sin(a) * np.cos(b)))
    closed = FormField(t, {(1, 1): f[(1, 0)] + 0.5, (2, 1): f[(2, 0)]})
    assert omega_pp_project(closed).max_abs() <= 1e-12
    coexact = FormField(t, {(1, 1): np.cos(a + b), (2, 1): -np.cos(a + b)})
    p = omega_pp_project(coexact)
    np.testing.assert_allclose(p[(1, 1)], coexact[(1, 1)], atol=1e-12)
    q = omega_pp_project(p)
    np.testing.assert_allclose(q[(2, 1)], p[(2, 1)], atol=1e-12)
