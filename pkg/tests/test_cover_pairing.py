import numpy as np
import pytest

from nct.cover_pairing import (CoverError, CoverFunction, DiscreteCover, bump_section, cover_connection_01,
                               cover_curvature, hermitian_form, linear_cocycle, make_h, pair_injective,
                               partition_residual, refinement_order, self_adjoint_residual)
from nct.group_core import build_group
from nct.nc_forms import GroupCocycle, cyclic_from_group
from oracles import cover_pairing_dense

PROFILES = (("indicator", "forward1"), ("hat", "central2"), ("bump", "central2"))


def test_make_h_profiles():
    cov = DiscreteCover(16, "forward1")
    h = make_h(cov, "indicator")
    assert np.all(cov.periodize(h) == 1.0)
    assert partition_residual(DiscreteCover(16), make_h(DiscreteCover(16), "hat")) <= 1e-14
    assert partition_residual(DiscreteCover(40), make_h(DiscreteCover(40), "bump")) <= 1e-14
    with pytest.raises(CoverError):
        make_h(cov, values=np.zeros(16))
    with pytest.raises(CoverError):
        make_h(cov, values=np.ones(10))
    with pytest.raises(CoverError):
        make_h(cov, "triangle")


def test_pullback_is_an_action():
    cov = DiscreteCover(12)
    f = CoverFunction(3, np.arange(5.0))
    a = cov.pullback(cov.pullback(f, 2), -5)
    b = cov.pullback(f, -3)
    assert (a.offset, list(a.values)) == (b.offset, list(b.values))
    # (L_g^* f)(n) = f(n + gN)
    g = 2
    pf = cov.pullback(f, g)
    n = np.arange(-40, 40)
    np.testing.assert_array_equal(pf.window(-40, 40), f.window(-40 + g * 12, 40 + g * 12))


def test_connection_01_examples():
    N = 10
    cov = DiscreteCover(N)
    h = make_h(cov, "indicator")
    one = CoverFunction(-5 * N, np.ones(11 * N, dtype=complex))
    terms = cover_connection_01(cov, h, one)
    for g in range(-3, 4):
        np.testing.assert_allclose(terms[g].window(0, N), 1.0)
    s = CoverFunction(2 * N, np.arange(1.0, N + 1))
    terms = cover_connection_01(cov, h, s)
    assert list(terms) == [2]
    np.testing.assert_allclose(terms[2].window(0, N), np.arange(1.0, N + 1))
    hh = make_h(cov, "hat")
    s1 = bump_section(cov, 0.2, 1.3)
    s2 = bump_section(cov, -0.4, 0.9, phase=0.5)
    lo, hi = min(s1.offset, s2.offset), max(s1.stop, s2.stop)
    comb = CoverFunction(lo, 2 * s1.window(lo, hi) - 3j * s2.window(lo, hi))
    t1, t2, t3 = (cover_connection_01(cov, hh, x, margin=3) for x in (s1, s2, comb))
    for g in t3:
        w = lambda t: t[g].window(-3 * N, 3 * N) if g in t else 0
        np.testing.assert_allclose(w(t3), 2 * w(t1) - 3j * w(t2), atol=1e-15)


def test_curvature_first_term_sums_to_zero():
    for prof, st in PROFILES:
        cov = DiscreteCover(32, st)
        h = make_h(cov, prof)
        curv = cover_curvature(cov, h)
        assert 0 < len(curv.first) < 10
        dh = cov.derivative(h)
        # including g = 0, the coefficients add up to minus the derivative of sum_g L_g^* h = 1
        total = sum(curv.first.values()) - dh.window(0, 32)
        assert np.abs(total).max() <= 1e-12


def test_pair_injective_matches_dense_sum():
    Z = cyclic_from_group(linear_cocycle())
    for prof, st in PROFILES:
        for N in (16, 64):
            cov = DiscreteCover(N, st)
            h = make_h(cov, prof)
            _, val = pair_injective(Z, cov, h)
            ref = cover_pairing_dense(h.values.real, h.offset, N, st)
            assert abs(val - ref) <= 1e-12
            assert abs(val) > 0.5


def test_pair_injective_away_from_identity_is_zero():
    Zx = cyclic_from_group(linear_cocycle(x=5), check=False)
    for prof, st in PROFILES:
        cov = DiscreteCover(32, st)
        form, val = pair_injective(Zx, cov, make_h(cov, prof))
        assert np.all(form == 0) and val == 0


def test_pair_injective_degree_zero_and_errors():
    Zgrp = build_group("Z")
    Z0 = cyclic_from_group(GroupCocycle.linear(Zgrp, 0, 1.5))
    cov = DiscreteCover(20)
    _, val = pair_injective(Z0, cov, make_h(cov))
    assert val == pytest.approx(2 * np.pi * 1.5)
    Z2 = cyclic_from_group(GroupCocycle.linear(Zgrp, 2, [1.0]), check=False)
    with pytest.raises(CoverError):
        pair_injective(Z2, cov, make_h(cov))


def test_h_independence_and_refinement():
    Z = cyclic_from_group(linear_cocycle())
    for N in (128, 256):
        vals = []
        for prof, st in PROFILES:
            cov = DiscreteCover(N, st)
            vals.append(pair_injective(Z, cov, make_h(cov, prof))[1].real)
        assert np.abs(np.array(vals) - vals[0]).max() / abs(vals[0]) <= 1e-2


def test_hermitian_form_zero_section():
    cov = DiscreteCover(32)
    z = CoverFunction(0, np.zeros(32, dtype=complex))
    s = bump_section(cov)
    assert all(np.all(v == 0) for v in hermitian_form(cov, z, s).values())
    assert self_adjoint_residual(cov, make_h(cov), z, s) == 0


@pytest.mark.parametrize("stencil,order", [("forward1", 0.9), ("central2", 1.8)])
def test_self_adjoint_residual_order(stencil, order):
    res = []
    for N in (64, 128, 256):
        cov = DiscreteCover(N, stencil)
        h = make_h(cov, "hat")
        s1 = bump_section(cov, 0.3, 1.6)
        s2 = bump_section(cov, -0.2, 1.3, phase=0.7)
        parts = self_adjoint_residual(cov, h, s1, s2, parts=True)
        assert parts["noncommutative"] <= 1e-12
        res.append(max(parts.values()))
    assert np.all(refinement_order(res, [64, 128, 256]) >= order)


def test_symmetric_bump_residual_small():
    cov = DiscreteCover(64)
    s = bump_section(cov, 0.0, 1.2)
    s = CoverFunction(s.offset, s.values.real.astype(complex))
    assert self_adjoint_residual(cov, make_h(cov), s, s) <= 0.05


def test_unknown_stencil():
    with pytest.raises(CoverError):
        DiscreteCover(16, "spectral").derivative(CoverFunction(0, np.ones(3)))
