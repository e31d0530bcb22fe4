import numpy as np
import pytest

from nct.group_core import realize, bmat_identity, bmat_mul, bmat_star, block_spectrum, build_group, wedderburn
from nct.hodge import (HodgeError, adjoint_map, block_inner, cohomology, euler_ranks, greens, harmonic_projection,
                       hodge_residuals, laplacian, make_complex, make_metric, make_module, random_complex,
                       random_bmat, spectrum_and_gap)
from oracles import bmat_to_dense


def trivial_block(G):
    # the trivial irrep's idempotent has all coefficients 1/|G|
    wd = wedderburn(G)
    return int(np.argmin([np.abs(np.asarray(p) - 1 / G.order).max() for p in wd.idempotents]))


def z2_line(coeffs):
    G = build_group("Z2")
    v = np.zeros((1, 1, 2), dtype=complex)
    v[0, 0] = coeffs
    return G, make_complex(G, [1, 1], [v])


def test_make_module_examples():
    G = build_group("Z2")
    E = make_module(G, 2)
    np.testing.assert_array_equal(E.rank_vector(), [2, 2])
    half = np.array([[[0.5, 0.5]]])
    E = make_module(G, 1, half)
    ranks = E.rank_vector()
    assert ranks[trivial_block(G)] == 1 and ranks.sum() == 1
    with pytest.raises(HodgeError):
        make_module(G, 1, np.array([[[1.0, 1.0]]]))


def test_make_metric_examples():
    G = build_group("Z2")
    E = make_module(G, 2)
    make_metric(E)
    make_metric(E, 2 * bmat_identity(G, 2))
    # e - 2g has eigenvalues -1 and 3 on the two blocks
    bad = np.zeros((1, 1, 2))
    bad[0, 0] = [1.0, -2.0]
    with pytest.raises(HodgeError):
        make_metric(make_module(G, 1), bad)
    with pytest.raises(HodgeError):
        make_metric(make_module(G, 1), np.array([[[1.0, 1j]]]))


def test_adjoint_map():
    G = build_group("S3")
    rng = np.random.default_rng(0)
    E1, E2 = make_module(G, 2), make_module(G, 3)
    h1, h2 = make_metric(E1), make_metric(E2)
    T = random_bmat(G, 3, 2, rng)
    np.testing.assert_allclose(adjoint_map(T, h1, h2), bmat_star(T, G), atol=1e-12)
    I = bmat_identity(G, 2)
    np.testing.assert_allclose(adjoint_map(I, h1, h1), I, atol=1e-12)
    # non-trivial metrics: <Tx, y>_2 = <x, T*y>_1 on the regular representation
    a1, a2 = random_bmat(G, 2, 2, rng, 0.2), random_bmat(G, 3, 3, rng, 0.2)
    H1 = bmat_mul(bmat_star(bmat_identity(G, 2) + a1, G), bmat_identity(G, 2) + a1, G)
    H2 = bmat_mul(bmat_star(bmat_identity(G, 3) + a2, G), bmat_identity(G, 3) + a2, G)
    m1, m2 = make_metric(E1, H1), make_metric(E2, H2)
    Ts = adjoint_map(T, m1, m2)
    np.testing.assert_allclose(adjoint_map(Ts, m2, m1), T, atol=1e-10)
    wd = wedderburn(G)
    for b in range(wd.nblocks):
        Tb, Sb = realize(T, wd, b), realize(Ts, wd, b)
        n = wd.dims[b]
        x = rng.normal(size=(2 * n, 1)) + 1j * rng.normal(size=(2 * n, 1))
        y = rng.normal(size=(3 * n, 1)) + 1j * rng.normal(size=(3 * n, 1))
        lhs = block_inner(m2, Tb @ x, y, b)
        rhs = block_inner(m1, x, Sb @ y, b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)
    with pytest.raises(HodgeError):
        adjoint_map(T, h2, h1)


def test_laplacian_examples():
    C = build_group("C")
    cx = make_complex(C, [1, 1], [np.full((1, 1, 1), 2.0)])
    hd = laplacian(cx)
    np.testing.assert_allclose(hd.spectrum(), [4.0, 4.0])
    cx0 = make_complex(C, [2, 1], [np.zeros((1, 2, 1))])
    hd0 = laplacian(cx0)
    np.testing.assert_allclose(hd0.spectrum(), 0)
    gap, _ = spectrum_and_gap(hd0)
    assert gap == np.inf
    G, cx = z2_line([1.0, 1.0])
    hd = laplacian(cx)
    tb = trivial_block(G)
    for j in range(2):
        np.testing.assert_allclose(hd.laplacian[j][tb], [[4.0]], atol=1e-12)
        np.testing.assert_allclose(hd.laplacian[j][1 - tb], [[0.0]], atol=1e-12)
    gap, spec = spectrum_and_gap(hd)
    assert gap == pytest.approx(4.0)
    np.testing.assert_allclose(spec, [0, 0, 4, 4], atol=1e-12)


def test_projection_and_greens_examples():
    C = build_group("C")
    cx = make_complex(C, [1, 1], [np.full((1, 1, 1), 2.0)])
    hd = laplacian(cx)
    for j in range(2):
        np.testing.assert_allclose(harmonic_projection(hd, j), 0, atol=1e-14)
        np.testing.assert_allclose(greens(hd, j), 0.25, atol=1e-14)
    cx0 = make_complex(C, [1, 1], [np.zeros((1, 1, 1))])
    hd0 = laplacian(cx0)
    np.testing.assert_allclose(harmonic_projection(hd0, 0), 1.0)
    np.testing.assert_allclose(greens(hd0, 1), 0.0)
    G, cx = z2_line([1.0, 1.0])
    hd = laplacian(cx)
    for j in range(2):
        np.testing.assert_allclose(harmonic_projection(hd, j)[0, 0], [0.5, -0.5], atol=1e-12)


def test_cohomology_examples():
    G, cx = z2_line([1.0, 1.0])
    coh = cohomology(laplacian(cx))
    tb = trivial_block(G)
    for j in range(2):
        assert coh["ranks"][j][tb] == 0 and coh["ranks"][j][1 - tb] == 1
    _, cx = z2_line([2.0, 1.0])
    coh = cohomology(laplacian(cx))
    assert coh["ranks"] == [[0, 0], [0, 0]]
    _, cx = z2_line([0.0, 0.0])
    coh = cohomology(laplacian(cx))
    assert coh["ranks"] == [[1, 1], [1, 1]]


def test_v_squared_must_vanish():
    C = build_group("C")
    with pytest.raises(HodgeError):
        make_complex(C, [1, 1, 1], [np.ones((1, 1, 1)), np.ones((1, 1, 1))])


@pytest.mark.parametrize("name", ["C", "Z2", "Z3", "S3"])
def test_random_complex_hodge_identities(name):
    G = build_group(name)
    rng = np.random.default_rng(11)
    for _ in range(4):
        nd = int(rng.integers(2, 5))
        ranks = [int(rng.integers(0, 3)) for _ in range(nd - 1)]
        harmonic = [int(rng.integers(0, 2)) for _ in range(nd)]
        cx = random_complex(G, ranks, rng, harmonic=harmonic)
        assert max(m.N for m in cx.modules) <= 6
        hd = laplacian(cx)
        res = hodge_residuals(hd)
        assert max(res.values()) <= 1e-10, res
        e_side, h_side = euler_ranks(cx, hd)
        np.testing.assert_array_equal(e_side, h_side)
        coh = cohomology(hd)
        wd = wedderburn(G)
        for j in range(cx.length):
            np.testing.assert_array_equal(coh["ranks"][j], [harmonic[j]] * wd.nblocks)


def test_laplacian_spectrum_matches_dense():
    rng = np.random.default_rng(3)
    for name in ("Z3", "S3"):
        G = build_group(name)
        cx = random_complex(G, [1, 2], rng, harmonic=[1, 0, 1], metrics=False)
        hd = laplacian(cx)
        wd = wedderburn(G)
        for j in range(cx.length):
            D = hd.laplacian_bmat(j)
            ours = np.concatenate([np.repeat(s, n) for s, n in
                                   zip(block_spectrum(D, G, per_block=True), wd.dims)])
            brute = np.linalg.eigvals(bmat_to_dense(D, G.table))
            np.testing.assert_allclose(np.sort(ours.real), np.sort(brute.real), atol=1e-9)
