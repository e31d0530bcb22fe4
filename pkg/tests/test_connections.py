import numpy as np
import pytest

from nct.base_geometry import make_grid
from nct.connections import (ConnectionError_, FamilyConnection, GradedOp, Superconnection, adjoint_connection,
                             block_superconnection, chern, chern_block, chern_nc, cs, cs_block, cs_pair_block,
                             curvature, exp_even, flat_bundle, holonomy_connection, integrate_blocks,
                             number_scaling_check, pairing_per_irrep, partial_flatness, scaled_parts, square,
                             star_op, super_scale, supertrace, total_d)
from nct.group_core import build_group
from nct.nc_forms import form_dim, reduce_dense
from oracles import dense_graded_exp
from families import circle_family


def graded_even_part(T, p, deg):
    sig = np.diag((-1.0) ** deg)
    return (T + (-1) ** p * sig @ T @ sig) / 2


def test_exp_even_trivial_cases():
    X = GradedOp(3, comps={})
    E = exp_even(X)
    np.testing.assert_allclose(E.body()[0], np.eye(3))
    X = GradedOp(2, comps={(0, 0): np.diag([4.0, 4.0])[None]})
    np.testing.assert_allclose(exp_even(X).body()[0], np.exp(-4) * np.eye(2), atol=1e-12)


@pytest.mark.parametrize("n_odd,n_even,seed", [(1, 0, 0), (2, 0, 1), (2, 1, 2), (1, 1, 3)])
def test_exp_even_matches_dense_oracle(n_odd, n_even, seed):
    rng = np.random.default_rng(seed)
    deg = np.array([0, 0, 1, 1, 2])
    R = len(deg)
    odd = (1 << n_odd) - 1
    comps = {}
    for m in range(1 << (n_odd + n_even)):
        T = rng.normal(size=(R, R)) + 1j * rng.normal(size=(R, R))
        comps[m] = graded_even_part(T, bin(m & odd).count("1"), deg)
    comps[0] = comps[0] * 0.5
    X = GradedOp(R, deg, {(m, 0): a[None] for m, a in comps.items()}, odd=odd)
    E = exp_even(X)
    ref = dense_graded_exp(comps, deg, n_odd, n_even)
    for m in range(1 << (n_odd + n_even)):
        np.testing.assert_allclose(E.comps.get((m, 0))[0], ref[m], atol=1e-9)


def test_exp_even_hermitian_body_path():
    rng = np.random.default_rng(4)
    deg = np.array([0, 1, 1])
    A = rng.normal(size=(3, 3))
    body = graded_even_part(A @ A.T, 0, deg)
    soul = graded_even_part(rng.normal(size=(3, 3)), 1, deg)
    X = GradedOp(3, deg, {(0, 0): body[None], (1, 0): soul[None]}, odd=1)
    ref = dense_graded_exp({0: body, 1: soul}, deg, 1)
    E = exp_even(X)
    np.testing.assert_allclose(E.comps[(1, 0)][0], ref[1], atol=1e-10)
    E2 = exp_even(X, hermitian_body=False)
    np.testing.assert_allclose(E2.comps[(1, 0)][0], ref[1], atol=1e-10)


def line_connection(grid, a, q_max=2, group=None, metric=None, omega1=None):
    G = group or build_group("C")
    S = grid.shape[0] if grid.dim else 1
    A = np.zeros((S, 1, 1, G.order), dtype=complex)
    A[..., G.identity] = np.reshape(a, (-1, 1, 1)) if np.ndim(a) else a
    return FamilyConnection(grid, G, 1, [A] * grid.dim, omega1, metric)


def test_curvature_examples():
    pt = make_grid("point")
    fc = FamilyConnection(pt, build_group("Z2"), 2, [])
    assert curvature(fc).max_abs() == 0
    g = make_grid("circle", 16)
    F = curvature(line_connection(g, 0.7 + 0.2j))
    assert F.max_abs() <= 1e-13
    assert partial_flatness(F) == 0


def test_curvature_nc_correction_components():
    G = build_group("Z2")
    g = make_grid("circle", 16)
    th, = g.coords()
    rng = np.random.default_rng(5)
    A = np.zeros((16, 1, 1, 2), dtype=complex)
    A[:, 0, 0, 0] = np.sin(th)
    A[:, 0, 0, 1] = 0.3 * np.cos(th)
    w = rng.normal(size=(1, 1, form_dim(G, 1)))
    w = np.broadcast_to(w * np.cos(th)[:, None, None, None], (16, 1, 1, form_dim(G, 1)))
    F = curvature(FamilyConnection(g, G, 1, [A], w))
    keys = {(bin(m).count("1"), q) for (m, q) in F.comps}
    assert keys <= {(1, 1), (0, 2), (1, 0)}
    assert partial_flatness(F) == 0


def test_chern_flat_line_is_rank():
    C = build_group("C")
    g = make_grid("circle", 16)
    ch = chern(flat_bundle(C, np.array([1.5]), g))
    np.testing.assert_allclose(ch[0][(0, 0)], 1.0, atol=1e-12)
    ch = chern_nc(line_connection(g, 0.3))
    np.testing.assert_allclose(ch[(0, 0)][..., 0], 1.0, atol=1e-12)


def test_chern_nc_is_closed():
    G = build_group("Z2")
    g = make_grid("circle", 32)
    th, = g.coords()
    rng = np.random.default_rng(6)
    N = 2
    A = np.zeros((32, N, N, 2), dtype=complex)
    for k in range(3):
        A += (rng.normal(size=(N, N, 2)) + 1j * rng.normal(size=(N, N, 2)))[None] * np.cos(k * th + k)[:, None, None, None] * 0.3
    w = (rng.normal(size=(N, N, form_dim(G, 1))) * 0.5)[None] * (1 + 0.5 * np.sin(th))[:, None, None, None]
    ch = chern_nc(FamilyConnection(g, G, N, [A], w))
    dch = total_d(ch)
    # closed after passing to forms modulo graded commutators
    for (m, q), arr in dch.components.items():
        assert np.abs(reduce_dense(G, q, arr)).max(initial=0.0) <= 1e-9
    assert max(np.abs(v).max() for (m, q), v in ch.components.items() if q > 0) > 1e-3


def test_chern_of_direct_sum_adds():
    Z2 = build_group("Z2")
    g = make_grid("circle", 16)
    th, = g.coords()
    A1 = np.zeros((16, 1, 1, 2), dtype=complex)
    A1[:, 0, 0, 0] = 0.4 + 0.2 * np.sin(th)
    A1[:, 0, 0, 1] = 0.1 * np.cos(th)
    A2 = np.zeros((16, 1, 1, 2), dtype=complex)
    A2[:, 0, 0, 0] = 0.1j
    w = np.zeros((16, 1, 1, form_dim(Z2, 1)), dtype=complex)
    w[:, 0, 0, 0] = 0.5 * np.cos(th)
    one = chern_nc(FamilyConnection(g, Z2, 1, [A1], w))
    two = chern_nc(FamilyConnection(g, Z2, 1, [A2]))
    S = np.zeros((16, 2, 2, 2), dtype=complex)
    S[:, :1, :1] = A1
    S[:, 1:, 1:] = A2
    W = np.zeros((16, 2, 2, form_dim(Z2, 1)), dtype=complex)
    W[:, :1, :1] = w
    both = chern_nc(FamilyConnection(g, Z2, 2, [S], W))
    assert (both - one - two).max_abs() <= 1e-12


def test_adjoint_connection_examples():
    C = build_group("C")
    g = make_grid("circle", 16)
    a = 0.4 + 0.9j
    fc = line_connection(g, a)
    As = adjoint_connection(fc)
    np.testing.assert_allclose(As.comps[(1, 0)][..., 0], -np.conj(a), atol=1e-14)
    back = star_op(As)
    np.testing.assert_allclose(back.comps[(1, 0)], fc.A[0], atol=1e-12)
    unitary = line_connection(g, 0.7j)
    np.testing.assert_allclose(adjoint_connection(unitary).comps[(1, 0)], unitary.A[0], atol=1e-14)


def test_adjoint_with_metric_is_compatible():
    # d<s1, s2> = <nabla s1, s2> + <s1, nabla* s2> for a C-line with metric h
    C = build_group("C")
    g = make_grid("circle", 64)
    th, = g.coords()
    h = (2 + np.sin(th)).reshape(64, 1, 1, 1).astype(complex)
    a = (0.3 + 0.5j) * np.cos(th)
    fc = line_connection(g, a, metric=h)
    As = adjoint_connection(fc).comps[(1, 0)][:, 0, 0, 0]
    s1 = np.exp(1j * np.sin(th)) * (1 + 0.2 * np.cos(2 * th))
    s2 = 1 + 0.5 * np.sin(th)
    from nct.base_geometry import derivative
    D = lambda f: derivative(f, g, 0)
    inner = lambda x, y: np.conj(y) * h[:, 0, 0, 0] * x
    lhs = D(inner(s1, s2))
    rhs = inner(D(s1) + a * s1, s2) + inner(s1, D(s2) + As * s2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_super_scale_examples():
    sc = circle_family(32, "spectral")
    bs = block_superconnection(sc, 0)
    Bp, Bpp = scaled_parts(bs, 1.0)
    np.testing.assert_allclose(Bp.comps[(0, 0)], bs.v)
    np.testing.assert_allclose(Bp.comps[(1, 0)], bs.conn[0])
    assert number_scaling_check(bs, 3.7) <= 1e-12
    _, _, half = super_scale(bs, 2.0, 0.5)
    body = half.comps[(0, 0)]
    np.testing.assert_allclose(body, np.swapaxes(body.conj(), -1, -2), atol=1e-12)
    # dtheta* = -dtheta, so a self-adjoint 1-form part has an anti-Hermitian coefficient
    one = half.comps[(1, 0)]
    np.testing.assert_allclose(one, -np.swapaxes(one.conj(), -1, -2), atol=1e-12)
    with pytest.raises(ConnectionError_):
        scaled_parts(bs, 0.0)


def test_cs_of_equal_connections_vanishes():
    sc = circle_family(16, "spectral")
    bs = block_superconnection(sc, 1)
    Bp, _ = scaled_parts(bs, 1.0)
    f = cs_pair_block(Bp, Bp, bs.grid)
    assert f.max_abs() == 0


def test_example3_chern_simons():
    G = build_group("Z2")
    g = make_grid("circle", 64)
    sc = flat_bundle(G, np.array([2.0, 1.0]), g)
    vals = integrate_blocks(cs(sc))
    trivial = int(np.argmax(np.abs(vals)))
    np.testing.assert_allclose(vals[trivial], 2 * np.log(3), atol=1e-6)
    np.testing.assert_allclose(vals[1 - trivial], 0.0, atol=1e-6)


def test_cs_unitary_connection_vanishes():
    G = build_group("Z2")
    g = make_grid("circle", 32)
    sc = flat_bundle(G, np.array([np.exp(0.8j), 0.0]), g)
    for f in cs(sc):
        assert f.max_abs() <= 1e-12


def test_cs_is_metric_isotopy_invariant():
    G = build_group("Z2")
    g = make_grid("circle", 64)
    th, = g.coords()
    vals = []
    for eps in (0.0, 0.3, 0.6):
        h = np.zeros((64, 1, 1, 2), dtype=complex)
        h[:, 0, 0, 0] = 1 + eps * (1 + np.sin(th))
        h[:, 0, 0, 1] = 0.5 * eps * np.cos(th)
        vals.append(integrate_blocks(cs(flat_bundle(G, np.array([2.0, 1.0]), g, metric=h))))
    np.testing.assert_allclose(vals[1], vals[0], atol=1e-4)
    np.testing.assert_allclose(vals[2], vals[0], atol=1e-4)


def test_holonomy_on_negative_axis_rejected():
    with pytest.raises(ConnectionError_):
        holonomy_connection(build_group("Z2"), np.array([0.0, 1.0]), make_grid("circle", 16))


def test_dcs_equals_chern_difference_on_torus():
    # d CS(X1, X2) = ch(X1) - ch(X2) for two non-flat connections on a rank-2 bundle
    t = make_grid("torus2", 12)
    a, b = t.coords()
    rng = np.random.default_rng(8)
    S = a.size

    def random_conn(seed_scale):
        comps = {}
        for i, ang in enumerate((a, b)):
            M = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            N = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            f = (np.sin(ang + i)[..., None, None] * M + np.cos(a + b)[..., None, None] * N) * seed_scale
            comps[(1 << i, 0)] = f.reshape(S, 2, 2)
        return GradedOp(2, None, comps, odd=3)

    X1, X2 = random_conn(0.4), random_conn(0.3)
    f = cs_pair_block(X1, X2, t, n_nodes=10)
    ch = lambda X: supertrace(exp_even(square(X, t)))
    diff = (ch(X1)[(3, 0)] - ch(X2)[(3, 0)]).reshape(t.shape)
    from nct.base_geometry import d10
    dcs = d10(f)[(3, 0)]
    np.testing.assert_allclose(dcs, diff, atol=1e-9)


def test_chern_block_superconnection_is_closed_in_degree_zero():
    # the degree-0 part of the Chern character is the Euler characteristic per block
    sc = circle_family(32, "spectral")
    for bs in pairing_per_irrep(sc, lambda x: x):
        f = chern_block(bs, t=0.7)
        np.testing.assert_allclose(f[(0, 0)], 0.0, atol=1e-10)
