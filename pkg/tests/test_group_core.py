import itertools

import numpy as np
import pytest

from nct.group_core import (AlgebraElement, GroupError, WedderburnError, block_spectrum, bmat_regular,
                            build_group, class_trace, ga_mul, ga_star, wedderburn, wedderburn_report)
from oracles import bmat_to_dense


def assert_same_multiset(a, b, tol):
    a, b = list(a), list(b)
    assert len(a) == len(b)
    for x in a:
        i = int(np.argmin(np.abs(np.asarray(b) - x)))
        assert abs(b[i] - x) <= tol
        b.pop(i)


def random_elem(G, rng):
    return AlgebraElement.from_vector(G, rng.normal(size=G.order) + 1j * rng.normal(size=G.order))


def test_build_group_sizes_and_classes():
    assert build_group({"kind": "cyclic", "n": 1}).order == 1
    assert len(build_group({"kind": "cyclic", "n": 1}).classes) == 1
    Z3 = build_group({"kind": "cyclic", "n": 3})
    assert (Z3.order, len(Z3.classes)) == (3, 3)
    S3 = build_group({"kind": "symmetric", "n": 3})
    assert (S3.order, len(S3.classes)) == (6, 3)
    assert sorted(len(c) for c in S3.classes) == [1, 2, 3]


def test_classes_partition_and_are_conjugation_orbits():
    for name in ("S3", "Z2xZ2", "S4"):
        G = build_group(name)
        seen = sorted(itertools.chain.from_iterable(G.classes))
        assert seen == list(range(G.order))
        for cl in G.classes:
            orbit = {G.mul(G.mul(y, cl[0]), G.inv(y)) for y in range(G.order)}
            assert orbit == set(cl)


def test_bad_table_rejected():
    with pytest.raises(GroupError):
        build_group({"kind": "table", "mul": [[0, 1], [0, 1]]})
    with pytest.raises(GroupError):
        build_group({"kind": "table", "mul": [[0, 1, 2], [1, 2, 0], [2, 1, 0]]})


def test_ga_mul_examples():
    Z2 = build_group("Z2")
    e, g = 0, 1
    a = AlgebraElement(Z2, {e: 1, g: 1})
    prod = ga_mul(a, a)
    assert prod.coeffs == {e: 2, g: 2}
    b = AlgebraElement(Z2, {e: 0.5, g: -3j})
    assert ga_mul(AlgebraElement.basis(Z2, e), b).coeffs == b.coeffs
    Z = build_group("Z")
    u = ga_mul(AlgebraElement.basis(Z, (2,)), AlgebraElement.basis(Z, (3,)))
    assert u.coeffs == {(5,): 1}


def test_ga_mul_group_mismatch():
    with pytest.raises(GroupError):
        ga_mul(AlgebraElement.basis(build_group("Z2"), 0), AlgebraElement.basis(build_group("Z3"), 0))


def test_ga_star():
    Z3 = build_group("Z3")
    # labels follow powers of the generator
    g = 1
    s = ga_star(AlgebraElement(Z3, {g: 1j}))
    assert s.coeffs == {Z3.mul(g, g): -1j}
    rng = np.random.default_rng(0)
    S3 = build_group("S3")
    for _ in range(5):
        a, b = random_elem(S3, rng), random_elem(S3, rng)
        np.testing.assert_allclose(ga_star(ga_star(a)).vector(), a.vector(), atol=1e-14)
        np.testing.assert_allclose(ga_star(a * b).vector(), (ga_star(b) * ga_star(a)).vector(), atol=1e-12)
    e = AlgebraElement.basis(S3, S3.identity)
    assert ga_star(e).coeffs == e.coeffs


def test_class_trace():
    Z2 = build_group("Z2")
    cf = class_trace(AlgebraElement(Z2, {0: 2, 1: 3}))
    assert (cf[int(Z2.class_of[0])], cf[int(Z2.class_of[1])]) == (2, 3)
    S3 = build_group("S3")
    transp = [i for i, cl in enumerate(S3.classes) if len(cl) == 3][0]
    a = AlgebraElement(S3, {g: 1.0 for g in S3.classes[transp]})
    cf = class_trace(a)
    assert cf[transp] == 3
    assert all(cf[i] == 0 for i in range(3) if i != transp)
    rng = np.random.default_rng(1)
    for _ in range(5):
        a, b = random_elem(S3, rng), random_elem(S3, rng)
        c = class_trace(a * b - b * a)
        assert max(abs(v) for v in c.values.values()) < 1e-12


def test_wedderburn_small_groups():
    wd = wedderburn(build_group("C"))
    assert wd.dims == [1]
    Z2 = build_group("Z2")
    wd = wedderburn(Z2)
    assert sorted(wd.dims) == [1, 1]
    # character projection formula: p = (n/|G|) sum conj(chi(g)) g gives (e +- g)/2
    expected = sorted([[0.5, 0.5], [0.5, -0.5]])
    got = sorted(np.real(p).round(12).tolist() for p in wd.idempotents)
    np.testing.assert_allclose(got, expected, atol=1e-12)
    wd = wedderburn(build_group("S3"))
    assert sorted(wd.dims) == [1, 1, 2]
    assert sum(n * n for n in wd.dims) == 6


@pytest.mark.parametrize("name", ["C", "Z2", "Z3", "S3", "Z2xZ2", "S4"])
def test_wedderburn_relations(name):
    res = wedderburn_report(wedderburn(build_group(name)))
    assert max(res.values()) <= 1e-10


def test_wedderburn_rejects_free_abelian():
    with pytest.raises((WedderburnError, GroupError)):
        wedderburn(build_group("Z"))


def test_block_spectrum_examples():
    Z2 = build_group("Z2")
    T = np.array([[[2.0, 1.0]]])
    np.testing.assert_allclose(np.sort(block_spectrum(T, Z2).real), [1.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(block_spectrum(np.zeros((1, 1, 2)), Z2), 0, atol=1e-14)
    P = np.array([[[0.5, 0.5]]])
    sp = block_spectrum(P, Z2)
    assert np.all(np.min(np.abs(sp[:, None] - np.array([0, 1])[None]), axis=1) < 1e-12)


def test_block_spectrum_matches_regular_representation():
    rng = np.random.default_rng(5)
    for name in ("Z3", "S3"):
        G = build_group(name)
        T = rng.normal(size=(3, 3, G.order))
        # each block of size n appears n times in the regular representation
        wd = wedderburn(G)
        per = block_spectrum(T, G, per_block=True)
        ours = np.concatenate([np.repeat(s, n) for s, n in zip(per, wd.dims)])
        brute = np.linalg.eigvals(bmat_to_dense(T, G.table))
        assert_same_multiset(ours, brute, 1e-9)
        np.testing.assert_allclose(bmat_regular(T, G).shape, (3 * G.order, 3 * G.order))


def test_block_spectrum_needs_square():
    with pytest.raises(ValueError):
        block_spectrum(np.zeros((2, 3, 2)), build_group("Z2"))
