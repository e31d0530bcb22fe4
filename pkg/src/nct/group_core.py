"""Finite and free-abelian groups, their group algebras, and Wedderburn blocks.

Finite groups are stored as multiplication tables over element indices
``0..n-1``.  Free-abelian groups use integer tuples as elements.  Matrices over
the group algebra of a finite group ("B-matrices") are numpy arrays of shape
``(rows, cols, |G|)``; the last axis holds group-algebra coefficients.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

STRUCT_TOL = 1e-10


class GroupError(ValueError):
    pass


class Group:
    """A finite group given by a multiplication table, or Z^rank."""

    def __init__(self, kind, table=None, labels=None, rank=0, name=None):
        self.kind = kind
        self.name = name
        if kind == "finite":
            self.table = np.asarray(table, dtype=np.int64)
            self.order = self.table.shape[0]
            self.labels = list(labels) if labels is not None else [f"g{i}" for i in range(self.order)]
            self._check_table()
            self.identity = self._find_identity()
            self.inverse = np.empty(self.order, dtype=np.int64)
            for a in range(self.order):
                (b,) = np.nonzero(self.table[a] == self.identity)[0][:1]
                self.inverse[a] = b
            self.classes = self._conjugacy_classes()
            self.class_of = np.empty(self.order, dtype=np.int64)
            for ci, cl in enumerate(self.classes):
                self.class_of[cl] = ci
        elif kind == "free_abelian":
            if rank < 1:
                raise GroupError("free-abelian rank must be >= 1")
            self.rank = int(rank)
            self.identity = (0,) * self.rank
            self.order = None
        else:
            raise GroupError(f"unknown group kind {kind!r}")
        self._cache: dict[Any, Any] = {}

    @property
    def is_finite(self):
        return self.kind == "finite"

    def mul(self, a, b):
        if self.is_finite:
            return int(self.table[a, b])
        return tuple(x + y for x, y in zip(a, b))

    def inv(self, a):
        if self.is_finite:
            return int(self.inverse[a])
        return tuple(-x for x in a)

    def elements(self):
        if not self.is_finite:
            raise GroupError("cannot enumerate an infinite group")
        return range(self.order)

    def conj_rep(self, y, x):
        """Return g with y = g x g^-1, or None if y is not conjugate to x."""
        if not self.is_finite:
            return self.identity if tuple(y) == tuple(x) else None
        key = ("conj", x)
        if key not in self._cache:
            reps = {}
            for g in range(self.order):
                c = self.mul(self.mul(g, x), self.inv(g))
                reps.setdefault(c, g)
            self._cache[key] = reps
        return self._cache[key].get(y)

    def _check_table(self):
        n = self.order
        t = self.table
        if t.shape != (n, n) or t.min() < 0 or t.max() >= n:
            raise GroupError("multiplication table is not closed")
        for row in t:
            if len(set(row.tolist())) != n:
                raise GroupError("multiplication table rows are not permutations")
        for col in t.T:
            if len(set(col.tolist())) != n:
                raise GroupError("multiplication table columns are not permutations")
        if n <= 32:
            triples = itertools.product(range(n), repeat=3)
        else:
            rng = np.random.default_rng(0)
            triples = rng.integers(0, n, size=(4000, 3)).tolist()
        for a, b, c in triples:
            if t[t[a, b], c] != t[a, t[b, c]]:
                raise GroupError(f"associativity fails at {(a, b, c)}")

    def _find_identity(self):
        n = self.order
        ids = [e for e in range(n) if np.array_equal(self.table[e], np.arange(n))
               and np.array_equal(self.table[:, e], np.arange(n))]
        if len(ids) != 1:
            raise GroupError("no unique identity element")
        return ids[0]

    def _conjugacy_classes(self):
        seen = set()
        classes = []
        for a in range(self.order):
            if a in seen:
                continue
            orbit = sorted({int(self.table[self.table[g, a], self.inverse[g]]) for g in range(self.order)})
            seen.update(orbit)
            classes.append(orbit)
        return classes

    def __repr__(self):
        if self.is_finite:
            return f"Group({self.name or 'table'}, order={self.order})"
        return f"Group(Z^{self.rank})"


# ----------------------------------------------------------------------------
# constructors

def _perm_label(p):
    n = len(p)
    seen = [False] * n
    cycles = []
    for i in range(n):
        if seen[i]:
            continue
        cyc = []
        j = i
        while not seen[j]:
            seen[j] = True
            cyc.append(j + 1)
            j = p[j]
        if len(cyc) > 1:
            cycles.append("(" + "".join(map(str, cyc)) + ")")
    return "".join(cycles) or "e"


def _cyclic(n):
    if n < 1:
        raise GroupError("cyclic order must be >= 1")
    t = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    labels = ["e"] + [f"g^{k}" if k > 1 else "g" for k in range(1, n)]
    return t, labels


def _symmetric(n):
    if not 1 <= n <= 4:
        raise GroupError("symmetric groups are supported for n <= 4")
    perms = sorted(itertools.permutations(range(n)))
    index = {p: i for i, p in enumerate(perms)}
    t = np.empty((len(perms), len(perms)), dtype=np.int64)
    for i, p in enumerate(perms):
        for j, q in enumerate(perms):
            t[i, j] = index[tuple(p[q[k]] for k in range(n))]
    return t, [_perm_label(p) for p in perms]


def _table_from_spec(spec):
    kind = spec.get("kind")
    if kind == "cyclic":
        return _cyclic(int(spec["n"]))
    if kind == "symmetric":
        return _symmetric(int(spec["n"]))
    if kind == "table":
        t = np.asarray(spec["mul"], dtype=np.int64)
        return t, spec.get("labels") or [f"g{i}" for i in range(t.shape[0])]
    if kind == "product":
        factors = [_table_from_spec(f) for f in spec["factors"]]
        t, labels = factors[0]
        for t2, l2 in factors[1:]:
            n1, n2 = t.shape[0], t2.shape[0]
            new = np.empty((n1 * n2, n1 * n2), dtype=np.int64)
            for a1, a2, b1, b2 in itertools.product(range(n1), range(n2), range(n1), range(n2)):
                new[a1 * n2 + a2, b1 * n2 + b2] = t[a1, b1] * n2 + t2[a2, b2]
            labels = [f"{x}|{y}" for x in labels for y in l2]
            t = new
        return t, labels
    raise GroupError(f"unknown group spec kind {kind!r}")


def parse_group_name(name: str) -> dict:
    """Short names used on the command line: C, Z2, Z3, S3, Z2xZ2, Z (free)."""
    name = name.strip()
    if name in ("C", "1", "trivial"):
        return {"kind": "cyclic", "n": 1}
    if name.startswith("Z^"):
        return {"kind": "free_abelian", "rank": int(name[2:])}
    if name == "Z":
        return {"kind": "free_abelian", "rank": 1}
    if "x" in name:
        return {"kind": "product", "factors": [parse_group_name(p) for p in name.split("x")]}
    if name[0] in "ZC" and name[1:].isdigit():
        return {"kind": "cyclic", "n": int(name[1:])}
    if name[0] == "S" and name[1:].isdigit():
        return {"kind": "symmetric", "n": int(name[1:])}
    raise GroupError(f"cannot parse group name {name!r}")


def build_group(spec) -> Group:
    if isinstance(spec, str):
        spec = parse_group_name(spec)
    if spec.get("kind") == "free_abelian":
        return Group("free_abelian", rank=int(spec.get("rank", 1)), name=f"Z^{spec.get('rank', 1)}")
    table, labels = _table_from_spec(spec)
    name = spec.get("kind")
    if name in ("cyclic", "symmetric"):
        name = f"{'Z' if name == 'cyclic' else 'S'}{spec['n']}"
    return Group("finite", table=table, labels=labels, name=name)


# ----------------------------------------------------------------------------
# group algebra elements

class AlgebraElement:
    """Finite-support element of the group algebra, as {element: coefficient}."""

    __slots__ = ("group", "coeffs")

    def __init__(self, group: Group, coeffs=None):
        self.group = group
        self.coeffs = {k: complex(v) for k, v in (coeffs or {}).items() if v != 0}

    @classmethod
    def basis(cls, group, g, c=1.0):
        return cls(group, {g: c})

    @classmethod
    def from_vector(cls, group, vec):
        return cls(group, {g: complex(c) for g, c in enumerate(vec) if c != 0})

    def vector(self):
        if not self.group.is_finite:
            raise GroupError("dense vectors exist only for finite groups")
        v = np.zeros(self.group.order, dtype=complex)
        for g, c in self.coeffs.items():
            v[g] += c
        return v

    def __add__(self, other):
        _same(self, other)
        out = dict(self.coeffs)
        for g, c in other.coeffs.items():
            out[g] = out.get(g, 0) + c
        return AlgebraElement(self.group, out)

    def __neg__(self):
        return AlgebraElement(self.group, {g: -c for g, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return ga_mul(self, other)
        return AlgebraElement(self.group, {g: c * other for g, c in self.coeffs.items()})

    def __rmul__(self, scalar):
        return AlgebraElement(self.group, {g: scalar * c for g, c in self.coeffs.items()})

    def coefficient(self, g):
        return self.coeffs.get(g, 0j)

    def max_abs(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def __repr__(self):
        return f"AlgebraElement({self.coeffs})"


def _same(a, b):
    if a.group is not b.group:
        raise GroupError("group mismatch")


def ga_mul(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    _same(a, b)
    G = a.group
    out: dict = {}
    for g, x in a.coeffs.items():
        for h, y in b.coeffs.items():
            k = G.mul(g, h)
            out[k] = out.get(k, 0) + x * y
    return AlgebraElement(G, out)


def ga_star(a: AlgebraElement) -> AlgebraElement:
    G = a.group
    return AlgebraElement(G, {G.inv(g): np.conj(c) for g, c in a.coeffs.items()})


@dataclass
class ClassFunction:
    """Values on conjugacy classes (or on single elements for Z^n)."""

    group: Group
    values: dict

    def __getitem__(self, key):
        return self.values.get(key, 0j)

    def labels(self):
        G = self.group
        if not G.is_finite:
            return {k: str(k) for k in self.values}
        return {ci: "<" + G.labels[cl[0]] + ">" for ci, cl in enumerate(G.classes)}


def class_trace(a: AlgebraElement) -> ClassFunction:
    G = a.group
    if not G.is_finite:
        return ClassFunction(G, dict(a.coeffs))
    vals = {ci: 0j for ci in range(len(G.classes))}
    for g, c in a.coeffs.items():
        vals[int(G.class_of[g])] += c
    return ClassFunction(G, vals)


def class_trace_vector(G: Group, vec) -> np.ndarray:
    """Class sums of a dense coefficient vector (last axis)."""
    vec = np.asarray(vec)
    out = np.zeros(vec.shape[:-1] + (len(G.classes),), dtype=complex)
    for ci, cl in enumerate(G.classes):
        out[..., ci] = vec[..., cl].sum(axis=-1)
    return out


# ----------------------------------------------------------------------------
# dense B-matrix algebra over a finite group

def structure_tensor(G: Group) -> np.ndarray:
    """S[g, h, k] = 1 if g*h == k."""
    if "struct" not in G._cache:
        n = G.order
        S = np.zeros((n, n, n))
        S[np.arange(n)[:, None], np.arange(n)[None, :], G.table] = 1.0
        G._cache["struct"] = S
    return G._cache["struct"]


def regular_matrix(G: Group, vec) -> np.ndarray:
    """Left-regular representation: L[g h, h] = vec[g]."""
    vec = np.asarray(vec)
    S = structure_tensor(G)
    return np.einsum("...g,ghk->...kh", vec, S)


def right_regular_matrix(G: Group, vec) -> np.ndarray:
    """Right multiplication x -> x * b as a matrix: R[h g, h] = vec[g]."""
    vec = np.asarray(vec)
    S = structure_tensor(G)
    return np.einsum("...g,hgk->...kh", vec, S)


def bmat_identity(G: Group, n: int) -> np.ndarray:
    out = np.zeros((n, n, G.order), dtype=complex)
    out[np.arange(n), np.arange(n), G.identity] = 1.0
    return out


def bmat_scalar(G: Group, mat) -> np.ndarray:
    """Embed a complex matrix as a B-matrix with entries in C*e."""
    mat = np.atleast_2d(np.asarray(mat, dtype=complex))
    out = np.zeros(mat.shape + (G.order,), dtype=complex)
    out[..., G.identity] = mat
    return out


def bmat_mul(A, B, G: Group) -> np.ndarray:
    S = structure_tensor(G)
    return np.einsum("...ijg,...jkh,ghm->...ikm", A, B, S, optimize=True)


def bmat_star(A, G: Group) -> np.ndarray:
    """Conjugate transpose with the group-algebra involution on entries."""
    A = np.asarray(A)
    return np.conj(np.swapaxes(A, -2, -3)[..., G.inverse])


def bmat_regular(A, G: Group) -> np.ndarray:
    """Realize a B-matrix in the left-regular representation."""
    A = np.asarray(A)
    L = regular_matrix(G, A)  # (..., r, c, n, n)
    r, c, n = A.shape[-3], A.shape[-2], G.order
    L = np.moveaxis(L, -2, -3)  # (..., r, n, c, n)
    return L.reshape(A.shape[:-3] + (r * n, c * n))


def bmat_from_regular(M, G: Group, rows: int, cols: int) -> np.ndarray:
    """Inverse of bmat_regular: read coefficients off the identity columns."""
    n = G.order
    M = np.asarray(M)
    M = M.reshape(M.shape[:-2] + (rows, n, cols, n))
    return np.swapaxes(M[..., G.identity], -2, -1)


# ----------------------------------------------------------------------------
# Wedderburn decomposition

class WedderburnError(RuntimeError):
    pass


@dataclass
class WedderburnData:
    group: Group
    idempotents: list  # dense coefficient vectors
    dims: list
    irreps: list  # arrays (|G|, n, n), unitary
    characters: np.ndarray = field(default=None)  # (blocks, classes)

    @property
    def nblocks(self):
        return len(self.dims)


def _split_clusters(vals, tol):
    order = np.argsort(vals)
    groups = [[order[0]]]
    for a, b in zip(order[:-1], order[1:]):
        if vals[b] - vals[a] > tol:
            groups.append([b])
        else:
            groups[-1].append(b)
    return groups


def _hermitian_class_operators(G):
    n = G.order
    ops = []
    for cl in G.classes:
        z = np.zeros(n, dtype=complex)
        z[cl] = 1.0
        L = regular_matrix(G, z)
        ops.append(L + L.conj().T)
        ops.append(1j * (L - L.conj().T))
    return ops


def wedderburn(G: Group, seed: int = 0, tol: float = 1e-8) -> WedderburnData:
    """Central idempotents and unitary irreps by simultaneous diagonalization."""
    if not G.is_finite:
        raise WedderburnError("Wedderburn decomposition needs a finite group")
    if "wedderburn" in G._cache:
        return G._cache["wedderburn"]
    n = G.order
    rng = np.random.default_rng(seed)
    nclass = len(G.classes)
    # random self-adjoint central element
    r = rng.normal(size=nclass) + 1j * rng.normal(size=nclass)
    z = np.zeros(n, dtype=complex)
    for ci, cl in enumerate(G.classes):
        z[cl] = r[ci]
    z = z + np.conj(z[G.inverse])
    L = regular_matrix(G, z)
    w, V = np.linalg.eigh(L)
    spaces = [V[:, idx] for idx in _split_clusters(w, tol * max(1.0, np.abs(w).max()))]
    # refine with every class operator until all act as scalars
    for op in _hermitian_class_operators(G):
        refined = []
        for Q in spaces:
            sub = Q.conj().T @ op @ Q
            sw, sv = np.linalg.eigh((sub + sub.conj().T) / 2)
            for idx in _split_clusters(sw, tol * max(1.0, np.abs(sw).max())):
                refined.append(Q @ sv[:, idx])
        spaces = refined
    if len(spaces) != nclass:
        raise WedderburnError(f"found {len(spaces)} blocks but group has {nclass} classes")
    idems, dims, irreps = [], [], []
    for Q in spaces:
        d2 = Q.shape[1]
        d = int(round(np.sqrt(d2)))
        if d * d != d2:
            raise WedderburnError(f"block of dimension {d2} is not a square")
        P = Q @ Q.conj().T
        p = P[:, G.identity].copy()
        idems.append(p)
        dims.append(d)
        irreps.append(_irrep_from_block(G, Q, d, rng, tol))
    chars = np.array([[np.trace(rho[cl[0]]) for cl in G.classes] for rho in irreps])
    # deterministic order: dimension, then characters (trivial first)
    keys = []
    for i in range(len(dims)):
        key = [dims[i]]
        for ci in range(nclass):
            key += [-round(chars[i, ci].real, 6), -round(chars[i, ci].imag, 6)]
        keys.append(tuple(key))
    perm = sorted(range(len(dims)), key=lambda i: keys[i])
    wd = WedderburnData(G, [idems[i] for i in perm], [dims[i] for i in perm],
                        [irreps[i] for i in perm], chars[perm])
    _check_wedderburn(wd)
    G._cache["wedderburn"] = wd
    return wd


def _irrep_from_block(G, Q, d, rng, tol):
    if d == 1:
        U = Q[:, :1]
    else:
        for _ in range(20):
            b = rng.normal(size=G.order) + 1j * rng.normal(size=G.order)
            b = b + np.conj(b[G.inverse])
            R = right_regular_matrix(G, b)
            sub = Q.conj().T @ R @ Q
            sw, sv = np.linalg.eigh((sub + sub.conj().T) / 2)
            groups = _split_clusters(sw, tol * max(1.0, np.abs(sw).max()))
            if all(len(gp) == d for gp in groups) and len(groups) == d:
                U = Q @ sv[:, groups[0]]
                break
        else:
            raise WedderburnError("could not split a block into irreducible copies")
    rho = np.empty((G.order, d, d), dtype=complex)
    for g in range(G.order):
        e = np.zeros(G.order)
        e[g] = 1.0
        rho[g] = U.conj().T @ regular_matrix(G, e) @ U
    return rho


def _check_wedderburn(wd):
    G = wd.group
    n = G.order
    one = np.zeros(n, dtype=complex)
    one[G.identity] = 1
    S = structure_tensor(G)
    mul = lambda a, b: np.einsum("g,h,ghk->k", a, b, S)
    if abs(sum(wd.dims[i] ** 2 for i in range(wd.nblocks)) - n) != 0:
        raise WedderburnError("block dimensions do not sum to |G|")
    if np.abs(sum(wd.idempotents) - one).max() > STRUCT_TOL:
        raise WedderburnError("idempotents do not sum to one")
    for rho in wd.irreps:
        for a in range(n):
            for b in range(n):
                if np.abs(rho[a] @ rho[b] - rho[G.table[a, b]]).max() > 1e-8:
                    raise WedderburnError("block map is not a homomorphism")


def wedderburn_report(wd: WedderburnData) -> dict:
    """Residuals of the idempotent relations (sum, orthogonality, centrality)."""
    G = wd.group
    S = structure_tensor(G)
    mul = lambda a, b: np.einsum("g,h,ghk->k", a, b, S)
    one = np.zeros(G.order, dtype=complex)
    one[G.identity] = 1
    res = {"sum": float(np.abs(sum(wd.idempotents) - one).max()), "idempotent": 0.0,
           "orthogonal": 0.0, "central": 0.0}
    for i, p in enumerate(wd.idempotents):
        res["idempotent"] = max(res["idempotent"], float(np.abs(mul(p, p) - p).max()))
        for j, q in enumerate(wd.idempotents):
            if i != j:
                res["orthogonal"] = max(res["orthogonal"], float(np.abs(mul(p, q)).max()))
        for g in range(G.order):
            e = np.zeros(G.order)
            e[g] = 1
            res["central"] = max(res["central"], float(np.abs(mul(p, e) - mul(e, p)).max()))
    return res


def realize(A, wd: WedderburnData, block: int) -> np.ndarray:
    """Image of a B-matrix (..., r, c, |G|) under one irreducible block."""
    A = np.asarray(A)
    rho = wd.irreps[block]
    d = rho.shape[1]
    M = np.einsum("...ijg,gab->...iajb", A, rho)
    r, c = A.shape[-3], A.shape[-2]
    return M.reshape(A.shape[:-3] + (r * d, c * d))


def from_blocks(blocks, wd: WedderburnData, rows: int, cols: int) -> np.ndarray:
    """Reassemble a B-matrix from its per-block images (Fourier inversion)."""
    G = wd.group
    out = None
    for rho, d, X in zip(wd.irreps, wd.dims, blocks):
        X = np.asarray(X)
        X = X.reshape(X.shape[:-2] + (rows, d, cols, d))
        # coefficient of g: (d/|G|) tr(rho(g)^* X_ij)
        term = (d / G.order) * np.einsum("gab,...iajb->...ijg", np.conj(rho), X)
        out = term if out is None else out + term
    return out


def block_traces(vec, wd: WedderburnData) -> np.ndarray:
    """tr rho(b) for each block, for coefficient vectors on the last axis."""
    vec = np.asarray(vec)
    chars = np.array([np.trace(rho, axis1=1, axis2=2) for rho in wd.irreps])  # (blocks, |G|)
    return np.einsum("...g,bg->...b", vec, chars)


def block_spectrum(T, G: Group, e=None, per_block=False):
    """Eigenvalues of a square B-matrix, computed block by block.

    When a module idempotent ``e`` is given the spectrum is that of T restricted
    to the range of e.
    """
    T = np.asarray(T)
    if T.ndim != 3 or T.shape[0] != T.shape[1]:
        raise ValueError("block_spectrum needs a square B-matrix")
    wd = wedderburn(G)
    spectra = []
    for b in range(wd.nblocks):
        M = realize(T, wd, b)
        if e is not None:
            E = realize(e, wd, b)
            U, s, _ = np.linalg.svd(E)
            Q = U[:, s > 0.5]
            M = np.linalg.pinv(Q) @ M @ Q
        spectra.append(np.linalg.eigvals(M) if M.size else np.zeros(0, dtype=complex))
    if per_block:
        return spectra
    return np.concatenate(spectra) if spectra else np.zeros(0, dtype=complex)


def brute_force_spectrum(T, G: Group) -> np.ndarray:
    return np.linalg.eigvals(bmat_regular(T, G))


def class_function_from_block_traces(wd: WedderburnData, traces) -> ClassFunction:
    """Class sums sum_{g in C} b_g recovered from the block traces tr rho(b).

    Column orthogonality of characters gives
    sum_{g in C} b_g = |C|/|G| sum_rho conj(chi_rho(C)) tr rho(b).
    """
    G = wd.group
    traces = np.asarray(traces)
    vals = {}
    for ci, cl in enumerate(G.classes):
        vals[ci] = len(cl) / G.order * np.dot(np.conj(wd.characters[:, ci]), traces)
    return ClassFunction(G, vals)


def identity_trace(wd: WedderburnData, traces) -> complex:
    """Coefficient of the identity: (1/|G|) sum_rho n_rho tr rho(b)."""
    return complex(np.dot(wd.dims, np.asarray(traces)) / wd.group.order)
