"""Connections and superconnections over discretized bases: curvature, Chern character, Chern-Simons forms.

Form-valued operators are held in a ``GradedOp``: one array per component
key ``(mask, q)``.  ``mask`` is a bit mask of generators.  Base directions are
odd generators dtheta_i.  An optional extra generator (``eps``) is even and
squares to zero; it is used to read off first-order variations.  ``q`` is the
degree of the noncommutative channel.

Two coefficient models are used:

* complex matrices (one Wedderburn block at a time, q = 0 only), with a
  cochain degree attached to every row; this carries superconnections and
  everything the torsion pipeline needs;
* matrices over Omega_*(B) for a finite group (dense Omega_q coordinates on
  the last axis, no cochain grading); this carries connections with a
  noncommutative part, whose curvature is nilpotent.

Sign rule for a product of components (alpha X)(beta Y):
    reorder sign of alpha beta
  * (-1)^{q_X |beta|}
  * X conjugated by (-1)^{(|beta| + q_Y) N}  (cochain parity of X against beta and Y's form part)
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .base_geometry import BaseGrid, FormField, derivative, omega_pp_project, popcount
from .group_core import Group, bmat_identity, block_traces, from_blocks, realize, wedderburn
from .nc_forms import d_matrix, form_dim, mul_tensor, star_matrix


class ConnectionError_(ValueError):
    pass


def _reorder_sign(m1: int, m2: int, odd: int) -> int:
    a, b = m1 & odd, m2 & odd
    s = 0
    while b:
        low = b & -b
        s += popcount(a & ~(low - 1) & ~low)
        b ^= low
    return -1 if s & 1 else 1


class GradedOp:
    """Form-valued operator field.

    ``comps[(mask, q)]`` has shape (S, R, R) in the complex model or
    (S, R, R, dim Omega_q) in the Omega(B) model.  ``degrees`` lists the
    cochain degree of each row.  ``odd`` is the mask of odd generators.
    """

    def __init__(self, R, degrees=None, comps=None, odd=0, group=None, q_max=0):
        self.R = R
        self.degrees = np.zeros(R, dtype=int) if degrees is None else np.asarray(degrees, dtype=int)
        self.comps = dict(comps or {})
        self.odd = odd
        self.group = group
        self.q_max = q_max

    @property
    def nc(self):
        return self.group is not None

    def like(self, comps=None):
        return GradedOp(self.R, self.degrees, comps, self.odd, self.group, self.q_max)

    def parity_sign(self):
        return (-1.0) ** self.degrees

    def __add__(self, other):
        out = dict(self.comps)
        for k, v in other.comps.items():
            out[k] = out[k] + v if k in out else v
        return self.like(out)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, other):
        if isinstance(other, GradedOp):
            return graded_product(self, other)
        return self.like({k: v * other for k, v in self.comps.items()})

    __rmul__ = __mul__

    def component(self, mask, q=0):
        return self.comps.get((mask, q))

    def body(self):
        return self.comps.get((0, 0))

    def soul(self):
        return self.like({k: v for k, v in self.comps.items() if k != (0, 0)})

    def max_abs(self):
        return max((float(np.abs(v).max(initial=0.0)) for v in self.comps.values()), default=0.0)

    def drop_zero(self, tol=0.0):
        return self.like({k: v for k, v in self.comps.items() if np.abs(v).max(initial=0.0) > tol})


def graded_product(X: GradedOp, Y: GradedOp) -> GradedOp:
    out = {}
    sig = X.parity_sign()
    for (m1, q1), a in X.comps.items():
        for (m2, q2), b in Y.comps.items():
            if m1 & m2:
                continue
            if X.nc and q1 + q2 > X.q_max:
                continue
            p2 = popcount(m2 & X.odd)
            sign = _reorder_sign(m1, m2, X.odd) * (-1) ** (q1 * p2)
            left = a
            if (p2 + q2) % 2:
                par = np.multiply.outer(sig, sig)
                left = a * par[..., None] if X.nc else a * par
            if X.nc:
                M = mul_tensor(X.group, q1, q2)
                prod = np.einsum("sija,sjkb,abc->sikc", _bcast(left, b), _bcast(b, left), M, optimize=True)
            else:
                prod = left @ b
            key = (m1 | m2, q1 + q2)
            out[key] = out[key] + sign * prod if key in out else sign * prod
    return X.like(out)


def _bcast(a, b):
    if a.shape[0] == 1 and b.shape[0] > 1:
        return np.broadcast_to(a, (b.shape[0],) + a.shape[1:])
    return a


def graded_commutator(X: GradedOp, Y: GradedOp, parity_x: int, parity_y: int) -> GradedOp:
    return X * Y - (Y * X) * ((-1) ** (parity_x * parity_y))


def supertrace(X: GradedOp) -> dict:
    """Tr_s: {(mask, q): array (S,) or (S, dim Omega_q)}."""
    sig = X.parity_sign()
    out = {}
    for key, a in X.comps.items():
        if X.nc:
            out[key] = np.einsum("sia,i->sa", np.einsum("sii...->si...", a), sig)
        else:
            out[key] = np.einsum("sii->si", a) @ sig
    return out


def identity_op(R, S=1, degrees=None, odd=0, group=None, q_max=0):
    if group is None:
        comps = {(0, 0): np.broadcast_to(np.eye(R, dtype=complex), (S, R, R)).copy()}
    else:
        I = np.zeros((S, R, R, group.order), dtype=complex)
        I[:, np.arange(R), np.arange(R), group.identity] = 1.0
        comps = {(0, 0): I}
    return GradedOp(R, degrees, comps, odd, group, q_max)


# ----------------------------------------------------------------------------
# exponentials

def _soul_sequences(keys, odd):
    """Ordered sequences of soul keys with pairwise disjoint masks."""
    out = [()]
    frontier = [((), 0)]
    while frontier:
        nxt = []
        for seq, used in frontier:
            for k in keys:
                if k[0] & used:
                    continue
                s = seq + (k,)
                out.append(s)
                nxt.append((s, used | k[0]))
        frontier = nxt
    return out


def _seq_sign(masks, odd):
    sign = 1
    acc = 0
    for m in masks:
        sign *= _reorder_sign(acc, m, odd)
        acc |= m
    return sign


def _psi(a, b):
    """int_0^1 exp(-(1-s) a - s b) ds, stable for close arguments."""
    lo = np.minimum(a.real, b.real)
    delta = np.abs(a - b)
    small = delta < 1e-8
    safe = np.where(small, 1.0, delta)
    val = np.where(small, 1.0 - delta / 2, -np.expm1(-safe) / safe)
    return np.exp(-lo) * val


def _chain_integral(K, Cs, hermitian_eig=None):
    """int over the simplex of e^{-s0 K} C1 e^{-s1 K} ... Cn e^{-sn K}, batched over S."""
    n = len(Cs)
    S, R, _ = K.shape
    if hermitian_eig is not None and n <= 1:
        w, V = hermitian_eig
        if n == 0:
            return (V * np.exp(-w)[:, None, :]) @ np.swapaxes(V.conj(), -1, -2)
        Vh = np.swapaxes(V.conj(), -1, -2)
        Ct = Vh @ Cs[0] @ V
        Ct = Ct * _psi(w[:, :, None], w[:, None, :])
        return V @ Ct @ Vh
    if n == 0:
        return expm(-K)
    big = np.zeros((S, (n + 1) * R, (n + 1) * R), dtype=complex)
    for i in range(n + 1):
        big[:, i * R:(i + 1) * R, i * R:(i + 1) * R] = -K
    for i, C in enumerate(Cs):
        big[:, i * R:(i + 1) * R, (i + 1) * R:(i + 2) * R] = C
    E = expm(big)
    return E[:, :R, n * R:]


def exp_even(X: GradedOp, hermitian_body: bool | None = None, body_eig=None) -> GradedOp:
    """exp(-X) for an even element: Duhamel expansion of the soul around the body.

    The body is the (0, 0) component.  Each ordered sequence of soul
    components contributes an iterated integral of body heat factors, computed
    exactly as a block of a block-bidiagonal matrix exponential (or through an
    eigendecomposition when the body is Hermitian and at most one soul factor
    appears).  The sequence length is bounded by nilpotency, so the sum is
    finite.  ``body_eig`` = (w, V) may supply the eigendecomposition of a
    Hermitian body (shapes (S, R) and (S, R, R)).
    """
    if X.nc:
        return _exp_nilpotent(X)
    body = X.body()
    S = max((v.shape[0] for v in X.comps.values()), default=1)
    R = X.R
    K = np.zeros((S, R, R), dtype=complex) if body is None else np.broadcast_to(body, (S, R, R))
    soul = {k: np.broadcast_to(v, (S, R, R)) for k, v in X.comps.items() if k != (0, 0)}
    if hermitian_body is None:
        hermitian_body = np.abs(K - np.swapaxes(K.conj(), -1, -2)).max(initial=0.0) <= 1e-12 * max(1.0, np.abs(K).max(initial=0.0))
    eig = body_eig
    if eig is None and hermitian_body:
        w, V = np.linalg.eigh((K + np.swapaxes(K.conj(), -1, -2)) / 2)
        eig = (w, V)
    sig = X.parity_sign()
    parity = np.multiply.outer(sig, sig)
    if np.abs(K * (1 - parity)).max(initial=0.0) > 1e-12 * max(1.0, np.abs(K).max(initial=0.0)):
        raise ConnectionError_("the body of an even element must preserve cochain parity")
    out = {}
    for seq in _soul_sequences(sorted(soul), X.odd):
        masks = [k[0] for k in seq]
        sign = _seq_sign(masks, X.odd) * (-1) ** len(seq)
        Cs = []
        for j, k in enumerate(seq):
            later = sum(popcount(m & X.odd) for m in masks[j + 1:])
            C = soul[k]
            Cs.append(C * parity if later % 2 else C)
        term = _chain_integral(K, Cs, eig)
        key = (int(np.bitwise_or.reduce(masks)) if masks else 0, 0)
        out[key] = out[key] + sign * term if key in out else sign * term
    return X.like(out)


def _exp_nilpotent(X: GradedOp) -> GradedOp:
    body = X.body()
    if body is not None and np.abs(body).max(initial=0.0) > 0:
        raise ConnectionError_("the Omega(B) model needs a nilpotent argument (zero body)")
    S = max((v.shape[0] for v in X.comps.values()), default=1)
    result = identity_op(X.R, S, X.degrees, X.odd, X.group, X.q_max)
    term = result
    nmax = popcount(X.odd) + X.q_max + 1
    for n in range(1, nmax + 1):
        term = (term * X) * (-1.0 / n)
        term = term.drop_zero()
        if not term.comps:
            break
        result = result + term
    return result


# ----------------------------------------------------------------------------
# base derivative of operator fields

def d10_op(X: GradedOp, grid: BaseGrid, stencil=None) -> GradedOp:
    """Base exterior derivative of the coefficient functions (sites on axis 0)."""
    out = {}
    for (m, q), a in X.comps.items():
        if a.shape[0] == 1 and grid.dim:
            a = np.broadcast_to(a, (int(np.prod(grid.shape)),) + a.shape[1:])
        for i in range(grid.dim):
            if m >> i & 1:
                continue
            arr = a.reshape(grid.shape + a.shape[1:])
            der = derivative(arr, grid, i, stencil).reshape(a.shape)
            sign = (-1) ** popcount(m & ((1 << i) - 1))
            key = (m | 1 << i, q)
            out[key] = out[key] + sign * der if key in out else sign * der
    return X.like(out)


def d01_op(X: GradedOp) -> GradedOp:
    """Entrywise universal differential with sign (-1)^p."""
    if not X.nc:
        raise ConnectionError_("d01 acts only in the Omega(B) model")
    out = {}
    for (m, q), a in X.comps.items():
        if q + 1 > X.q_max:
            continue
        D = d_matrix(X.group, q)
        out[(m, q + 1)] = (-1) ** popcount(m & X.odd) * np.einsum("sija,ba->sijb", a, D)
    return X.like(out)


# ----------------------------------------------------------------------------
# connection data

@dataclass
class FamilyConnection:
    """A connection on a free B-module of rank N over a base grid.

    ``A[i]`` is the dtheta_i coefficient, a B-matrix per site, shape
    (S, N, N, |G|).  ``omega1`` is the noncommutative correction, a matrix over
    Omega_1(B) per site, shape (S, N, N, dim Omega_1), or None.  The
    noncommutative part of the connection is the entrywise universal d plus
    omega1.  ``metric`` is a B-matrix per site or None (unit metric).
    """

    grid: BaseGrid
    group: Group
    N: int
    A: list
    omega1: np.ndarray | None = None
    metric: np.ndarray | None = None

    @property
    def sites(self):
        return int(np.prod(self.grid.shape)) if self.grid.dim else 1


@dataclass
class Superconnection:
    """A' = v + nabla (+ optional higher terms) on a graded free module over a base grid.

    ``ranks[j]`` is the rank of E^j.  ``v[j]`` maps E^j to E^{j+1}: B-matrices of
    shape (S, N_{j+1}, N_j, |G|).  ``A[j][i]`` is the dtheta_i coefficient of the
    connection on E^j.  ``metrics[j]`` is a B-matrix field or None.  ``higher``
    maps a form mask of degree >= 2 to a full (S, R, R, |G|) B-matrix field of
    cochain degree 1 - p.
    """

    grid: BaseGrid
    group: Group
    ranks: list
    v: list
    A: list | None = None
    metrics: list | None = None
    higher: dict = field(default_factory=dict)

    @property
    def sites(self):
        return int(np.prod(self.grid.shape)) if self.grid.dim else 1

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.ranks)]).astype(int)


def _field(arr, S, shape):
    arr = np.asarray(arr, dtype=complex)
    if arr.shape == shape:
        arr = np.broadcast_to(arr, (S,) + shape)
    if arr.shape != (S,) + shape:
        raise ConnectionError_(f"expected field of shape {(S,) + shape}, got {arr.shape}")
    return arr


def full_bmat_fields(sc: Superconnection):
    """Assemble v, connection coefficients and metric as full (S, R, R, |G|) fields."""
    G, S = sc.group, sc.sites
    off = sc.offsets
    R = off[-1]
    n = G.order
    V = np.zeros((S, R, R, n), dtype=complex)
    for j, vj in enumerate(sc.v):
        V[:, off[j + 1]:off[j + 2], off[j]:off[j + 1]] = _field(vj, S, (sc.ranks[j + 1], sc.ranks[j], n))
    A = np.zeros((sc.grid.dim, S, R, R, n), dtype=complex)
    if sc.A is not None:
        for j, Aj in enumerate(sc.A):
            if Aj is None:
                continue
            for i in range(sc.grid.dim):
                A[i, :, off[j]:off[j + 1], off[j]:off[j + 1]] = _field(Aj[i], S, (sc.ranks[j], sc.ranks[j], n))
    H = np.zeros((S, R, R, n), dtype=complex)
    for j in range(len(sc.ranks)):
        if sc.metrics is None or sc.metrics[j] is None:
            H[:, off[j]:off[j + 1], off[j]:off[j + 1]] = bmat_identity(G, sc.ranks[j])
        else:
            H[:, off[j]:off[j + 1], off[j]:off[j + 1]] = _field(sc.metrics[j], S, (sc.ranks[j], sc.ranks[j], n))
    degrees = np.concatenate([[j] * r for j, r in enumerate(sc.ranks)]).astype(int)
    return V, A, H, degrees


@dataclass
class BlockSuperconnection:
    """One Wedderburn block of a superconnection in orthonormal coordinates.

    v, v_adj: (S, R, R); conn, conn_adj: (dim, S, R, R) connection forms of
    nabla and its adjoint; higher/higher_adj: {mask: (S, R, R)}.
    """

    grid: BaseGrid
    degrees: np.ndarray
    v: np.ndarray
    v_adj: np.ndarray
    conn: np.ndarray
    conn_adj: np.ndarray
    higher: dict
    higher_adj: dict
    irrep_dim: int

    @property
    def R(self):
        return self.v.shape[-1]

    @property
    def odd(self):
        return (1 << self.grid.dim) - 1

    @property
    def eps_bit(self):
        return 1 << self.grid.dim


def _dagger(a):
    return np.swapaxes(a.conj(), -1, -2)


def block_superconnection(sc: Superconnection, block: int, stencil=None) -> BlockSuperconnection:
    """Realize one block and pass to coordinates orthonormal for the metric.

    With H = L L^* per site, new coordinates are L^* x.  The connection form
    becomes L^* A L^{-*} + L^* d(L^{-*}); the adjoint connection form in
    orthonormal coordinates is minus the conjugate transpose.
    """
    G = sc.group
    wd = wedderburn(G)
    V, A, H, degrees = full_bmat_fields(sc)
    d = wd.dims[block]
    Vb = realize(V, wd, block)
    Hb = realize(H, wd, block)
    Hb = (Hb + _dagger(Hb)) / 2
    L = np.linalg.cholesky(Hb)
    Ls = _dagger(L)
    Lsi = np.linalg.inv(Ls)
    deg_b = np.repeat(degrees, d)
    v = Ls @ Vb @ Lsi
    conn = np.zeros((sc.grid.dim,) + v.shape, dtype=complex)
    for i in range(sc.grid.dim):
        Ab = realize(A[i], wd, block)
        dLsi = derivative(Lsi.reshape(sc.grid.shape + Lsi.shape[1:]), sc.grid, i, stencil).reshape(Lsi.shape)
        conn[i] = Ls @ Ab @ Lsi + Ls @ dLsi
    conn_adj = -_dagger(conn)
    higher, higher_adj = {}, {}
    for mask, X in sc.higher.items():
        Xb = Ls @ realize(_field(X, sc.sites, X.shape[-3:]), wd, block) @ Lsi
        higher[mask] = Xb
        p = popcount(mask)
        # adjoint of alpha (x) T with alpha* = (-1)^{p(p+1)/2} alpha for real base forms
        higher_adj[mask] = (-1) ** (p * (p + 1) // 2) * _dagger(Xb)
    return BlockSuperconnection(sc.grid, deg_b, v, _dagger(v), conn, conn_adj, higher, higher_adj, d)


def _op(bs: BlockSuperconnection, comps):
    return GradedOp(bs.R, bs.degrees, comps, bs.odd)


def scaled_parts(bs: BlockSuperconnection, t: float):
    """B'_t and B''_t without the exterior derivative: sum_p t^{(1-p)/2} A'_p."""
    if t <= 0:
        raise ConnectionError_("t must be positive")
    st = np.sqrt(t)
    Bp = {(0, 0): st * bs.v}
    Bpp = {(0, 0): st * bs.v_adj}
    for i in range(bs.grid.dim):
        Bp[(1 << i, 0)] = bs.conn[i]
        Bpp[(1 << i, 0)] = bs.conn_adj[i]
    for mask, X in bs.higher.items():
        p = popcount(mask)
        Bp[(mask, 0)] = t ** ((1 - p) / 2) * X
        Bpp[(mask, 0)] = t ** ((1 - p) / 2) * bs.higher_adj[mask]
    return _op(bs, Bp), _op(bs, Bpp)


def super_scale(bs: BlockSuperconnection, t: float, u: float):
    """(B'_t, B''_t, B_t(u)) as non-derivative parts (the exterior derivative is implicit)."""
    Bp, Bpp = scaled_parts(bs, t)
    return Bp, Bpp, Bp * u + Bpp * (1 - u)


def number_scaling_check(bs: BlockSuperconnection, t: float) -> float:
    """Compare t^{N/2} v t^{-N/2} with sqrt(t) v."""
    scale = t ** (bs.degrees / 2.0)
    conj = scale[:, None] * bs.v / scale[None, :]
    return float(np.abs(conj - np.sqrt(t) * bs.v).max(initial=0.0))


def square(X: GradedOp, grid: BaseGrid, stencil=None) -> GradedOp:
    """(d + X)^2 = d(X) + X X for an odd X."""
    return d10_op(X, grid, stencil) + X * X


def _broadcast_sites(X: GradedOp, S: int) -> GradedOp:
    return X.like({k: np.broadcast_to(v, (S,) + v.shape[1:]) for k, v in X.comps.items()})


# ----------------------------------------------------------------------------
# Chern character and Chern-Simons forms (complex model, per block)

def _to_field(grid, tr: dict, irrep_dim=1, group=None) -> FormField:
    ff = FormField(grid)
    for (m, q), arr in tr.items():
        if m >> grid.dim:
            continue
        ff.components[(m, q)] = arr.reshape(grid.shape) if grid.dim else arr.reshape(())
    return ff


def chern_block(bs: BlockSuperconnection, t: float = 1.0, u: float = 1.0, stencil=None) -> FormField:
    """Tr_s exp(-B_t(u)^2) for one block (u = 1 gives the superconnection itself)."""
    _, _, Bu = super_scale(bs, t, u)
    S = bs.v.shape[0]
    F = square(_broadcast_sites(Bu, S), bs.grid, stencil)
    return _to_field(bs.grid, supertrace(exp_even(F)))


def u_rule(x_max, n_nodes=8):
    """Composite Gauss-Legendre on [0, 1] resolving exp(-x u(1-u)) for x <= x_max.

    Panels double in width away from both endpoints, starting at width
    ~ 1/(4 x_max), so every panel sees a bounded variation of the exponent.
    """
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    levels = max(1, int(np.ceil(np.log2(max(x_max, 1.0) * 4))))
    edges = [0.5 * 2.0 ** (-k) for k in range(levels, 0, -1)]
    left = np.concatenate([[0.0], edges, [0.5]])
    right = 1.0 - left[::-1]
    edges = np.unique(np.concatenate([left, right]))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append((b - a) / 2 * x + (a + b) / 2)
        weights.append((b - a) / 2 * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _body_scale(X: GradedOp) -> float:
    """Largest eigenvalue of the cochain-part Laplacian of X (mask 0 component)."""
    V = X.comps.get((0, 0))
    if V is None:
        return 0.0
    Vh = np.swapaxes(V.conj(), -1, -2)
    return float(np.abs(np.linalg.eigvalsh(V @ Vh + Vh @ V)).max(initial=0.0))


def cs_block(bs: BlockSuperconnection, t: float = 1.0, n_nodes: int = 8,
             stencil=None, include_derivative=True) -> FormField:
    """CS(B'_t, h) = -int_0^1 Tr_s((B'_t - B''_t) exp(-B_t(u)^2)) du for one block."""
    Bp, Bpp = scaled_parts(bs, t)
    Z = Bp - Bpp
    S = bs.v.shape[0]
    us, ws = u_rule(_body_scale(Bp), n_nodes)
    total: dict = {}
    for u, w in zip(us, ws):
        Bu = _broadcast_sites(Bp * u + Bpp * (1 - u), S)
        F = square(Bu, bs.grid, stencil) if include_derivative else Bu * Bu
        E = exp_even(F)
        tr = supertrace(_broadcast_sites(Z, S) * E)
        for k, v in tr.items():
            total[k] = total.get(k, 0) - w * v
    return _to_field(bs.grid, total)


def cs_pair_block(X1: GradedOp, X2: GradedOp, grid: BaseGrid, n_nodes=8, stencil=None) -> FormField:
    """Relative Chern-Simons form of two (super)connections given by non-derivative parts."""
    S = max(v.shape[0] for v in list(X1.comps.values()) + list(X2.comps.values()))
    Z = _broadcast_sites(X1 - X2, S)
    us, ws = u_rule(max(_body_scale(X1), _body_scale(X2)), n_nodes)
    total: dict = {}
    for u, w in zip(us, ws):
        Xu = _broadcast_sites(X1 * u + X2 * (1 - u), S)
        E = exp_even(square(Xu, grid, stencil))
        for k, v in supertrace(Z * E).items():
            total[k] = total.get(k, 0) - w * v
    return _to_field(grid, total)


def connection_ops(bs: BlockSuperconnection):
    """nabla and its adjoint as non-derivative parts (no cochain part)."""
    a = {(1 << i, 0): bs.conn[i] for i in range(bs.grid.dim)}
    b = {(1 << i, 0): bs.conn_adj[i] for i in range(bs.grid.dim)}
    return _op(bs, a), _op(bs, b)


def cs_connection_10(bs: BlockSuperconnection, projector=None) -> np.ndarray:
    """(1,0) part of CS(nabla, h) for one block on a circle: -Tr_s(P (A - A^adj) P).

    ``projector`` (S, R, R), if given, compresses to a sub-bundle (the
    cohomology bundle); the exterior derivative terms cancel in the difference.
    """
    if bs.grid.dim != 1:
        raise ConnectionError_("the (1,0) shortcut is defined on a circle")
    diff = bs.conn[0] - bs.conn_adj[0]
    if projector is not None:
        diff = projector @ diff @ projector
    sig = (-1.0) ** bs.degrees
    return -np.einsum("sii->si", diff) @ sig


def pairing_per_irrep(sc: Superconnection, fn, **kw):
    """Apply ``fn(block_superconnection)`` to every Wedderburn block; returns list of results."""
    wd = wedderburn(sc.group)
    return [fn(block_superconnection(sc, b, kw.get("stencil"))) for b in range(wd.nblocks)]


def cs(sc: Superconnection, t: float = 1.0, n_nodes: int = 8, stencil=None):
    """CS(B'_t, h) per irreducible block, projected to the Omega'' normal form."""
    out = []
    for bs in pairing_per_irrep(sc, lambda b: b, stencil=stencil):
        out.append(omega_pp_project(cs_block(bs, t, n_nodes, stencil), "odd"))
    return out


def chern(sc: Superconnection, t: float = 1.0, stencil=None):
    return [chern_block(bs, t, 1.0, stencil) for bs in pairing_per_irrep(sc, lambda b: b, stencil=stencil)]


def integrate_blocks(fields, mask=None):
    """Integral over the base of the top-degree component of each block's field."""
    vals = []
    for f in fields:
        grid = f.grid
        top = (1 << grid.dim) - 1 if mask is None else mask
        arr = f.get((top, 0))
        vals.append(0.0 if arr is None else complex(arr.sum() * np.prod(grid.spacing)))
    return np.array(vals)


# ----------------------------------------------------------------------------
# flat bundles from holonomy

def holonomy_connection(G: Group, holonomy, grid: BaseGrid) -> np.ndarray:
    """Constant connection coefficient A (B-matrix) with exp(-2 pi A) = holonomy.

    Computed per block with the principal matrix logarithm; the spectrum of the
    holonomy must avoid the closed negative real axis.
    """
    from scipy.linalg import logm
    T = np.asarray(holonomy, dtype=complex)
    if T.ndim == 1:
        T = T.reshape(1, 1, -1)
    wd = wedderburn(G)
    blocks = []
    for b in range(wd.nblocks):
        Tb = realize(T, wd, b)
        ev = np.linalg.eigvals(Tb)
        if np.any((np.abs(ev.imag) < 1e-14) & (ev.real <= 0)):
            raise ConnectionError_("holonomy has spectrum on the closed negative real axis")
        blocks.append(-logm(Tb) / (2 * np.pi))
    n = T.shape[0]
    return from_blocks(blocks, wd, n, n)


def flat_bundle(G: Group, holonomy, grid: BaseGrid, metric=None) -> Superconnection:
    A = holonomy_connection(G, holonomy, grid)
    n = A.shape[0]
    return Superconnection(grid, G, [n], [], [[A]], [metric])


# ----------------------------------------------------------------------------
# Omega(B) model: connections with a noncommutative part

def family_ops(fc: FamilyConnection, q_max: int = 2):
    """Non-derivative part X = A + omega1 as a GradedOp in the Omega(B) model."""
    G, S, N = fc.group, fc.sites, fc.N
    odd = (1 << fc.grid.dim) - 1
    comps = {}
    for i in range(fc.grid.dim):
        comps[(1 << i, 0)] = _field(fc.A[i], S, (N, N, G.order))
    if fc.omega1 is not None:
        comps[(0, 1)] = _field(fc.omega1, S, (N, N, form_dim(G, 1)))
    return GradedOp(N, None, comps, odd, G, q_max)


def star_op(X: GradedOp) -> GradedOp:
    """Involution of matrices over Omega(M) (x) Omega(B): transpose with
    (alpha (x) w)* = (-1)^{pq} alpha* (x) w*, where dtheta* = -dtheta and
    w* is the form involution."""
    out = {}
    for (m, q), a in X.comps.items():
        p = popcount(m & X.odd)
        base = (-1) ** (p * (p + 1) // 2)  # alpha* for a real monomial of degree p
        S = star_matrix(X.group, q)
        val = np.einsum("sjia,ba->sijb", a.conj(), S)
        out[(m, q)] = (-1) ** (p * q) * base * val
    return X.like(out)


def nc_bmat_mul(a, b, G):
    """Product of B-matrix fields (S, R, R, |G|)."""
    return np.einsum("sija,sjkb,abc->sikc", a, b, mul_tensor(G, 0, 0), optimize=True)


def adjoint_connection(fc: FamilyConnection, q_max: int = 2):
    """Non-derivative part of the adjoint connection: h^{-1} d(h) + h^{-1} X* h."""
    X = family_ops(fc, q_max)
    Xs = star_op(X)
    if fc.metric is None:
        return Xs
    G, S, N = fc.group, fc.sites, fc.N
    h = _field(fc.metric, S, (N, N, G.order))
    wd = wedderburn(G)
    hinv = from_blocks([np.linalg.inv(realize(h, wd, b)) for b in range(wd.nblocks)], wd, N, N)
    Hop = GradedOp(N, None, {(0, 0): h}, X.odd, G, q_max)
    Hinv = GradedOp(N, None, {(0, 0): hinv}, X.odd, G, q_max)
    dh = d10_op(Hop, fc.grid) + d01_op(Hop)
    return Hinv * dh + Hinv * Xs * Hop


def curvature(fc: FamilyConnection, q_max: int = 2, stencil=None) -> GradedOp:
    """(d + X)^2 = d10 X + d01 X + X X, with components by (p, q)."""
    X = family_ops(fc, q_max)
    return d10_op(X, fc.grid, stencil) + d01_op(X) + X * X


def partial_flatness(F: GradedOp) -> float:
    """Size of the (2, 0) component of the curvature."""
    return max((float(np.abs(v).max(initial=0.0)) for (m, q), v in F.comps.items()
                if popcount(m & F.odd) == 2 and q == 0), default=0.0)


def chern_nc(fc: FamilyConnection, q_max: int = 2, stencil=None) -> FormField:
    """Tr_s exp(-curvature) with Omega_q(B) coefficients (unreduced)."""
    F = curvature(fc, q_max, stencil)
    tr = supertrace(exp_even(F))
    ff = FormField(fc.grid, group=fc.group)
    for (m, q), arr in tr.items():
        ff.components[(m, q)] = arr.reshape(fc.grid.shape + arr.shape[1:])
    return ff


def cs_nc(X1: GradedOp, X2: GradedOp, grid: BaseGrid, stencil=None) -> FormField:
    """-int_0^1 Tr_s((X1 - X2) exp(-(d + X(u))^2)) du; the integrand is polynomial in u."""
    Z = X1 - X2
    deg = popcount(X1.odd) + X1.q_max + 2
    us, ws = np.polynomial.legendre.leggauss(deg)
    us, ws = (us + 1) / 2, ws / 2
    total: dict = {}
    for u, w in zip(us, ws):
        Xu = X1 * u + X2 * (1 - u)
        F = d10_op(Xu, grid, stencil) + d01_op(Xu) + Xu * Xu
        for k, v in supertrace(Z * exp_even(F)).items():
            total[k] = total.get(k, 0) - w * v
    ff = FormField(grid, group=X1.group)
    for (m, q), arr in total.items():
        ff.components[(m, q)] = arr.reshape(grid.shape + arr.shape[1:])
    return ff


def total_d(f: FormField, q_max: int = 2, stencil=None) -> FormField:
    """d10 + d01 on a scalar-channel field with dense Omega_q coordinates."""
    from .base_geometry import d01, d10
    out = d10(f, stencil)
    g = FormField(f.grid, {k: v for k, v in f.components.items() if k[1] + 1 <= q_max}, f.group)
    return out + d01(g, q_max)


def flat_family(G: Group, grid: BaseGrid, v0, gauges, holonomy=None, metrics=None, stencil=None) -> Superconnection:
    """Flat family obtained by gauging a constant complex.

    v_j = g_{j+1} v0_j g_j^{-1} and nabla_j = g_j (d + C_j) g_j^{-1}, where the
    constant coefficients C_j (``holonomy``) must satisfy v0_j C_j = C_{j+1} v0_j.
    ``gauges[j]`` is a periodic invertible B-matrix field (S, N_j, N_j, |G|).
    """
    from .group_core import bmat_mul
    wd = wedderburn(G)
    ranks = [g.shape[-2] for g in gauges]
    S = int(np.prod(grid.shape)) if grid.dim else 1
    gauges = [_field(g, S, (n, n, G.order)) for g, n in zip(gauges, ranks)]
    inv = [np.stack([from_blocks([np.linalg.inv(realize(g[s], wd, b)) for b in range(wd.nblocks)], wd, n, n)
                     for s in range(S)]) for g, n in zip(gauges, ranks)]
    mul = lambda a, b: np.einsum("sija,sjkb,abc->sikc", a, b, mul_tensor(G, 0, 0), optimize=True)
    v = []
    for j, vj in enumerate(v0):
        vj = _field(vj, S, (ranks[j + 1], ranks[j], G.order))
        w = mul(mul(gauges[j + 1], vj), inv[j])
        v.append(w)
        if holonomy is not None:
            lhs = bmat_mul(np.asarray(v0[j]), np.asarray(holonomy[j]), G)
            rhs = bmat_mul(np.asarray(holonomy[j + 1]), np.asarray(v0[j]), G)
            if np.abs(lhs - rhs).max() > 1e-10:
                raise ConnectionError_("holonomy coefficients do not commute with the differential")
    A = []
    for j, n in enumerate(ranks):
        coeffs = []
        for i in range(grid.dim):
            dinv = derivative(inv[j].reshape(grid.shape + inv[j].shape[1:]), grid, i, stencil).reshape(inv[j].shape)
            a = mul(gauges[j], dinv)
            if holonomy is not None:
                a = a + mul(mul(gauges[j], _field(holonomy[j], S, (n, n, G.order))), inv[j])
            coeffs.append(a)
        A.append(coeffs)
    return Superconnection(grid, G, ranks, v, A, metrics)
