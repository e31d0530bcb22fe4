"""Projective modules over a finite group algebra, Hermitian metrics, and Hodge theory of cochain complexes.

Convention: module elements are column vectors of group-algebra entries, the
algebra acts on the right, and module maps act by left matrix multiplication.
(This is the transpose of a row convention with left scalars; both give the
same traces.)  Everything is computed block by block through the Wedderburn
decomposition.  In block rho the module E = range(e) is described by a frame
W whose columns are orthonormal for the metric H, with left inverse
L = W^* H rho(e).  Operators in frame coordinates are ordinary complex
matrices and adjoints there are conjugate transposes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .group_core import (Group, WedderburnData, bmat_identity, bmat_mul, bmat_star,
                         from_blocks, realize, wedderburn)

TOL = 1e-10


class HodgeError(ValueError):
    pass


@dataclass
class ProjectiveModule:
    group: Group
    N: int
    e: np.ndarray  # B-matrix (N, N, |G|)

    def block_ranks(self):
        wd = wedderburn(self.group)
        ranks = []
        for b in range(wd.nblocks):
            tr = np.trace(realize(self.e, wd, b)).real
            ranks.append(tr)
        ranks = np.array(ranks)
        if np.abs(ranks - np.round(ranks)).max(initial=0.0) > 1e-6:
            raise HodgeError(f"block traces of the idempotent are not integers: {ranks}")
        return np.round(ranks).astype(int)

    def rank_vector(self):
        """Rank of the module per irreducible block (multiplicity of the irrep)."""
        wd = wedderburn(self.group)
        return np.array([r // d for r, d in zip(self.block_ranks(), wd.dims)])


def make_module(G: Group, N: int, e=None, tol=1e-12) -> ProjectiveModule:
    if e is None:
        e = bmat_identity(G, N)
    e = np.asarray(e, dtype=complex)
    if e.shape != (N, N, G.order):
        raise HodgeError(f"idempotent must have shape {(N, N, G.order)}, got {e.shape}")
    res = np.abs(bmat_mul(e, e, G) - e).max(initial=0.0)
    if res > tol:
        raise HodgeError(f"e^2 != e (residual {res:.3e})")
    return ProjectiveModule(G, N, e)


@dataclass
class HermitianMetric:
    module: ProjectiveModule
    H: np.ndarray
    frames: list = field(default_factory=list)  # per block (W, L)


def make_metric(E: ProjectiveModule, H=None, tol=1e-10) -> HermitianMetric:
    """Validate H and build per-block orthonormal frames of the module."""
    G = E.group
    if H is None:
        H = bmat_mul(bmat_star(E.e, G), E.e, G)
    H = np.asarray(H, dtype=complex)
    if H.shape != E.e.shape:
        raise HodgeError("metric shape does not match module")
    if np.abs(bmat_star(H, G) - H).max(initial=0.0) > tol:
        raise HodgeError("metric is not self-adjoint")
    compat = bmat_mul(bmat_mul(bmat_star(E.e, G), H, G), E.e, G) - H
    if np.abs(compat).max(initial=0.0) > tol:
        raise HodgeError("metric is not compatible with the idempotent (e* H e != H)")
    wd = wedderburn(G)
    frames = []
    for b in range(wd.nblocks):
        Hb = realize(H, wd, b)
        Eb = realize(E.e, wd, b)
        U, s, _ = np.linalg.svd(Eb)
        r = int((s > 0.5).sum())
        R = U[:, :r]  # Euclidean basis of range(e)
        gram = R.conj().T @ Hb @ R
        w, V = np.linalg.eigh((gram + gram.conj().T) / 2)
        if r and w.min() <= tol:
            raise HodgeError(f"metric is not positive on block {b} (eigenvalue {w.min():.3e})")
        W = R @ V @ np.diag(w ** -0.5) if r else R
        L = W.conj().T @ Hb @ Eb
        frames.append((W, L))
    return HermitianMetric(E, H, frames)


def block_inner(metric: HermitianMetric, x, y, block):
    """<x, y> = y^* H x in one block, for realized column vectors."""
    wd = wedderburn(metric.module.group)
    Hb = realize(metric.H, wd, block)
    return y.conj().T @ Hb @ x


def to_frame(T, src: HermitianMetric, dst: HermitianMetric, block):
    wd = wedderburn(src.module.group)
    return dst.frames[block][1] @ realize(T, wd, block) @ src.frames[block][0]


def from_frames(mats, src: HermitianMetric, dst: HermitianMetric):
    """Ambient B-matrix of operators given in frame coordinates per block."""
    wd = wedderburn(src.module.group)
    blocks = [dst.frames[b][0] @ mats[b] @ src.frames[b][1] for b in range(wd.nblocks)]
    return from_blocks(blocks, wd, dst.module.N, src.module.N)


def adjoint_map(T, h_src: HermitianMetric, h_dst: HermitianMetric):
    """Adjoint of T : E_src -> E_dst, a map E_dst -> E_src."""
    T = np.asarray(T)
    if T.shape[:2] != (h_dst.module.N, h_src.module.N):
        raise HodgeError("map shape does not match the modules")
    wd = wedderburn(h_src.module.group)
    mats = [to_frame(T, h_src, h_dst, b).conj().T for b in range(wd.nblocks)]
    return from_frames(mats, h_dst, h_src)


# ----------------------------------------------------------------------------
# cochain complexes

@dataclass
class CochainComplexB:
    group: Group
    modules: list
    v: list  # v[j] : E^j -> E^{j+1}, B-matrix (N_{j+1}, N_j, |G|)
    metrics: list

    @property
    def length(self):
        return len(self.modules)

    def block_differentials(self, block):
        """Differentials in orthonormal frame coordinates of one block."""
        return [to_frame(self.v[j], self.metrics[j], self.metrics[j + 1], block)
                for j in range(self.length - 1)]

    def block_dims(self, block):
        return [m.frames[block][0].shape[1] for m in self.metrics]


def make_complex(G: Group, modules, v, metrics=None, tol=1e-10) -> CochainComplexB:
    """Build and validate (E, v).  ``modules`` may be ranks (free modules) or ProjectiveModules."""
    mods = [m if isinstance(m, ProjectiveModule) else make_module(G, int(m)) for m in modules]
    if len(v) != len(mods) - 1:
        raise HodgeError("need one differential between consecutive degrees")
    v = [np.asarray(x, dtype=complex) for x in v]
    for j, x in enumerate(v):
        if x.shape != (mods[j + 1].N, mods[j].N, G.order):
            raise HodgeError(f"differential {j} has shape {x.shape}")
        compat = bmat_mul(bmat_mul(mods[j + 1].e, x, G), mods[j].e, G) - x
        if np.abs(compat).max(initial=0.0) > tol:
            raise HodgeError(f"differential {j} is not compatible with the idempotents")
    for j in range(len(v) - 1):
        sq = np.abs(bmat_mul(v[j + 1], v[j], G)).max(initial=0.0)
        if sq > 1e-12 * max(1.0, np.abs(v[j]).max(initial=0.0) * np.abs(v[j + 1]).max(initial=0.0)) * 10:
            raise HodgeError(f"v^2 != 0 at degree {j} (residual {sq:.3e})")
    if metrics is None:
        metrics = [None] * len(mods)
    mets = [m if isinstance(m, HermitianMetric) else make_metric(E, m) for E, m in zip(mods, metrics)]
    return CochainComplexB(G, mods, v, mets)


@dataclass
class HodgeData:
    complex: CochainComplexB
    laplacian: list  # per degree, per block: frame-coordinate matrices
    eigen: list  # per degree, per block: (eigenvalues, eigenvectors)
    gap: float
    tol: float

    def spectrum(self, degree=None):
        """Union of eigenvalues of the Laplacian (all degrees or one)."""
        degs = range(self.complex.length) if degree is None else [degree]
        vals = [self.eigen[j][b][0] for j in degs for b in range(len(self.eigen[j]))]
        return np.sort(np.concatenate(vals)) if vals else np.zeros(0)

    def kernel_mask(self, j, b):
        return self.eigen[j][b][0] <= self.tol

    def projection_blocks(self, j):
        out = []
        for b, (w, V) in enumerate(self.eigen[j]):
            Vk = V[:, self.kernel_mask(j, b)]
            out.append(Vk @ Vk.conj().T)
        return out

    def green_blocks(self, j):
        out = []
        for b, (w, V) in enumerate(self.eigen[j]):
            m = ~self.kernel_mask(j, b)
            out.append((V[:, m] / w[m]) @ V[:, m].conj().T)
        return out

    def laplacian_bmat(self, j):
        m = self.complex.metrics[j]
        return from_frames(self.laplacian[j], m, m)

    def harmonic_projection(self, j):
        m = self.complex.metrics[j]
        return from_frames(self.projection_blocks(j), m, m)

    def greens(self, j):
        m = self.complex.metrics[j]
        return from_frames(self.green_blocks(j), m, m)


def laplacian(cx: CochainComplexB, tol: float = 1e-9) -> HodgeData:
    wd = wedderburn(cx.group)
    n = cx.length
    lap = [[None] * wd.nblocks for _ in range(n)]
    eig = [[None] * wd.nblocks for _ in range(n)]
    for b in range(wd.nblocks):
        dims = cx.block_dims(b)
        vs = cx.block_differentials(b)
        for j in range(n):
            D = np.zeros((dims[j], dims[j]), dtype=complex)
            if j < n - 1:
                D += vs[j].conj().T @ vs[j]
            if j > 0:
                D += vs[j - 1] @ vs[j - 1].conj().T
            D = (D + D.conj().T) / 2
            lap[j][b] = D
            w, V = np.linalg.eigh(D) if dims[j] else (np.zeros(0), np.zeros((0, 0)))
            eig[j][b] = (w, V)
    scale = max([np.abs(e[0]).max(initial=0.0) for row in eig for e in row] + [1.0])
    ktol = tol * scale
    nonzero = [w[w > ktol] for row in eig for (w, _) in row]
    nonzero = np.concatenate(nonzero) if nonzero else np.zeros(0)
    gap = float(nonzero.min()) if nonzero.size else np.inf
    return HodgeData(cx, lap, eig, gap, ktol)


def spectrum_and_gap(hd: HodgeData):
    return hd.gap, hd.spectrum()


def harmonic_projection(hd: HodgeData, j: int):
    return hd.harmonic_projection(j)


def greens(hd: HodgeData, j: int):
    return hd.greens(j)


def cohomology(hd: HodgeData) -> dict:
    """Cohomology realized as Ker(Laplacian) with the induced metric.

    Returns per-degree per-block kernel dimensions, the rank vector (dimension
    divided by the irrep dimension) and the embeddings as B-matrix projections.
    """
    wd = wedderburn(hd.complex.group)
    dims, ranks, proj = [], [], []
    for j in range(hd.complex.length):
        d = [int(hd.kernel_mask(j, b).sum()) for b in range(wd.nblocks)]
        dims.append(d)
        ranks.append([x // n for x, n in zip(d, wd.dims)])
        proj.append(hd.harmonic_projection(j))
    return {"block_dims": dims, "ranks": ranks, "projections": proj}


def euler_ranks(cx: CochainComplexB, hd: HodgeData | None = None):
    """Supertraced rank vectors of E and of H, per block."""
    hd = hd or laplacian(cx)
    wd = wedderburn(cx.group)
    e_side = np.zeros(wd.nblocks, dtype=int)
    h_side = np.zeros(wd.nblocks, dtype=int)
    coh = cohomology(hd)
    for b in range(wd.nblocks):
        dims = cx.block_dims(b)
        e_side[b] = sum((-1) ** j * dims[j] for j in range(cx.length)) // wd.dims[b]
        h_side[b] = sum((-1) ** j * coh["block_dims"][j][b] for j in range(cx.length)) // wd.dims[b]
    return e_side, h_side


def hodge_residuals(hd: HodgeData) -> dict:
    """B-matrix residuals of P^2 = P, P = P*, Delta P = 0 and G Delta = 1 - P."""
    cx = hd.complex
    G = cx.group
    res = {"P2": 0.0, "Pstar": 0.0, "DeltaP": 0.0, "GDelta": 0.0}
    for j in range(cx.length):
        m = cx.metrics[j]
        P = hd.harmonic_projection(j)
        D = hd.laplacian_bmat(j)
        Gr = hd.greens(j)
        e = cx.modules[j].e
        res["P2"] = max(res["P2"], float(np.abs(bmat_mul(P, P, G) - P).max(initial=0.0)))
        res["Pstar"] = max(res["Pstar"], float(np.abs(adjoint_map(P, m, m) - P).max(initial=0.0)))
        res["DeltaP"] = max(res["DeltaP"], float(np.abs(bmat_mul(D, P, G)).max(initial=0.0)))
        res["GDelta"] = max(res["GDelta"], float(np.abs(bmat_mul(Gr, D, G) - (e - P)).max(initial=0.0)))
    return res


# ----------------------------------------------------------------------------
# random test complexes

def random_bmat(G: Group, rows, cols, rng, scale=1.0):
    return scale * (rng.normal(size=(rows, cols, G.order)) + 1j * rng.normal(size=(rows, cols, G.order)))


def random_invertible(G: Group, n, rng, scale=0.3):
    """I + scale * random, retried until every block is well conditioned."""
    wd = wedderburn(G)
    if n == 0:
        return bmat_identity(G, 0)
    for _ in range(50):
        g = bmat_identity(G, n) + random_bmat(G, n, n, rng, scale / np.sqrt(G.order * max(n, 1)))
        if all(np.linalg.cond(realize(g, wd, b)) < 20 for b in range(wd.nblocks)):
            return g
    raise HodgeError("could not draw a well-conditioned matrix")


def bmat_inverse(g, G: Group):
    wd = wedderburn(G)
    n = g.shape[0]
    return from_blocks([np.linalg.inv(realize(g, wd, b)) for b in range(wd.nblocks)], wd, n, n)


def random_complex(G: Group, ranks, rng, harmonic=None, metric_scale=0.3, metrics=True, gap=None):
    """A random complex of free modules conjugate to a standard one.

    ``ranks[j]`` is the rank of v restricted to the degree-j piece, so degree j
    has N_j = ranks[j-1] + ranks[j] + harmonic[j].  The differential is
    g_{j+1} S_j g_j^{-1} with S_j the standard 0/1 differential.
    """
    n = len(ranks) + 1
    harmonic = harmonic or [0] * n
    r = [0] + list(ranks) + [0]
    N = [r[j] + r[j + 1] + harmonic[j] for j in range(n)]
    gs = [random_invertible(G, N[j], rng) for j in range(n)]
    v = []
    for j in range(n - 1):
        S = np.zeros((N[j + 1], N[j]))
        # degree j basis: [incoming r_j-1 | outgoing r_j | harmonic]
        for i in range(r[j + 1]):
            S[i, r[j] + i] = 1.0
        Sb = np.zeros((N[j + 1], N[j], G.order), dtype=complex)
        Sb[..., G.identity] = S
        v.append(bmat_mul(bmat_mul(gs[j + 1], Sb, G), bmat_inverse(gs[j], G), G))
    mets = None
    if metrics:
        mets = []
        for j in range(n):
            a = random_invertible(G, N[j], rng, metric_scale)
            mets.append(bmat_mul(bmat_star(a, G), a, G))
    cx = make_complex(G, N, v, mets)
    if gap is not None:
        # rescale v so the smallest nonzero Laplacian eigenvalue equals ``gap``
        lam0 = laplacian(cx).gap
        if np.isfinite(lam0):
            cx = make_complex(G, N, [x * np.sqrt(gap / lam0) for x in v], mets)
    return cx
