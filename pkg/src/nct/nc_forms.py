"""Universal differential forms over a group algebra, reduced forms, and cyclic cocycles.

A degree-k form is stored as a map from words ``(g0, g1, ..., gk)`` to complex
coefficients, the word standing for ``g0 dg1 ... dgk``.  Letters ``g1..gk`` are
never the identity since ``d1 = 0``.  For finite groups the words of degree k
form a basis of size ``|G| (|G|-1)^k`` and forms convert to dense vectors.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .group_core import AlgebraElement, Group, GroupError

Q_MAX_DEFAULT = 2
Q_MAX_LIMIT = 3


class FormError(ValueError):
    pass


class NCForm:
    __slots__ = ("group", "degree", "terms")

    def __init__(self, group: Group, degree: int, terms=None):
        self.group = group
        self.degree = degree
        self.terms = {}
        for w, c in (terms or {}).items():
            if c != 0:
                if len(w) != degree + 1:
                    raise FormError(f"word {w} does not have degree {degree}")
                self.terms[w] = complex(c)

    @classmethod
    def word(cls, group, letters, coeff=1.0):
        """``letters[0] d letters[1] ... d letters[k]``; zero if a later letter is e."""
        letters = tuple(letters)
        if any(g == group.identity for g in letters[1:]):
            return cls(group, len(letters) - 1)
        return cls(group, len(letters) - 1, {letters: coeff})

    @classmethod
    def scalar(cls, a: AlgebraElement):
        return cls(a.group, 0, {(g,): c for g, c in a.coeffs.items()})

    def __add__(self, other):
        _check_pair(self, other)
        if self.degree != other.degree:
            raise FormError("cannot add forms of different degree")
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0) + c
        return NCForm(self.group, self.degree, out)

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, NCForm):
            return form_mul(self, other)
        return NCForm(self.group, self.degree, {w: c * other for w, c in self.terms.items()})

    def __rmul__(self, scalar):
        return NCForm(self.group, self.degree, {w: scalar * c for w, c in self.terms.items()})

    def max_abs(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def is_zero(self, tol=0.0):
        return self.max_abs() <= tol

    def to_dense(self):
        G = self.group
        if not G.is_finite:
            raise FormError("dense coordinates need a finite group")
        v = np.zeros(form_dim(G, self.degree), dtype=complex)
        for w, c in self.terms.items():
            v[word_index(G, w)] += c
        return v

    @classmethod
    def from_dense(cls, group, degree, vec):
        words = basis_words(group, degree)
        return cls(group, degree, {w: c for w, c in zip(words, vec) if c != 0})

    def __repr__(self):
        return f"NCForm(deg={self.degree}, terms={len(self.terms)})"


def _check_pair(a, b):
    if a.group is not b.group:
        raise FormError("forms over different algebras")


# ----------------------------------------------------------------------------
# basis bookkeeping for finite groups

def form_dim(G: Group, q: int) -> int:
    return G.order * (G.order - 1) ** q


def _nonid(G):
    return [g for g in range(G.order) if g != G.identity]


def basis_words(G: Group, q: int):
    key = ("words", q)
    if key not in G._cache:
        G._cache[key] = [w for w in itertools.product(range(G.order), *([_nonid(G)] * q))]
    return G._cache[key]


def word_index(G: Group, w) -> int:
    key = ("word_index", len(w) - 1)
    if key not in G._cache:
        G._cache[key] = {ww: i for i, ww in enumerate(basis_words(G, len(w) - 1))}
    return G._cache[key][tuple(w)]


# ----------------------------------------------------------------------------
# algebra operations

def form_d(w: NCForm) -> NCForm:
    """d(g0 dg1..dgk) = dg0 dg1..dgk, which vanishes when g0 = e."""
    G = w.group
    out = {}
    for word, c in w.terms.items():
        if word[0] == G.identity:
            continue
        nw = (G.identity,) + word
        out[nw] = out.get(nw, 0) + c
    return NCForm(G, w.degree + 1, out)


def _append(G, terms: dict, x) -> dict:
    """Multiply every word on the right by dx."""
    if x == G.identity:
        return {}
    return {w + (x,): c for w, c in terms.items()}


def _add_into(acc, terms, sign=1):
    for w, c in terms.items():
        acc[w] = acc.get(w, 0) + sign * c


def _right_mul_word(G, word, h) -> dict:
    """(g0 dg1..dgk) * h using (dg) h = d(gh) - g dh."""
    if len(word) == 1:
        return {(G.mul(word[0], h),): 1.0}
    key = ("rmul", word, h)
    cache = G._cache.setdefault("rmul", {})
    if key in cache:
        return cache[key]
    head, gk = word[:-1], word[-1]
    out = {}
    _add_into(out, _append(G, {head: 1.0}, G.mul(gk, h)))
    _add_into(out, _append(G, _right_mul_word(G, head, gk), h), -1)
    out = {w: c for w, c in out.items() if c != 0}
    cache[key] = out
    return out


def form_mul(a: NCForm, b: NCForm) -> NCForm:
    _check_pair(a, b)
    G = a.group
    out: dict = {}
    for wa, ca in a.terms.items():
        for wb, cb in b.terms.items():
            terms = _right_mul_word(G, wa, wb[0])
            for x in wb[1:]:
                terms = _append(G, terms, x)
            _add_into(out, {w: c * ca * cb for w, c in terms.items()})
    return NCForm(G, a.degree + b.degree, out)


def form_star(w: NCForm) -> NCForm:
    """Antilinear involution with g* = g^-1 and (db)* = -d(b*)."""
    G = w.group
    total = NCForm(G, w.degree)
    for word, c in w.terms.items():
        k = len(word) - 1
        acc = NCForm(G, 0, {(G.identity,): 1.0})
        for g in reversed(word[1:]):
            acc = acc * NCForm.word(G, (G.identity, G.inv(g)))
        acc = acc * NCForm(G, 0, {(G.inv(word[0]),): 1.0})
        total = total + acc * (np.conj(c) * (-1) ** k)
    return total


def graded_commutator(a: NCForm, b: NCForm) -> NCForm:
    return form_mul(a, b) - form_mul(b, a) * ((-1) ** (a.degree * b.degree))


# ----------------------------------------------------------------------------
# dense operators (finite groups)

def _check_q(q, q_max):
    if q_max > Q_MAX_LIMIT:
        raise FormError(f"q_max is limited to {Q_MAX_LIMIT}")
    if q > q_max:
        raise FormError(f"degree {q} exceeds q_max = {q_max}")


def d_matrix(G: Group, q: int) -> np.ndarray:
    """Dense matrix of d : Omega_q -> Omega_{q+1}."""
    key = ("dmat", q)
    if key not in G._cache:
        D = np.zeros((form_dim(G, q + 1), form_dim(G, q)))
        for j, w in enumerate(basis_words(G, q)):
            if w[0] != G.identity:
                D[word_index(G, (G.identity,) + w), j] = 1.0
        G._cache[key] = D
    return G._cache[key]


def mul_tensor(G: Group, q1: int, q2: int) -> np.ndarray:
    """M[a, b, c]: coefficient of basis word c in (word a) * (word b)."""
    key = ("multensor", q1, q2)
    if key not in G._cache:
        w1, w2 = basis_words(G, q1), basis_words(G, q2)
        M = np.zeros((len(w1), len(w2), form_dim(G, q1 + q2)))
        for i, a in enumerate(w1):
            for j, b in enumerate(w2):
                terms = _right_mul_word(G, a, b[0])
                for x in b[1:]:
                    terms = _append(G, terms, x)
                for w, c in terms.items():
                    M[i, j, word_index(G, w)] += c.real
        G._cache[key] = M
    return G._cache[key]


def star_matrix(G: Group, q: int) -> np.ndarray:
    """Matrix S with star(w) = S @ conj(w) on dense coordinates."""
    key = ("starmat", q)
    if key not in G._cache:
        words = basis_words(G, q)
        S = np.zeros((len(words), len(words)))
        for j, w in enumerate(words):
            S[:, j] = form_star(NCForm(G, q, {w: 1.0})).to_dense().real
        G._cache[key] = S
    return G._cache[key]


def commutator_span(G: Group, q: int) -> np.ndarray:
    """Columns spanning the graded commutators of total degree q.

    Omega is generated by group elements and their differentials, and
    [xy, z] = [x, yz] + (-1)^{|x|(|y|+|z|)} [y, zx], so commutators with a
    generator on the left span everything.
    """
    cols = []
    n = form_dim(G, q)
    for g in range(G.order):
        a = NCForm(G, 0, {(g,): 1.0})
        for w in basis_words(G, q):
            cols.append(graded_commutator(a, NCForm(G, q, {w: 1.0})).to_dense())
    if q >= 1:
        for g in _nonid(G):
            a = NCForm(G, 1, {(G.identity, g): 1.0})
            for w in basis_words(G, q - 1):
                cols.append(graded_commutator(a, NCForm(G, q - 1, {w: 1.0})).to_dense())
    return np.array(cols).T if cols else np.zeros((n, 0))


def quotient_basis(G: Group, q: int) -> np.ndarray:
    """Orthonormal complement Q of the commutator subspace; reduce(w) = Q^H w."""
    key = ("quotient", q)
    if key not in G._cache:
        C = commutator_span(G, q)
        if C.shape[1] == 0:
            Q = np.eye(form_dim(G, q), dtype=complex)
        else:
            Q = null_space(C.conj().T, rcond=1e-10).astype(complex)
        G._cache[key] = Q
    return G._cache[key]


@dataclass
class ReducedForm:
    group: Group
    degree: int
    coords: np.ndarray

    def is_zero(self, tol=1e-12):
        return float(np.abs(self.coords).max(initial=0.0)) <= tol


def reduce(w: NCForm, q_max: int = Q_MAX_DEFAULT) -> ReducedForm:
    G = w.group
    if not G.is_finite:
        raise FormError("quotient bases exist only for finite groups; pair cocycles directly")
    if w.degree > q_max + 1:
        raise FormError(f"degree {w.degree} exceeds q_max + 1 = {q_max + 1}")
    Q = quotient_basis(G, w.degree)
    return ReducedForm(G, w.degree, Q.conj().T @ w.to_dense())


def reduce_dense(G: Group, q: int, vec) -> np.ndarray:
    """Reduced coordinates of dense coefficient vectors on the last axis."""
    Q = quotient_basis(G, q)
    return np.asarray(vec) @ Q.conj()


def reduced_d(G: Group, q: int) -> np.ndarray:
    """Induced differential on reduced forms, in quotient coordinates."""
    Q0, Q1 = quotient_basis(G, q), quotient_basis(G, q + 1)
    return Q1.conj().T @ d_matrix(G, q) @ Q0


def _kernel(M, tol=1e-9):
    """Orthonormal kernel basis with an absolute singular-value cutoff."""
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, Vh = np.linalg.svd(M)
    r = int((s > tol).sum())
    return Vh[r:].conj().T


def _rank(M, tol=1e-9):
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int((s > tol).sum())


def reduced_homology(G: Group, q: int, q_max: int = Q_MAX_DEFAULT):
    """Dimension and a basis (columns, quotient coordinates) of the reduced homology in degree q."""
    if not G.is_finite:
        raise FormError("reduced homology is computed only for finite groups")
    _check_q(q, q_max)
    dq = reduced_d(G, q)
    kernel = _kernel(dq)
    if q >= 1:
        image = reduced_d(G, q - 1)
        r_im = _rank(image)
    else:
        image = np.zeros((kernel.shape[0], 0))
        r_im = 0
    dim = kernel.shape[1] - r_im
    # basis: kernel vectors orthogonal to the image
    if r_im:
        U, s, _ = np.linalg.svd(image, full_matrices=False)
        U = U[:, :r_im]
        comp = kernel - U @ (U.conj().T @ kernel)
        Uc, sc, _ = np.linalg.svd(comp, full_matrices=False)
        basis = Uc[:, :dim]
    else:
        basis = kernel
    return dim, basis


# ----------------------------------------------------------------------------
# group cocycles and cyclic cocycles

class CocycleError(ValueError):
    pass


class GroupCocycle:
    """tau : Gamma^{k+1} -> C attached to a base element x."""

    def __init__(self, group: Group, k: int, x, func, kind="function", params=None):
        self.group = group
        self.k = k
        self.x = x
        self.func = func
        self.kind = kind
        self.params = params or {}

    def __call__(self, *gammas):
        return complex(self.func(*gammas))

    @classmethod
    def linear(cls, group: Group, k: int, coeffs, x=None):
        """Cocycles on Z^n built from differences of exponents.

        k = 0: constant ``coeffs``; k = 1: tau(a, b) = c . (b - a);
        k = 2: tau(a, b, c) = w(b - a, c - a) for an antisymmetric matrix w.
        """
        if group.is_finite:
            raise CocycleError("linear cocycles are defined on free-abelian groups")
        x = group.identity if x is None else tuple(x)
        if k == 0:
            c0 = complex(coeffs if np.isscalar(coeffs) else np.ravel(coeffs)[0])
            return cls(group, 0, x, lambda a: c0, "linear", {"coeffs": c0})
        if k == 1:
            c = np.asarray(coeffs, dtype=float).ravel()
            if c.size != group.rank:
                raise CocycleError("k=1 linear cocycle needs one coefficient per generator")
            return cls(group, 1, x, lambda a, b: float(c @ (np.subtract(b, a))), "linear",
                       {"coeffs": c.tolist()})
        if k == 2:
            w = np.asarray(coeffs, dtype=float).reshape(group.rank, group.rank)
            return cls(group, 2, x,
                       lambda a, b, c: float(np.subtract(b, a) @ w @ np.subtract(c, a)),
                       "linear", {"coeffs": w.tolist()})
        raise CocycleError("linear cocycles are implemented for k <= 2")

    @classmethod
    def from_table(cls, group: Group, k: int, x, table):
        table = np.asarray(table, dtype=complex)
        return cls(group, k, x, lambda *g: table[tuple(g)], "table")

    @classmethod
    def coboundary_of(cls, group: Group, x, sigma):
        """delta(sigma) for a degree-0 cochain sigma given as a callable."""
        return cls(group, 1, x, lambda a, b: sigma(b) - sigma(a), "coboundary")


def _centralizer(G, x):
    return [z for z in G.elements() if G.mul(z, x) == G.mul(x, z)]


def _window(G, radius):
    return [tuple(v) for v in itertools.product(range(-radius, radius + 1), repeat=G.rank)]


def validate_group_cocycle(tau: GroupCocycle, radius: int = 3, tol: float = 1e-10) -> dict:
    """Check skewness, right Z_x-invariance, first-slot x-invariance and delta tau = 0.

    Finite groups are checked exhaustively.  Free-abelian groups are checked on a
    box of the given radius (the centralizer of any x is the whole group; only
    shifts inside the box are used).
    """
    G, k, x = tau.group, tau.k, tau.x
    if G.is_finite:
        elems = list(G.elements())
        centr = _centralizer(G, x)
    else:
        elems = _window(G, radius)
        centr = _window(G, 1)
    report = {"valid": True, "failures": {}}

    def fail(name, witness, lhs, rhs):
        if name not in report["failures"]:
            report["failures"][name] = {"witness": [list(np.atleast_1d(w)) for w in witness],
                                        "values": [complex(lhs), complex(rhs)]}
        report["valid"] = False

    tuples = list(itertools.product(elems, repeat=k + 1))
    for gam in tuples:
        val = tau(*gam)
        for i in range(k):
            sw = list(gam)
            sw[i], sw[i + 1] = sw[i + 1], sw[i]
            other = tau(*sw)
            if abs(other + val) > tol:
                fail("skew", gam, other, -val)
        for z in centr:
            other = tau(*[G.mul(g, z) for g in gam])
            if abs(other - val) > tol:
                fail("centralizer_invariance", gam, other, val)
        other = tau(G.mul(gam[0], x), *gam[1:])
        if abs(other - val) > tol:
            fail("x_invariance", gam, other, val)
    for gam in itertools.product(elems, repeat=k + 2):
        s = sum((-1) ** j * tau(*(gam[:j] + gam[j + 1:])) for j in range(k + 2))
        if abs(s) > tol:
            fail("cocycle", gam, s, 0)
            break
    return report


class CyclicCocycle:
    """Z_tau, evaluated on group elements and extended multilinearly."""

    def __init__(self, tau: GroupCocycle):
        self.tau = tau
        self.group = tau.group
        self.k = tau.k

    def on_elements(self, *gammas) -> complex:
        G = self.group
        prod = gammas[0]
        for g in gammas[1:]:
            prod = G.mul(g, prod)
        conj = G.conj_rep(prod, self.tau.x)
        if conj is None:
            return 0j
        args = []
        acc = conj
        for g in gammas:
            acc = G.mul(g, acc)
            args.append(acc)
        return self.tau(*args)

    def __call__(self, *elems: AlgebraElement) -> complex:
        if len(elems) != self.k + 1:
            raise FormError(f"cyclic cocycle of degree {self.k} takes {self.k + 1} arguments")
        total = 0j
        for combo in itertools.product(*[sorted(a.coeffs.items(), key=lambda kv: str(kv[0]))
                                         for a in elems]):
            c = np.prod([kv[1] for kv in combo])
            total += c * self.on_elements(*[kv[0] for kv in combo])
        return total


def cyclic_from_group(tau: GroupCocycle, check: bool = True) -> CyclicCocycle:
    if check:
        rep = validate_group_cocycle(tau)
        if not rep["valid"]:
            raise CocycleError(f"invalid group cocycle: {sorted(rep['failures'])}")
    return CyclicCocycle(tau)


def pair_cocycle(Z: CyclicCocycle, w: NCForm) -> complex:
    """<Z, sum c g0 dg1..dgk> = sum c Z(g0, ..., gk)."""
    if w.degree != Z.k:
        raise FormError(f"degree mismatch: cocycle {Z.k}, form {w.degree}")
    return complex(sum(c * Z.on_elements(*word) for word, c in w.terms.items()))


def hochschild_residual(Z: CyclicCocycle, elems) -> complex:
    """(bZ)(a0, ..., a_{k+1}) on algebra elements."""
    k = Z.k
    total = 0j
    for i in range(k + 1):
        args = list(elems[:i]) + [elems[i] * elems[i + 1]] + list(elems[i + 2:])
        total += (-1) ** i * Z(*args)
    args = [elems[k + 1] * elems[0]] + list(elems[1:k + 1])
    total += (-1) ** (k + 1) * Z(*args)
    return total


def cyclicity_residual(Z: CyclicCocycle, elems) -> complex:
    k = Z.k
    rotated = [elems[k]] + list(elems[:k])
    return Z(*rotated) - (-1) ** k * Z(*elems)
