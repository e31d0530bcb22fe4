"""The Z-cover of a discretized circle and its canonical noncommutative connection.

The cover is the integer line of sites; site ``n`` sits at ``n * 2pi/N`` and
projects to base site ``n mod N``.  The deck group Z acts by whole periods:
``(L_g^* s)(n) = s(n + g N)``.  Sections and partition functions are arrays with
an integer offset, zero outside their window, so every sum over the group is
finite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .group_core import Group, build_group
from .nc_forms import CyclicCocycle, GroupCocycle, NCForm, form_mul, pair_cocycle

COVER_STENCILS = ("central2", "forward1", "backward1")


class CoverError(ValueError):
    pass


@dataclass
class CoverFunction:
    """Finite-support function on cover sites ``offset .. offset+len(values)-1``."""
    offset: int
    values: np.ndarray

    @property
    def stop(self):
        return self.offset + len(self.values)

    def window(self, lo, hi):
        """Values on sites lo..hi-1, zero outside the support."""
        out = np.zeros(hi - lo, dtype=self.values.dtype)
        a, b = max(lo, self.offset), min(hi, self.stop)
        if a < b:
            out[a - lo:b - lo] = self.values[a - self.offset:b - self.offset]
        return out


@dataclass(frozen=True)
class DiscreteCover:
    N: int
    stencil: str = "central2"

    @property
    def spacing(self):
        return 2 * np.pi / self.N

    @property
    def group(self) -> Group:
        return build_group("Z")

    def pullback(self, f: CoverFunction, g: int) -> CoverFunction:
        """L_g^* f, i.e. n -> f(n + gN)."""
        return CoverFunction(f.offset - g * self.N, f.values)

    def project(self, n):
        return np.mod(n, self.N)

    def sample(self, func, lo_period: float, hi_period: float) -> CoverFunction:
        """Sample a function of the cover coordinate (in radians) over a range of periods."""
        lo, hi = int(np.floor(lo_period * self.N)), int(np.ceil(hi_period * self.N))
        n = np.arange(lo, hi + 1)
        return CoverFunction(lo, np.asarray(func(n * self.spacing), dtype=complex))

    def derivative(self, f: CoverFunction, stencil=None) -> CoverFunction:
        stencil = stencil or self.stencil
        if stencil not in COVER_STENCILS:
            raise CoverError(f"stencil {stencil!r} is not available on the cover line")
        # the stencil widens the support by one site on each side
        v = f.window(f.offset - 2, f.stop + 2)
        if stencil == "central2":
            dv = (v[2:] - v[:-2]) / (2 * self.spacing)
        elif stencil == "forward1":
            dv = (v[2:] - v[1:-1]) / self.spacing
        else:
            dv = (v[1:-1] - v[:-2]) / self.spacing
        return CoverFunction(f.offset - 1, dv)

    def group_range(self, *fs: CoverFunction, margin: int = 1):
        lo = min(f.offset for f in fs)
        hi = max(f.stop for f in fs)
        span = int(np.ceil((hi - lo) / self.N)) + margin
        return range(-span, span + 1)

    def periodize(self, f: CoverFunction) -> np.ndarray:
        """Sum over deck translates, returned on base sites 0..N-1."""
        out = np.zeros(self.N, dtype=complex)
        n = np.arange(f.offset, f.stop)
        np.add.at(out, self.project(n), f.values)
        return out


def _mul(a: CoverFunction, b: CoverFunction) -> CoverFunction:
    lo, hi = max(a.offset, b.offset), min(a.stop, b.stop)
    if lo >= hi:
        return CoverFunction(lo, np.zeros(0, dtype=complex))
    return CoverFunction(lo, a.window(lo, hi) * b.window(lo, hi))


def _add(a: CoverFunction, b: CoverFunction, sign=1) -> CoverFunction:
    lo, hi = min(a.offset, b.offset), max(a.stop, b.stop)
    return CoverFunction(lo, a.window(lo, hi) + sign * b.window(lo, hi))


# ----------------------------------------------------------------------------
# partition functions


def _profile_values(N: int, profile: str):
    n = np.arange(-2 * N, 3 * N)
    if profile == "indicator":
        return n, ((n >= 0) & (n < N)).astype(float)
    if profile == "hat":
        # width 2N centered mid-period: the translates are an exact partition already
        c = (N - 1) / 2
        return n, np.clip(1.0 - np.abs(n - c) / N, 0.0, None)
    if profile == "bump":
        r = (n - (N - 1) / 2) / (1.5 * N)
        out = np.zeros(n.shape)
        inside = np.abs(r) < 1
        out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
        return n, out
    raise CoverError(f"unknown profile {profile!r}")


def make_h(cover: DiscreteCover, profile="hat", values=None, offset=0) -> CoverFunction:
    """Real finite-support h with sum_g L_g^* h = 1, renormalized pointwise.

    ``values``/``offset`` supply a custom profile instead of a named one.
    """
    if values is None:
        n, v = _profile_values(cover.N, profile)
        offset = int(n[0])
    else:
        v = np.asarray(values, dtype=float)
    f = CoverFunction(int(offset), v.astype(complex))
    total = cover.periodize(f).real
    if np.any(total <= 0):
        raise CoverError("h has empty support over some base site")
    n = np.arange(f.offset, f.stop)
    f.values = f.values / total[cover.project(n)]
    nz = np.nonzero(f.values)[0]
    return CoverFunction(f.offset + int(nz[0]), f.values[nz[0]:nz[-1] + 1])


def partition_residual(cover: DiscreteCover, h: CoverFunction) -> float:
    return float(np.abs(cover.periodize(h) - 1).max())


# ----------------------------------------------------------------------------
# connection and curvature


def cover_connection_01(cover: DiscreteCover, h: CoverFunction, s: CoverFunction, margin=1) -> dict:
    """{g: h * L_g^* s}; the (0,1) part is sum_g dg (x) (h L_g^* s)."""
    out = {}
    for g in cover.group_range(h, s, margin=margin):
        term = _mul(h, cover.pullback(s, g))
        if np.any(term.values != 0):
            out[g] = term
    return out


@dataclass
class CoverCurvature:
    """Curvature in trace-ready form, sampled on base sites.

    ``first[g]`` is the coefficient of the word ``dg g^{-1}`` (a base 1-form);
    ``second[(g, g2)]`` is the coefficient of ``dg dg2 (g2 g)^{-1}`` (a base
    0-form).  Coefficients are Gamma-translates moved past the group element.
    """
    first: dict
    second: dict


def cover_curvature(cover: DiscreteCover, h: CoverFunction, margin=1) -> CoverCurvature:
    dh = cover.derivative(h)
    first = {}
    for g in cover.group_range(h, margin=margin):
        if g == 0:
            continue
        # f (a . s) = a . ((L_a^* f) s) with a = g^{-1}
        coeff = -_base_values(cover, cover.pullback(dh, -g))
        if np.any(coeff != 0):
            first[g] = coeff
    second = {}
    for g in cover.group_range(h, margin=margin):
        hg = _mul(h, cover.pullback(h, g))
        if g == 0 or not np.any(hg.values != 0):
            continue
        for g2 in cover.group_range(h, margin=margin):
            if g2 == 0:
                continue
            coeff = _base_values(cover, cover.pullback(hg, -(g2 + g)))
            if np.any(coeff != 0):
                second[(g, g2)] = coeff
    return CoverCurvature(first, second)


def _base_values(cover: DiscreteCover, f: CoverFunction) -> np.ndarray:
    """Values on the fundamental domain 0..N-1 of the cover."""
    return f.window(0, cover.N)


# ----------------------------------------------------------------------------
# pairing with cyclic cocycles


def _word_value(Z: CyclicCocycle, G: Group, g) -> complex:
    """Z(dg g^{-1}) through the form algebra."""
    e = G.identity
    w = form_mul(NCForm.word(G, (e, g)), NCForm.word(G, (G.inv(g),)))
    return pair_cocycle(Z, w)


def pair_injective(Z: CyclicCocycle, cover: DiscreteCover, h: CoverFunction, margin=1):
    """<Z_tau, ch> on the circle: returns (base form values, integral over the circle).

    k = 0 pairs with the rank term, k = 1 with minus the first curvature term.
    The group element of every word is the identity, so a cocycle attached to
    x != e gives exactly zero.
    """
    G = cover.group
    if Z.group.kind != "free_abelian" or Z.group.rank != 1:
        raise CoverError("the cover model is implemented for Gamma = Z over a circle")
    if Z.k > 1:
        raise CoverError(f"form degree {Z.k} exceeds the base dimension 1")
    if Z.k == 0:
        val = pair_cocycle(Z, NCForm.word(G, (G.identity,)))
        form = np.full(cover.N, val, dtype=complex)
        return form, complex(form.sum() * cover.spacing)
    curv = cover_curvature(cover, h, margin=margin)
    form = np.zeros(cover.N, dtype=complex)
    for g in sorted(curv.first):
        z = _word_value(Z, G, (g,))
        if z != 0:
            form = form - z * curv.first[g]
    return form, complex(form.sum() * cover.spacing)


def refinement_order(errors, sizes):
    errors, sizes = np.asarray(errors, float), np.asarray(sizes, float)
    return -np.diff(np.log(errors)) / np.diff(np.log(sizes))


# ----------------------------------------------------------------------------
# self-adjointness of the connection for the B-valued form


def hermitian_form(cover: DiscreteCover, s1: CoverFunction, s2: CoverFunction, margin=1) -> dict:
    """{g: <s1, s2>_g on base sites}, <s1,s2>(x) = sum_{g,g'} g s1(g g' x) conj(s2)(g' x)."""
    s2c = CoverFunction(s2.offset, s2.values.conj())
    out = {}
    for g in cover.group_range(s1, s2, margin=margin):
        c = cover.periodize(_mul(cover.pullback(s1, g), s2c))
        if np.any(c != 0):
            out[g] = c
    return out


def self_adjoint_residual(cover: DiscreteCover, h: CoverFunction, s1: CoverFunction, s2: CoverFunction,
                          margin=1, parts=False):
    """max |d<s1,s2> - <grad s1, s2> + <s1, grad s2>| over both Omega_1 parts.

    The base-form part compares the stencil derivative of the pairing with the
    Leibniz expansion; the noncommutative part uses the (0,1) connection built
    from h.  Words are indexed as (g0, g1) for g0 dg1.
    """
    D = cover.derivative
    s2c = CoverFunction(s2.offset, s2.values.conj())
    ds1, ds2c = D(s1), D(s2c)
    grange = cover.group_range(h, s1, s2, margin=margin)

    base = 0.0
    for g in grange:
        prod = _mul(cover.pullback(s1, g), s2c)
        lhs = cover.periodize(D(prod))
        rhs = cover.periodize(_mul(cover.pullback(ds1, g), s2c)) \
            + cover.periodize(_mul(cover.pullback(s1, g), ds2c))
        base = max(base, float(np.abs(lhs - rhs).max(initial=0.0)))

    words: dict = {}

    def acc(word, arr, sign=1):
        if word[1] == 0 or not np.any(arr != 0):
            return
        words[word] = words.get(word, 0) + sign * arr

    form = hermitian_form(cover, s1, s2, margin=margin)
    for g, c in form.items():
        acc((0, g), c)
    for gam in grange:
        hs1 = _mul(h, cover.pullback(s1, gam))
        for g in grange:
            # dgam g = d(gam g) - gam dg
            A = cover.periodize(_mul(cover.pullback(hs1, g), s2c))
            acc((0, gam + g), A, -1)
            acc((gam, g), A, +1)
            # minus <s1, grad01 s2>: + sum gam dg L*_{gam g g'} s1 (L*_{g g'} h) L*_{g'} conj(s2)
            B = cover.periodize(_mul(_mul(cover.pullback(s1, gam + g), cover.pullback(h, g)), s2c))
            acc((gam, g), B, -1)
    nc = max((float(np.abs(v).max()) for v in words.values()), default=0.0)
    if parts:
        return {"base": base, "noncommutative": nc}
    return max(base, nc)


def bump_section(cover: DiscreteCover, center=0.3, radius_periods=1.6, phase=0.0) -> CoverFunction:
    """Smooth compactly supported section, optionally modulated by exp(i phase y)."""
    R = radius_periods * 2 * np.pi
    c = center * 2 * np.pi

    def f(y):
        r = (y - c) / R
        out = np.zeros_like(y, dtype=complex)
        inside = np.abs(r) < 1
        out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2)) * np.exp(1j * phase * y[inside])
        return out

    return cover.sample(f, center - radius_periods, center + radius_periods)


def linear_cocycle(coeff=1.0, x=0) -> GroupCocycle:
    """tau(a, b) = coeff * (b - a) on Z, attached to x."""
    return GroupCocycle.linear(build_group("Z"), 1, [coeff], x=(x,))
