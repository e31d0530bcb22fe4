"""Periodic base grids (point, circle, 2-torus) and bigraded form fields.

A form field stores one array per component ``(mask, q)``: ``mask`` is a bit
mask of base directions (bit i stands for dtheta_i, so p = popcount(mask)) and
``q`` is the degree of the noncommutative channel.  Arrays have the grid axes
first and an arbitrary value shape after them; for q-channels the last value
axis holds dense coordinates in Omega_q of the group algebra.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nc_forms import d_matrix

STENCILS = ("spectral", "central2", "central4", "forward1")


class GeometryError(ValueError):
    pass


def popcount(m: int) -> int:
    return bin(m).count("1")


@dataclass(frozen=True)
class BaseGrid:
    kind: str  # point | circle | torus2
    shape: tuple = ()
    stencil: str = "spectral"

    def __post_init__(self):
        if self.kind not in ("point", "circle", "torus2"):
            raise GeometryError(f"unknown base kind {self.kind!r}")
        if self.stencil not in STENCILS:
            raise GeometryError(f"unknown stencil {self.stencil!r}")
        if self.kind != "point" and min(self.shape) < 8:
            raise GeometryError("periodic grids need at least 8 points per direction")

    @property
    def dim(self):
        return len(self.shape)

    @property
    def spacing(self):
        return tuple(2 * np.pi / n for n in self.shape)

    def coords(self):
        """Meshgrid of angles, one array per direction."""
        axes = [np.arange(n) * 2 * np.pi / n for n in self.shape]
        return np.meshgrid(*axes, indexing="ij") if axes else []

    def with_stencil(self, stencil):
        return BaseGrid(self.kind, self.shape, stencil)

    def with_size(self, n):
        return BaseGrid(self.kind, (n,) * self.dim, self.stencil)


def make_grid(kind="circle", N=64, stencil="spectral") -> BaseGrid:
    if kind == "point":
        return BaseGrid("point", (), stencil)
    if kind == "circle":
        return BaseGrid("circle", (int(N),), stencil)
    if kind == "torus2":
        N = (N, N) if np.isscalar(N) else tuple(N)
        return BaseGrid("torus2", tuple(int(n) for n in N), stencil)
    raise GeometryError(f"unknown base kind {kind!r}")


def derivative(values, grid: BaseGrid, axis: int, stencil=None):
    """Partial derivative along grid direction ``axis`` (array axis ``axis``)."""
    stencil = stencil or grid.stencil
    if grid.dim == 0:
        raise GeometryError("no derivatives on a point base")
    n = grid.shape[axis]
    h = 2 * np.pi / n
    f = np.asarray(values)
    if stencil == "spectral":
        k = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            k[n // 2] = 0.0
        shape = [1] * f.ndim
        shape[axis] = n
        out = np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(f, axis=axis), axis=axis)
        return out if np.iscomplexobj(f) else out.real
    if stencil == "central2":
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)
    if stencil == "central4":
        return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis)
                - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * h)
    if stencil == "forward1":
        return (np.roll(f, -1, axis) - f) / h
    raise GeometryError(f"unknown stencil {stencil!r}")


class FormField:
    """Bigraded form field on a base grid."""

    def __init__(self, grid: BaseGrid, components=None, group=None):
        self.grid = grid
        self.group = group
        self.components = {}
        for key, arr in (components or {}).items():
            self[key] = arr

    def __setitem__(self, key, arr):
        mask, q = key
        if mask >> self.grid.dim:
            raise GeometryError(f"form mask {mask} exceeds base dimension {self.grid.dim}")
        arr = np.asarray(arr)
        if arr.shape[:self.grid.dim] != self.grid.shape:
            raise GeometryError("component does not match the grid shape")
        self.components[(mask, q)] = arr

    def __getitem__(self, key):
        return self.components[key]

    def get(self, key, default=None):
        return self.components.get(key, default)

    def keys(self):
        return sorted(self.components)

    def copy(self):
        return FormField(self.grid, {k: v.copy() for k, v in self.components.items()}, self.group)

    def _combine(self, other, sign):
        out = self.copy()
        for k, v in other.components.items():
            if k in out.components:
                out.components[k] = out.components[k] + sign * v
            else:
                out.components[k] = sign * v
        return out

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __mul__(self, scalar):
        return FormField(self.grid, {k: v * scalar for k, v in self.components.items()}, self.group)

    __rmul__ = __mul__

    def max_abs(self):
        return max((float(np.abs(v).max(initial=0.0)) for v in self.components.values()), default=0.0)

    def bidegrees(self):
        return sorted({(popcount(m), q) for m, q in self.components})

    def component_pq(self, p, q):
        """All components of bidegree (p, q), keyed by mask."""
        return {m: v for (m, qq), v in self.components.items() if popcount(m) == p and qq == q}


def d10(f: FormField, stencil=None) -> FormField:
    """Base exterior derivative, d(a dtheta_m) = sum_i d_i a dtheta_i ^ dtheta_m."""
    grid = f.grid
    out = FormField(grid, group=f.group)
    for (m, q), arr in f.components.items():
        for i in range(grid.dim):
            if m >> i & 1:
                continue
            sign = (-1) ** popcount(m & ((1 << i) - 1))
            key = (m | 1 << i, q)
            term = sign * derivative(arr, grid, i, stencil)
            out.components[key] = out.components.get(key, 0) + term
    return out


def d01(f: FormField, q_max: int = 2) -> FormField:
    """Universal differential on the q-channel, with sign (-1)^p."""
    if f.group is None:
        raise GeometryError("d01 needs the group of the coefficient algebra")
    out = FormField(f.grid, group=f.group)
    for (m, q), arr in f.components.items():
        if q + 1 > q_max:
            raise GeometryError(f"d01 would exceed q_max = {q_max}")
        D = d_matrix(f.group, q)
        val = np.einsum("...a,ba->...b", arr, D)
        out.components[(m, q + 1)] = (-1) ** popcount(m) * val
    return out


def integrate(f: FormField, cycle: str | None = None) -> dict:
    """Riemann sum over the fundamental cycle of the base; returns {q: value}."""
    grid = f.grid
    cycle = cycle or grid.kind
    if cycle != grid.kind and cycle != "point":
        raise GeometryError(f"cycle {cycle!r} does not live on a {grid.kind} base")
    out = {}
    if cycle == "point":
        for (m, q), arr in f.components.items():
            if m == 0:
                out[q] = arr[(0,) * grid.dim] if grid.dim else arr
        return out
    top = (1 << grid.dim) - 1
    weight = float(np.prod(grid.spacing))
    for (m, q), arr in f.components.items():
        if m != top:
            continue
        out[q] = weight * arr.sum(axis=tuple(range(grid.dim)))
    if not out and any(m != top for m, _ in f.components):
        raise GeometryError("no top-degree component to integrate over the cycle")
    return out


def _coexact_part(a1, a2, grid: BaseGrid):
    """Coexact part of the 1-form a1 dtheta1 + a2 dtheta2 on the torus (spectral)."""
    n1, n2 = grid.shape
    k1 = np.fft.fftfreq(n1, d=1.0 / n1).reshape((n1, 1) + (1,) * (a1.ndim - 2))
    k2 = np.fft.fftfreq(n2, d=1.0 / n2).reshape((1, n2) + (1,) * (a1.ndim - 2))
    A1 = np.fft.fft2(a1, axes=(0, 1))
    A2 = np.fft.fft2(a2, axes=(0, 1))
    kk = k1 ** 2 + k2 ** 2
    safe = np.where(kk == 0, 1.0, kk)
    proj = (k1 * A1 + k2 * A2) / safe
    B1 = np.where(kk == 0, 0.0, A1 - k1 * proj)
    B2 = np.where(kk == 0, 0.0, A2 - k2 * proj)
    b1 = np.fft.ifft2(B1, axes=(0, 1))
    b2 = np.fft.ifft2(B2, axes=(0, 1))
    if not (np.iscomplexobj(a1) or np.iscomplexobj(a2)):
        b1, b2 = b1.real, b2.real
    return b1, b2


def omega_pp_project(f: FormField, parity: str | None = None) -> FormField:
    """Normal form in the quotient by p<q components and closed (k,k) components."""
    grid = f.grid
    out = FormField(grid, group=f.group)
    for (m, q), arr in f.components.items():
        p = popcount(m)
        if parity == "even" and (p + q) % 2:
            continue
        if parity == "odd" and (p + q) % 2 == 0:
            continue
        if p < q:
            continue
        if p == q:
            if p == 0:
                out.components[(m, q)] = arr - arr.mean(axis=tuple(range(grid.dim))) if grid.dim else 0 * arr
            elif p == grid.dim:
                continue  # top-degree forms are closed
            continue
        out.components[(m, q)] = arr
    if grid.kind == "torus2":
        a1 = f.get((1, 1))
        a2 = f.get((2, 1))
        if parity != "odd" and (a1 is not None or a2 is not None):
            z = a1 if a1 is not None else a2
            a1 = a1 if a1 is not None else np.zeros_like(z)
            a2 = a2 if a2 is not None else np.zeros_like(z)
            b1, b2 = _coexact_part(a1, a2, grid)
            out.components[(1, 1)] = b1
            out.components[(2, 1)] = b2
    return out


def pp_equal(f1: FormField, f2: FormField, tol=1e-10, parity=None) -> bool:
    """Equality in the quotient: the projected difference vanishes."""
    return omega_pp_project(f1 - f2, parity).max_abs() <= tol


def scalar_field(grid: BaseGrid, values, mask=0, q=0, group=None) -> FormField:
    return FormField(grid, {(mask, q): np.asarray(values)}, group)
