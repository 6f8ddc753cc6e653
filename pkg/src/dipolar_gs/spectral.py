"""Periodic 3D grid, FFT conventions and the dipolar Fourier multiplier.

Fields are plain numpy arrays of shape ``grid.shape`` indexed ``[i1, i2, i3]``
(x1 slowest, x3 fastest, C order) with ``x_j = -L/2 + i_j h``. The origin
sits at index ``n // 2`` on each axis. Forward transforms are unnormalized,
inverse transforms carry 1/N (numpy convention). Integrals are rectangle
sums ``h1 h2 h3 * sum(...)``, which are exact for band-limited fields and
make every Parseval identity hold to roundoff.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

__all__ = [
    "Grid3",
    "Norms",
    "khat",
    "forward",
    "inverse",
    "dipolar_potential",
    "laplacian_apply",
    "norms",
    "mass",
    "inner",
    "grad_norm_sq",
    "support_fraction",
    "dilate",
    "write_snapshot",
    "read_snapshot",
]

KHAT_MIN = -4.0 * math.pi / 3.0
KHAT_MAX = 8.0 * math.pi / 3.0


def khat(xi) -> np.ndarray:
    """(4 pi/3)(3 xi_3^2/|xi|^2 - 1) for xi of shape (..., 3); 0 at xi = 0."""
    xi = np.asarray(xi, dtype=float)
    k2 = np.sum(xi**2, axis=-1)
    out = np.zeros_like(k2)
    nz = k2 > 0
    out[nz] = (4.0 * math.pi / 3.0) * (3.0 * xi[..., 2][nz] ** 2 / k2[nz] - 1.0)
    return out


def _khat_lattice(k1, k2, k3) -> np.ndarray:
    ksq = k1**2 + k2**2 + k3**2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (4.0 * math.pi / 3.0) * (3.0 * k3**2 / ksq - 1.0)
    out[ksq == 0] = 0.0
    return out


@dataclass(frozen=True)
class Grid3:
    n: tuple[int, int, int]
    box: tuple[float, float, float]

    def __post_init__(self):
        n = tuple(int(v) for v in np.broadcast_to(self.n, (3,)))
        box = tuple(float(v) for v in np.broadcast_to(self.box, (3,)))
        if any(v < 8 or v % 2 for v in n):
            raise ValueError(f"grid sizes must be even and >= 8, got {n}")
        if any(not v > 0 for v in box):
            raise ValueError(f"box lengths must be positive, got {box}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "box", box)

    @classmethod
    def cube(cls, n: int, box: float) -> "Grid3":
        return cls((n, n, n), (box, box, box))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n

    @property
    def size(self) -> int:
        return self.n[0] * self.n[1] * self.n[2]

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(L / m for L, m in zip(self.box, self.n))

    @property
    def dv(self) -> float:
        h = self.spacing
        return h[0] * h[1] * h[2]

    @property
    def volume(self) -> float:
        return self.box[0] * self.box[1] * self.box[2]

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(-L / 2 + np.arange(m) * (L / m) for L, m in zip(self.box, self.n))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Sparse (broadcastable) coordinate arrays x1, x2, x3."""
        return tuple(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    @cached_property
    def radius(self) -> np.ndarray:
        x1, x2, x3 = self.coords
        return np.sqrt(x1**2 + x2**2 + x3**2)

    @cached_property
    def freqs(self) -> tuple[np.ndarray, ...]:
        """Angular frequencies 2 pi m / L per axis, FFT ordering."""
        return tuple(2 * math.pi * np.fft.fftfreq(m, d=L / m) for L, m in zip(self.box, self.n))

    @cached_property
    def kvec(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.freqs, indexing="ij", sparse=True))

    @cached_property
    def kvec_half(self) -> tuple[np.ndarray, ...]:
        L3, m3 = self.box[2], self.n[2]
        f3 = 2 * math.pi * np.fft.rfftfreq(m3, d=L3 / m3)
        return tuple(np.meshgrid(self.freqs[0], self.freqs[1], f3, indexing="ij", sparse=True))

    @cached_property
    def k2(self) -> np.ndarray:
        k1, k2, k3 = self.kvec
        return k1**2 + k2**2 + k3**2

    @cached_property
    def k2_half(self) -> np.ndarray:
        k1, k2, k3 = self.kvec_half
        return k1**2 + k2**2 + k3**2

    @cached_property
    def khat(self) -> np.ndarray:
        return _khat_lattice(*self.kvec)

    @cached_property
    def khat_half(self) -> np.ndarray:
        return _khat_lattice(*self.kvec_half)

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x1, x2, x3)`` on the grid."""
        return np.broadcast_to(func(*self.coords), self.shape).copy()

    def to_dict(self) -> dict:
        return {"n": list(self.n), "box": list(self.box)}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid3":
        return cls(tuple(data["n"]), tuple(data["box"]))


class Norms(NamedTuple):
    mass: float
    grad: float
    lp: float
    l4: float


def forward(u: np.ndarray) -> np.ndarray:
    return sfft.fftn(u)


def inverse(f: np.ndarray) -> np.ndarray:
    return sfft.ifftn(f)


def _apply_multiplier(u: np.ndarray, full: np.ndarray, half: np.ndarray) -> np.ndarray:
    if np.isrealobj(u):
        return sfft.irfftn(half * sfft.rfftn(u), s=u.shape)
    return sfft.ifftn(full * sfft.fftn(u))


def _check(u: np.ndarray, grid: Grid3) -> None:
    if u.shape != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")


def density_potential(rho: np.ndarray, grid: Grid3) -> np.ndarray:
    """K * rho for a real density sampled on the grid."""
    return sfft.irfftn(grid.khat_half * sfft.rfftn(rho), s=rho.shape)


def dipolar_potential(u: np.ndarray, grid: Grid3) -> np.ndarray:
    """Real potential K * |u|^2, computed as inverse(khat * forward(|u|^2))."""
    _check(u, grid)
    return density_potential(np.abs(u) ** 2, grid)


def laplacian_apply(u: np.ndarray, grid: Grid3) -> np.ndarray:
    _check(u, grid)
    return _apply_multiplier(u, -grid.k2, -grid.k2_half)


def inner(u: np.ndarray, v: np.ndarray, grid: Grid3) -> complex | float:
    """<u, v> = int conj(u) v."""
    out = grid.dv * np.vdot(u, v)
    return out.real if np.isrealobj(u) and np.isrealobj(v) else out


def mass(u: np.ndarray, grid: Grid3) -> float:
    return math.sqrt(grid.dv * float(np.vdot(u, u).real))


def grad_norm_sq(u: np.ndarray, grid: Grid3) -> float:
    """||grad u||_2^2 via the spectral multiplier |xi|^2 (Parseval)."""
    uh = sfft.fftn(u)
    return grid.dv / grid.size * float(np.sum(grid.k2 * np.abs(uh) ** 2))


def norms(u: np.ndarray, grid: Grid3, p: float = 3.0) -> Norms:
    _check(u, grid)
    a = np.abs(u)
    return Norms(
        mass=mass(u, grid),
        grad=math.sqrt(grad_norm_sq(u, grid)),
        lp=(grid.dv * float(np.sum(a**p))) ** (1.0 / p),
        l4=(grid.dv * float(np.sum(a**4))) ** 0.25,
    )


def support_fraction(u: np.ndarray, grid: Grid3) -> float:
    """Fraction of the mass inside the central half box |x_j| < L_j/4."""
    x1, x2, x3 = grid.coords
    inside = (np.abs(x1) < grid.box[0] / 4) & (np.abs(x2) < grid.box[1] / 4) & (np.abs(x3) < grid.box[2] / 4)
    rho = np.abs(u) ** 2
    return float(np.sum(rho[inside]) / np.sum(rho))


def dilate(u: np.ndarray, grid: Grid3, t: float, order: int = 5) -> np.ndarray:
    """Mass-preserving dilation t^{3/2} u(t x) by periodic spline resampling."""
    idx = []
    for x, L, m in zip(grid.coords, grid.box, grid.n):
        idx.append((t * x + L / 2) / (L / m))
    pts = np.broadcast_arrays(*idx)
    if np.iscomplexobj(u):
        re = ndimage.map_coordinates(u.real, pts, order=order, mode="grid-wrap")
        im = ndimage.map_coordinates(u.imag, pts, order=order, mode="grid-wrap")
        out = re + 1j * im
    else:
        out = ndimage.map_coordinates(u, pts, order=order, mode="grid-wrap")
    return t**1.5 * out


_MAGIC = b"DGPE"
_VERSION = 1
_HEADER = struct.Struct("<4sI3I3dI")
_HEADER_SIZE = 64
FLAG_REAL = 1


def write_snapshot(path, u: np.ndarray, grid: Grid3) -> None:
    """Binary snapshot: 64-byte header ("DGPE", version, n1 n2 n3, box, flags)
    then little-endian f64 (re, im) pairs in C order (x3 fastest)."""
    _check(u, grid)
    flags = FLAG_REAL if np.isrealobj(u) else 0
    head = _HEADER.pack(_MAGIC, _VERSION, *grid.n, *grid.box, flags)
    head += b"\0" * (_HEADER_SIZE - len(head))
    data = np.empty(u.size * 2, dtype="<f8")
    flat = np.asarray(u, dtype=complex).ravel(order="C")
    data[0::2] = flat.real
    data[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(data.tobytes())


def read_snapshot(path) -> tuple[np.ndarray, Grid3]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER_SIZE)
        if len(head) != _HEADER_SIZE:
            raise ValueError("truncated snapshot header")
        magic, version, n1, n2, n3, b1, b2, b3, flags = _HEADER.unpack(head[: _HEADER.size])
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        grid = Grid3((n1, n2, n3), (b1, b2, b3))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 2 * grid.size:
        raise ValueError("snapshot payload size does not match header")
    u = (data[0::2] + 1j * data[1::2]).reshape(grid.shape)
    if flags & FLAG_REAL:
        u = u.real.copy()
    return u, grid
