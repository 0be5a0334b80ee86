"""FFT'ed FMM translation-operator tensors on a uniform box grid.

Time convention is e^{+jwt}; the outgoing Green's function is e^{-jkR}/R, so
the translation operator uses spherical Hankel functions of the second kind.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .tensor_core import BYTES_PER_VALUE, ShapeError

log = logging.getLogger(__name__)

C0 = 299_792_458.0
MU0 = 4e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0 * C0)


class MemoryCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class MediumParams:
    """Homogeneous background medium.  ``relative_permittivity`` is the lossless part."""

    frequency: float = 3e8
    relative_permittivity: complex = 1.0
    conductivity: float = 0.0
    relative_permeability: float = 1.0

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.relative_permeability <= 0:
            raise ValueError("relative permeability must be positive")
        if self.effective_relative_permittivity.imag > 0:
            raise ValueError("medium must be passive (Im eps_eff <= 0)")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    @property
    def wavelength(self) -> float:
        """Free-space wavelength; box sizes are quoted in these units."""
        return C0 / self.frequency

    @property
    def effective_relative_permittivity(self) -> complex:
        return complex(self.relative_permittivity) - 1j * self.conductivity / (self.omega * EPS0)


@dataclass(frozen=True)
class GridSpec:
    box_counts: tuple
    box_edge: float
    near_kappa: float = 4.0

    def __post_init__(self):
        if len(self.box_counts) != 3 or min(self.box_counts) < 1:
            raise ValueError(f"box_counts must be three positive integers, got {self.box_counts}")
        if self.box_edge <= 0:
            raise ValueError("box_edge must be positive")

    @property
    def fft_shape(self) -> tuple:
        return tuple(2 * int(k) for k in self.box_counts)

    @property
    def num_boxes(self) -> int:
        kx, ky, kz = self.box_counts
        return int(kx) * int(ky) * int(kz)

    @property
    def sphere_radius(self) -> float:
        return math.sqrt(3.0) / 2.0 * self.box_edge

    @classmethod
    def cube(cls, extent: float, box_edge: float, near_kappa: float = 4.0) -> "GridSpec":
        """Cubic domain of side ``extent`` split into boxes of edge ``box_edge``."""
        k = int(round(extent / box_edge))
        if k < 1 or not math.isclose(k * box_edge, extent, rel_tol=1e-6):
            raise ValueError(f"extent {extent} is not a whole number of boxes of edge {box_edge}")
        return cls((k, k, k), box_edge, near_kappa)


@dataclass(frozen=True)
class DirectionGrid:
    L: int
    directions: np.ndarray   # (N_dir, 3), polar index fastest
    weights: np.ndarray      # (N_dir,)

    @property
    def n_theta(self) -> int:
        return self.L + 1

    @property
    def n_phi(self) -> int:
        return 2 * self.L + 1

    def __len__(self) -> int:
        return self.directions.shape[0]


def wavenumber_and_impedance(m: MediumParams) -> tuple:
    """Complex wavenumber (Im k <= 0) and intrinsic impedance (Re eta > 0)."""
    mu = MU0 * m.relative_permeability
    eps = EPS0 * m.effective_relative_permittivity
    k = m.omega * np.sqrt(complex(mu * eps))
    if k.imag > 0 or (k.imag == 0 and k.real < 0):
        k = -k
    eta = np.sqrt(complex(mu / eps))
    if eta.real < 0:
        eta = -eta
    return complex(k), complex(eta)


def multipole_count(k: complex, box_edge: float, digits: float) -> int:
    """Excess-bandwidth rule L = x + 1.8 d^{2/3} x^{1/3} with x = 2|k|R^s."""
    if digits < 1:
        raise ValueError("digits must be at least 1")
    x = 2.0 * abs(k) * math.sqrt(3.0) / 2.0 * box_edge
    L = int(math.floor(x + 1.8 * digits ** (2.0 / 3.0) * x ** (1.0 / 3.0)))
    if L < 1:
        log.warning("multipole count %d clamped to 1 (x=%.3g)", L, x)
        L = 1
    return L


def build_direction_grid(L: int) -> DirectionGrid:
    """Gauss-Legendre nodes in cos(theta) times uniform azimuths."""
    if L < 1:
        raise ValueError("L must be at least 1")
    x, wgl = np.polynomial.legendre.leggauss(L + 1)
    phi = 2.0 * np.pi * np.arange(2 * L + 1) / (2 * L + 1)
    sin_t = np.sqrt(1.0 - x * x)
    cx, cp = np.meshgrid(np.arange(L + 1), np.arange(2 * L + 1), indexing="ij")
    cx = cx.ravel(order="F")
    cp = cp.ravel(order="F")
    dirs = np.stack([sin_t[cx] * np.cos(phi[cp]), sin_t[cx] * np.sin(phi[cp]), x[cx]], axis=1)
    weights = wgl[cx] * (2.0 * np.pi / (2 * L + 1))
    return DirectionGrid(L, dirs, weights)


def legendre_sequence(L: int, x) -> np.ndarray:
    """P_0..P_L at ``x`` by the three-term recurrence; shape (L+1,) + shape(x)."""
    x = np.asarray(x)
    out = np.empty((L + 1,) + x.shape, dtype=np.result_type(x, float))
    out[0] = 1.0
    if L >= 1:
        out[1] = x
    for l in range(1, L):
        out[l + 1] = ((2 * l + 1) * x * out[l] - l * out[l - 1]) / (l + 1)
    return out


def spherical_hankel2_sequence(L: int, z) -> np.ndarray:
    """h^(2)_0..h^(2)_L at ``z`` by upward recurrence; shape (L+1,) + shape(z).

    Upward recurrence is stable here because the y_l part dominates once
    l exceeds |z|.
    """
    z = np.asarray(z, dtype=np.complex128)
    if np.any(z == 0):
        raise ZeroDivisionError("spherical Hankel function is singular at z = 0")
    out = np.empty((L + 1,) + z.shape, dtype=np.complex128)
    e = np.exp(-1j * z)
    out[0] = 1j * e / z
    if L >= 1:
        out[1] = e * (1j / (z * z) - 1.0 / z)
    for l in range(1, L):
        out[l + 1] = (2 * l + 1) / z * out[l] - out[l - 1]
    return out


def _offsets(n: int) -> np.ndarray:
    m = np.arange(n)
    return np.where(m < n // 2, m, m - n)


class TranslationKernel:
    """Direction-independent part of the translation operator on one grid.

    Precomputes the far offsets, their unit vectors and the radial factors
    (-j)^l (2l+1) h_l(kR) so each direction only runs the Legendre recurrence.
    """

    def __init__(self, grid: GridSpec, k: complex, eta: complex, L: int):
        if L < 1:
            raise ValueError("L must be at least 1")
        self.grid = grid
        self.k = complex(k)
        self.eta = complex(eta)
        self.L = int(L)
        n = grid.fft_shape
        kc = grid.box_counts
        ux, uy, uz = (_offsets(s) for s in n)
        UX, UY, UZ = np.meshgrid(ux, uy, uz, indexing="ij")
        R = grid.box_edge * np.sqrt(UX * UX + UY * UY + UZ * UZ)
        # offsets of magnitude K in any axis never occur between boxes (padding)
        inside = (np.abs(UX) < kc[0]) & (np.abs(UY) < kc[1]) & (np.abs(UZ) < kc[2])
        self.far_mask = inside & (R > grid.near_kappa * grid.sphere_radius)
        self.far_index = np.flatnonzero(self.far_mask.ravel(order="F"))
        Rf = R.ravel(order="F")[self.far_index]
        u = np.stack([a.ravel(order="F")[self.far_index] for a in (UX, UY, UZ)], axis=1)
        self.unit = u * (grid.box_edge / Rf)[:, None]
        coef = np.array([(-1j) ** l * (2 * l + 1) for l in range(self.L + 1)])
        self.radial = coef[:, None] * spherical_hankel2_sequence(self.L, self.k * Rf)
        self.prefactor = -self.k ** 2 * self.eta / (16.0 * np.pi ** 2)
        self.shape = n

    def spatial(self, direction) -> np.ndarray:
        c = self.unit @ np.asarray(direction, dtype=float)
        p_prev = np.ones_like(c)
        p_cur = c
        acc = self.radial[0] * p_prev + self.radial[1] * p_cur
        for l in range(1, self.L):
            p_prev, p_cur = p_cur, ((2 * l + 1) * c * p_cur - l * p_prev) / (l + 1)
            acc += self.radial[l + 1] * p_cur
        flat = np.zeros(int(np.prod(self.shape)), dtype=np.complex128)
        flat[self.far_index] = self.prefactor * acc
        return flat.reshape(self.shape, order="F")


def translation_spatial(grid: GridSpec, k: complex, eta: complex, L: int, direction) -> np.ndarray:
    """Spatial translation tensor on the 2K_x x 2K_y x 2K_z circulant layout."""
    return TranslationKernel(grid, k, eta, L).spatial(direction)


def fft3_forward(t: np.ndarray) -> np.ndarray:
    """Unnormalized forward 3D DFT (negative exponent)."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise ShapeError(f"expected a 3D tensor, got shape {t.shape}")
    return np.fft.fftn(t)


def fft3_inverse(t: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft3_forward` (carries the 1/N factor)."""
    return np.fft.ifftn(t)


def convolve(t_fft: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Circular convolution of the spatial field ``a`` with the operator whose DFT is ``t_fft``."""
    if t_fft.shape != a.shape:
        raise ShapeError(f"shape mismatch: {t_fft.shape} vs {a.shape}")
    return np.fft.ifftn(t_fft * np.fft.fftn(a))


@dataclass
class TranslationSuite:
    """All FFT'ed translation tensors for one grid / medium / accuracy setting.

    Slices are produced on demand; :meth:`stacked` materializes the 4D array
    with the direction as the last (slowest) index.
    """

    grid: GridSpec
    medium: MediumParams
    digits: float
    k: complex = field(init=False)
    eta: complex = field(init=False)
    L: int = field(init=False)
    directions: DirectionGrid = field(init=False)
    _kernel: Optional[TranslationKernel] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.k, self.eta = wavenumber_and_impedance(self.medium)
        self.L = multipole_count(self.k, self.grid.box_edge, self.digits)
        self.directions = build_direction_grid(self.L)

    @property
    def n_dir(self) -> int:
        return len(self.directions)

    @property
    def slice_shape(self) -> tuple:
        return self.grid.fft_shape

    @property
    def shape4d(self) -> tuple:
        return self.slice_shape + (self.n_dir,)

    @property
    def bytes_original(self) -> int:
        return int(np.prod(self.shape4d)) * BYTES_PER_VALUE

    @property
    def kernel(self) -> TranslationKernel:
        if self._kernel is None:
            self._kernel = TranslationKernel(self.grid, self.k, self.eta, self.L)
        return self._kernel

    def spatial(self, p: int) -> np.ndarray:
        return self.kernel.spatial(self.directions.directions[p])

    def slice(self, p: int) -> np.ndarray:
        """FFT'ed translation tensor for direction ``p`` (0-based)."""
        return fft3_forward(self.spatial(p))

    def slices(self) -> Iterator[np.ndarray]:
        for p in range(self.n_dir):
            yield self.slice(p)

    def stacked(self, memory_cap_bytes: Optional[int] = None) -> np.ndarray:
        if memory_cap_bytes is not None and self.bytes_original > memory_cap_bytes:
            raise MemoryCapExceeded(
                f"stacked tensor {self.shape4d} needs {self.bytes_original / 2**30:.2f} GiB, "
                f"cap is {memory_cap_bytes / 2**30:.2f} GiB")
        out = np.empty(self.shape4d, dtype=np.complex128, order="F")
        for p in range(self.n_dir):
            out[..., p] = self.slice(p)
        return out


def assemble_suite(grid: GridSpec, medium: MediumParams, digits: float, layout: str = "3d",
                   memory_cap_bytes: Optional[int] = None):
    """List of per-direction FFT'ed tensors (``layout='3d'``) or the stacked 4D array."""
    suite = TranslationSuite(grid, medium, digits)
    if layout == "4d":
        return suite.stacked(memory_cap_bytes)
    if layout != "3d":
        raise ValueError(f"unknown layout {layout!r}")
    if memory_cap_bytes is not None and suite.bytes_original > memory_cap_bytes:
        raise MemoryCapExceeded("suite exceeds memory cap")
    return list(suite.slices())


def circulant_indices(shape: Sequence[int]) -> tuple:
    """Offset vectors (u_x, u_y, u_z) of every entry in the circulant layout."""
    return tuple(np.meshgrid(*(_offsets(s) for s in shape), indexing="ij"))
