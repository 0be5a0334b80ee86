"""SVD-based Tucker, tensor-train and hierarchical Tucker compression of 3D/4D tensors."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np

from .tensor_core import (
    BYTES_PER_VALUE,
    ORDER,
    ShapeError,
    as_tensor,
    contract_mode3,
    leading_subspace,
    mode_product,
    mode_subspace,
    read_tensor,
    write_tensor,
)

TAG_TUCKER = 0x01
TAG_TT = 0x02
TAG_HTUCKER = 0x03


@dataclass(frozen=True)
class TuckerFormat:
    core: np.ndarray
    factors: tuple
    gamma: float

    @property
    def ranks(self) -> tuple:
        return tuple(u.shape[1] for u in self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(u.shape[0] for u in self.factors)


@dataclass(frozen=True)
class TTFormat:
    """Head factor (n_1 x r_1), cores (r_i x n_{i+1} x r_{i+1}), tail factor (n_d x r_{d-1})."""

    head_factor: np.ndarray
    cores: tuple
    tail_factor: np.ndarray
    gamma: float

    @property
    def ranks(self) -> tuple:
        return (self.head_factor.shape[1],) + tuple(c.shape[2] for c in self.cores)

    @property
    def shape(self) -> tuple:
        return ((self.head_factor.shape[0],) + tuple(c.shape[1] for c in self.cores)
                + (self.tail_factor.shape[0],))


@dataclass(frozen=True)
class HTuckerFormat:
    """Balanced binary tree ((1,2),(3,4)) with four leaves and a root matrix."""

    leaf_factors: tuple
    transfer_12: np.ndarray
    transfer_34: np.ndarray
    root_matrix: np.ndarray
    gamma: float

    @property
    def ranks(self) -> tuple:
        """(r_1, r_2, r_3, r_4, r_12, r_34)."""
        return tuple(u.shape[1] for u in self.leaf_factors) + self.root_matrix.shape

    @property
    def shape(self) -> tuple:
        return tuple(u.shape[0] for u in self.leaf_factors)


Format = Union[TuckerFormat, TTFormat, HTuckerFormat]


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def _project(t: np.ndarray, factors) -> np.ndarray:
    """t ×_1 U_1^H ×_2 U_2^H ... ; for 4D the spatial modes are applied slice by slice."""
    if t.ndim == 4:
        *spatial, last = factors
        r = [u.shape[1] for u in spatial]
        cols = np.empty((r[0] * r[1] * r[2], t.shape[3]), dtype=np.complex128, order=ORDER)
        for p in range(t.shape[3]):
            c = t[..., p]
            for i, u in enumerate(spatial):
                c = mode_product(c, u.conj().T, i)
            cols[:, p] = c.ravel(order=ORDER)
        return (cols @ last.conj()).reshape(r + [last.shape[1]], order=ORDER)
    core = t
    for i, u in enumerate(factors):
        core = mode_product(core, u.conj().T, i)
    return core


def tucker_decompose(t, gamma: float) -> TuckerFormat:
    """Truncated HOSVD: per-mode SVD of the unfoldings at ``gamma / sqrt(d)``."""
    _check_gamma(gamma)
    t = as_tensor(t)
    if t.ndim not in (3, 4):
        raise ShapeError(f"Tucker compression expects 3 or 4 modes, got {t.ndim}")
    tau = gamma / math.sqrt(t.ndim)
    factors = tuple(mode_subspace(t, i, tau).U for i in range(t.ndim))
    return TuckerFormat(_project(t, factors), factors, gamma)


def tt_decompose(t, gamma: float) -> TTFormat:
    """Left-to-right TT-SVD with per-step threshold ``gamma / sqrt(d - 1)``."""
    _check_gamma(gamma)
    t = as_tensor(t)
    if t.ndim not in (3, 4):
        raise ShapeError(f"TT compression expects 3 or 4 modes, got {t.ndim}")
    tau = gamma / math.sqrt(t.ndim - 1)
    shape = t.shape
    d = t.ndim

    rest = t.reshape(shape[0], -1, order=ORDER)
    head = leading_subspace(rest, tau).U
    rest = _left_project(head, rest)
    r_prev = head.shape[1]
    cores = []
    for i in range(1, d - 1):
        mat = rest.reshape(r_prev * shape[i], -1, order=ORDER)
        u = leading_subspace(mat, tau).U
        cores.append(u.reshape(r_prev, shape[i], u.shape[1], order=ORDER))
        rest = _left_project(u, mat)
        r_prev = u.shape[1]
    return TTFormat(head, tuple(cores), np.ascontiguousarray(rest.T), gamma)


def _left_project(u: np.ndarray, mat: np.ndarray, width: int = 1 << 14) -> np.ndarray:
    """``u^H @ mat`` stored column-major, built in column chunks to bound temporaries."""
    uh = u.conj().T
    out = np.empty((u.shape[1], mat.shape[1]), dtype=np.complex128, order=ORDER)
    for j in range(0, mat.shape[1], width):
        out[:, j:j + width] = uh @ mat[:, j:j + width]
    return out


def htucker_decompose(t, gamma: float) -> HTuckerFormat:
    """Leaf-to-root hierarchical SVD for 4D tensors.

    Leaves come from the Tucker step; both transfer tensors are truncated
    independently at ``gamma / sqrt(6)`` from the (12)|(34) and (34)|(12)
    matricizations of the projected core.
    """
    _check_gamma(gamma)
    t = as_tensor(t)
    if t.ndim != 4:
        raise ShapeError(f"hierarchical Tucker expects 4 modes, got {t.ndim}")
    return htucker_from_tucker(tucker_decompose(t, gamma))


def htucker_from_tucker(tucker: TuckerFormat) -> HTuckerFormat:
    """Transfer-tensor stage on top of an existing 4-mode Tucker format."""
    if len(tucker.factors) != 4:
        raise ShapeError("hierarchical Tucker needs a 4-mode Tucker format")
    gamma = tucker.gamma
    w = tucker.core
    r1, r2, r3, r4 = w.shape
    tau = gamma / math.sqrt(6)

    w12 = w.reshape(r1 * r2, r3 * r4, order=ORDER)
    u12 = leading_subspace(w12, tau).U
    w34 = np.transpose(w, (2, 3, 0, 1)).reshape(r3 * r4, r1 * r2, order=ORDER)
    u34 = leading_subspace(w34, tau).U
    root = u12.conj().T @ w12 @ u34.conj()
    return HTuckerFormat(
        tucker.factors,
        u12.reshape(r1, r2, u12.shape[1], order=ORDER),
        u34.reshape(r3, r4, u34.shape[1], order=ORDER),
        root,
        gamma,
    )


# -- dense reconstruction (reference path, materializes the full tensor) -----

def reconstruct(f: Format) -> np.ndarray:
    if isinstance(f, TuckerFormat):
        out = f.core
        for i, u in enumerate(f.factors):
            out = mode_product(out, u, i)
        return out
    if isinstance(f, TTFormat):
        r1 = f.head_factor.shape[1]
        out = f.head_factor.reshape(-1, r1, order=ORDER)
        for core in f.cores:
            ra, n, rb = core.shape
            out = out @ core.reshape(ra, n * rb, order=ORDER)
            out = out.reshape(-1, rb, order=ORDER)
        out = out @ f.tail_factor.T
        return out.reshape(f.shape, order=ORDER)
    if isinstance(f, HTuckerFormat):
        inner = mode_product(f.transfer_34, f.root_matrix, 2)
        w = contract_mode3(f.transfer_12, inner)
        for i, u in enumerate(f.leaf_factors):
            w = mode_product(w, u, i)
        return w
    raise TypeError(f"unknown format {type(f).__name__}")


# -- memory accounting -------------------------------------------------------

def format_arrays(f: Format) -> list:
    if isinstance(f, TuckerFormat):
        return [f.core, *f.factors]
    if isinstance(f, TTFormat):
        return [f.head_factor, *f.cores, f.tail_factor]
    if isinstance(f, HTuckerFormat):
        return [*f.leaf_factors, f.transfer_12, f.transfer_34, f.root_matrix]
    raise TypeError(f"unknown format {type(f).__name__}")


def compressed_memory(f: Format) -> int:
    """Stored bytes of a format at 16 bytes per complex value."""
    return BYTES_PER_VALUE * sum(a.size for a in format_arrays(f))


# -- serialization -----------------------------------------------------------

def write_format(fh: BinaryIO, f: Format) -> None:
    """Tag byte, gamma, array count, then each constituent as a tensor dump."""
    if isinstance(f, TuckerFormat):
        tag = TAG_TUCKER
    elif isinstance(f, TTFormat):
        tag = TAG_TT
    elif isinstance(f, HTuckerFormat):
        tag = TAG_HTUCKER
    else:
        raise TypeError(f"unknown format {type(f).__name__}")
    arrays = format_arrays(f)
    fh.write(struct.pack("<BdI", tag, f.gamma, len(arrays)))
    for a in arrays:
        write_tensor(fh, a)


def read_format(fh: BinaryIO) -> Format:
    head = fh.read(13)
    if len(head) < 13:
        raise ValueError("truncated format header")
    tag, gamma, count = struct.unpack("<BdI", head)
    arrays = [read_tensor(fh) for _ in range(count)]
    if tag == TAG_TUCKER:
        return TuckerFormat(arrays[0], tuple(arrays[1:]), gamma)
    if tag == TAG_TT:
        return TTFormat(arrays[0], tuple(arrays[1:-1]), arrays[-1], gamma)
    if tag == TAG_HTUCKER:
        if count != 7:
            raise ValueError(f"hierarchical Tucker record needs 7 arrays, got {count}")
        return HTuckerFormat(tuple(arrays[:4]), arrays[4], arrays[5], arrays[6], gamma)
    raise ValueError(f"unknown format tag 0x{tag:02x}")


def save_formats(path, formats) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(formats)))
        for f in formats:
            write_format(fh, f)


def load_formats(path) -> list:
    with open(path, "rb") as fh:
        (count,) = struct.unpack("<I", fh.read(4))
        return [read_format(fh) for _ in range(count)]
