"""Dense complex tensor kernels: unfolding, mode products, contraction, truncated SVD.

Tensors are plain ``complex128`` numpy arrays.  Every reshape in the package
uses column-major ("F") linearization, so the first index varies fastest; all
unfoldings, folds, restorations and the binary dump format rely on it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Optional, Sequence

import numpy as np

ORDER = "F"
BYTES_PER_VALUE = 16

# Matrices above this many elements get their leading subspace from a
# blockwise Gram accumulation instead of a dense SVD (see leading_subspace).
SVD_ELEMENT_BUDGET = 1 << 24

# Below the budget, matrices at least this many times wider than tall take the
# R-factor route, which skips the large right factor of a dense SVD.
WIDE_RATIO = 4

MAGIC = b"TTOP"
FORMAT_VERSION = 1


class ShapeError(ValueError):
    """Raised when tensor extents do not line up for an operation."""


def as_tensor(x, ndim: Optional[int] = None) -> np.ndarray:
    """Return ``x`` as a complex128 array, checking its dimensionality."""
    t = np.asarray(x, dtype=np.complex128)
    if t.ndim < 1 or t.ndim > 4:
        raise ShapeError(f"tensors must have 1 to 4 modes, got {t.ndim}")
    if ndim is not None and t.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-mode tensor, got shape {t.shape}")
    return t


def from_linear(data, shape: Sequence[int]) -> np.ndarray:
    """Build a tensor from values listed in global linear order."""
    data = np.asarray(data, dtype=np.complex128).ravel()
    if data.size != int(np.prod(shape)):
        raise ShapeError(f"{data.size} values do not fill shape {tuple(shape)}")
    return data.reshape(tuple(shape), order=ORDER)


def linearize(t: np.ndarray) -> np.ndarray:
    return np.ravel(t, order=ORDER)


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise ShapeError(f"mode {mode} out of range for a {t.ndim}-mode tensor")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding (0-based mode).

    Rows are indexed by the chosen mode; columns enumerate the remaining modes
    in increasing order with the lowest one varying fastest.
    """
    t = np.asarray(t)
    _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1, order=ORDER)


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ShapeError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1:]
    if m.shape != (shape[mode], int(np.prod(rest))):
        raise ShapeError(f"matrix {m.shape} cannot fold into {shape} along mode {mode}")
    return np.moveaxis(m.reshape((shape[mode],) + rest, order=ORDER), 0, mode)


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """``t ×_mode m``: replaces extent ``n_mode`` by the row count of ``m``."""
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ShapeError(
            f"matrix {m.shape} does not match extent {t.shape[mode]} of mode {mode}")
    shape = list(t.shape)
    shape[mode] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, shape)


def contract_mode3(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Z[a, b, c, d] = sum_i X[a, b, i] Y[c, d, i]."""
    x = as_tensor(x, 3)
    y = as_tensor(y, 3)
    if x.shape[2] != y.shape[2]:
        raise ShapeError(f"contracted extents differ: {x.shape[2]} vs {y.shape[2]}")
    r1, r2, rc = x.shape
    r3, r4, _ = y.shape
    xm = x.reshape(r1 * r2, rc, order=ORDER)
    ym = y.reshape(r3 * r4, rc, order=ORDER)
    return (xm @ ym.T).reshape(r1, r2, r3, r4, order=ORDER)


@dataclass(frozen=True)
class TruncatedSVDResult:
    """Leading singular triplets of a matrix.

    ``V`` is ``None`` when only the left subspace was computed.  ``degenerate``
    marks an all-zero input, for which a rank-1 zero factorization is returned.
    """

    U: np.ndarray
    singular_values: np.ndarray
    V: Optional[np.ndarray]
    rank: int
    degenerate: bool = False


def _retained_rank(s: np.ndarray, tau: float) -> int:
    if s.size == 0 or s[0] <= 0.0:
        return 1
    return max(1, int(np.count_nonzero(s / s[0] >= tau)))


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"relative threshold must lie in (0, 1), got {tau}")


def truncated_svd(m: np.ndarray, tau: float) -> TruncatedSVDResult:
    """Dense SVD keeping every singular value with ``s_j / s_1 >= tau``."""
    _check_tau(tau)
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {m.shape}")
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    degenerate = s.size == 0 or s[0] == 0.0
    r = _retained_rank(s, tau)
    if degenerate:
        s = np.zeros(1)
    return TruncatedSVDResult(u[:, :r], s[:r].copy(), vh[:r].conj().T, r, degenerate)


def gram_left_svd(blocks: Iterable[np.ndarray], nrows: int, tau: float) -> TruncatedSVDResult:
    """Left singular vectors and values of ``[B_1 B_2 ...]`` from its Gram matrix.

    Only ``nrows x nrows`` memory is needed beyond one block at a time.
    Singular values are accurate down to roughly ``sqrt(eps) * s_1``, well
    below the thresholds used by the decompositions.
    """
    _check_tau(tau)
    g = np.zeros((nrows, nrows), dtype=np.complex128)
    for b in blocks:
        if b.shape[0] != nrows:
            raise ShapeError(f"block has {b.shape[0]} rows, expected {nrows}")
        g += b @ b.conj().T
    w, v = np.linalg.eigh(g)
    w = w[::-1]
    v = v[:, ::-1]
    s = np.sqrt(np.clip(w, 0.0, None))
    degenerate = s[0] == 0.0
    r = _retained_rank(s, tau)
    if degenerate:
        s = np.zeros(1)
    return TruncatedSVDResult(v[:, :r].copy(), s[:r].copy(), None, r, degenerate)


def column_blocks(m: np.ndarray, width: int) -> Iterator[np.ndarray]:
    for j in range(0, m.shape[1], width):
        yield m[:, j:j + width]


def unfolding_blocks(t: np.ndarray, mode: int, max_elements: int = 1 << 21) -> Iterator[np.ndarray]:
    """Contiguous column blocks of ``unfold(t, mode)`` without forming it.

    For a mode other than the last, each slice along the last mode is one
    block; for the last mode the column range is split into chunks.
    """
    _check_mode(t, mode)
    d = t.ndim
    if mode == d - 1:
        mat = t.reshape(-1, t.shape[-1], order=ORDER)
        width = max(1, max_elements // t.shape[-1])
        for j in range(0, mat.shape[0], width):
            yield mat[j:j + width].T
    else:
        for p in range(t.shape[-1]):
            yield unfold(t[..., p], mode)


def wide_left_svd(m: np.ndarray, tau: float) -> TruncatedSVDResult:
    """Left factor of a wide matrix from the R factor of ``m^H = QR``.

    ``m = R^H Q^H`` shares its left singular vectors and values with the small
    square ``R^H``, so only an ``m x m`` SVD is needed and Q is never formed.
    Accuracy matches a dense SVD of ``m``.
    """
    _check_tau(tau)
    if m.shape[0] > m.shape[1]:
        raise ShapeError(f"expected a wide matrix, got shape {m.shape}")
    r = np.linalg.qr(m.conj().T, mode="r")
    res = truncated_svd(r.conj().T, tau)
    return TruncatedSVDResult(res.U, res.singular_values, None, res.rank, res.degenerate)


def leading_subspace(m: np.ndarray, tau: float) -> TruncatedSVDResult:
    """Truncated left factor of a matrix; R-factor, dense or Gram path by shape and size."""
    if m.size <= SVD_ELEMENT_BUDGET:
        if m.shape[1] >= WIDE_RATIO * m.shape[0]:
            return wide_left_svd(m, tau)
        return truncated_svd(m, tau)
    if m.shape[0] > m.shape[1]:
        return _tall_left_svd(m, tau)
    width = max(1, SVD_ELEMENT_BUDGET // (8 * m.shape[0]))
    return gram_left_svd(column_blocks(m, width), m.shape[0], tau)


def _tall_left_svd(m: np.ndarray, tau: float) -> TruncatedSVDResult:
    # Column-side Gram, then an orthonormal basis of m @ V_r.
    height = max(1, SVD_ELEMENT_BUDGET // (8 * m.shape[1]))
    blocks = (m[i:i + height].conj().T for i in range(0, m.shape[0], height))
    right = gram_left_svd(blocks, m.shape[1], tau)
    if right.degenerate:
        u = np.zeros((m.shape[0], 1), dtype=np.complex128)
        u[0, 0] = 1.0
        return TruncatedSVDResult(u, right.singular_values, None, 1, True)
    q, _ = np.linalg.qr(m @ right.U)
    return TruncatedSVDResult(q, right.singular_values, None, right.rank, False)


def mode_subspace(t: np.ndarray, mode: int, tau: float) -> TruncatedSVDResult:
    """Truncated left factor of ``unfold(t, mode)``."""
    if t.size <= SVD_ELEMENT_BUDGET:
        return leading_subspace(unfold(t, mode), tau)
    return gram_left_svd(unfolding_blocks(t, mode), t.shape[mode], tau)


def frobenius_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_F / ||a||_F``; falls back to ``||b||_F`` when ``a`` is zero."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a.ravel())
    if na == 0.0:
        return float(np.linalg.norm(b.ravel()))
    return float(np.linalg.norm((a - b).ravel()) / na)


# -- binary dump -------------------------------------------------------------

def write_tensor(fh: BinaryIO, t: np.ndarray) -> None:
    """Write one tensor: magic, version, d, extents, then (re, im) doubles."""
    t = np.asarray(t, dtype=np.complex128)
    fh.write(MAGIC)
    fh.write(struct.pack("<II", FORMAT_VERSION, t.ndim))
    fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
    fh.write(np.ravel(t, order=ORDER).astype("<c16", copy=False).tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray:
    head = fh.read(12)
    if len(head) < 12 or head[:4] != MAGIC:
        raise ValueError("not a tensor dump (bad magic)")
    version, d = struct.unpack("<II", head[4:])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    shape = struct.unpack(f"<{d}Q", fh.read(8 * d))
    count = int(np.prod(shape))
    raw = fh.read(count * BYTES_PER_VALUE)
    if len(raw) != count * BYTES_PER_VALUE:
        raise ValueError("truncated tensor dump")
    return np.frombuffer(raw, dtype="<c16").astype(np.complex128).reshape(shape, order=ORDER)


def save_tensor(path, t: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, t)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
