"""Per-direction restoration of 3D slices from compressed formats.

Every step is a dense matrix multiply over a reshaped view.  Arrays are kept
column-major so that the reshapes between steps are free; a product whose
result must be column-major is evaluated as ``(B^T A^T)^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decompositions import HTuckerFormat, TTFormat, TuckerFormat
from .tensor_core import ORDER, ShapeError


def _fmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` returned as a column-major array."""
    return (b.T @ a.T).T


@dataclass
class RestorationWorkspace:
    """Per-worker cache and allocation accounting for slice restorations.

    ``head`` and ``tail_columns`` hold the TT-4D auxiliary matrices
    (n_1 n_2 x r_2 and r_2 n_3 x n_4); they are rebuilt whenever a different
    format object is restored through the workspace.
    """

    head: Optional[np.ndarray] = None
    tail_columns: Optional[np.ndarray] = None
    peak_elements: int = 0
    _owner: Optional[object] = field(default=None, repr=False)

    def note(self, *arrays: np.ndarray) -> None:
        for a in arrays:
            if a.size > self.peak_elements:
                self.peak_elements = a.size

    def bind(self, f: TTFormat) -> None:
        if self._owner is f:
            return
        self.head = tt_head_matrix(f)
        core = f.cores[-1]
        r2, n3, r3 = core.shape
        self.tail_columns = _fmul(core.reshape(r2 * n3, r3, order=ORDER), f.tail_factor.T)
        self._owner = f

    def invalidate(self) -> None:
        self.head = None
        self.tail_columns = None
        self._owner = None


def _check_p(p: int, n: int) -> None:
    if not 0 <= p < n:
        raise IndexError(f"direction index {p} out of range [0, {n})")


def restore_tucker3d(f: TuckerFormat, ws: Optional[RestorationWorkspace] = None) -> np.ndarray:
    """C ×_1 U1 ×_2 U2 ×_3 U3 as three reshape + multiply steps."""
    if len(f.factors) != 3 or f.core.ndim != 3:
        raise ShapeError("restore_tucker3d needs a 3-mode Tucker format")
    return _tucker3d_chain(f.core, f.factors, ws)


def _tucker3d_chain(core: np.ndarray, factors, ws: Optional[RestorationWorkspace]) -> np.ndarray:
    u1, u2, u3 = factors
    r1, r2, r3 = core.shape
    if (u1.shape[1], u2.shape[1], u3.shape[1]) != (r1, r2, r3):
        raise ShapeError(f"core {core.shape} does not match factor ranks")
    n1, n2, n3 = u1.shape[0], u2.shape[0], u3.shape[0]
    core = np.asfortranarray(core)
    # step 1: (n1 x r1)(r1 x r2 r3)
    t1 = _fmul(u1, core.reshape(r1, r2 * r3, order=ORDER))
    # step 2: for each k3, (n1 x r2)(r2 x n2); batched over the slowest mode
    t2 = np.matmul(u2, t1.reshape(n1, r2, r3, order=ORDER).T).T
    # step 3: (n1 n2 x r3)(r3 x n3)
    t3 = _fmul(t2.reshape(n1 * n2, r3, order=ORDER), u3.T)
    if ws is not None:
        ws.note(t1, t2, t3)
    return t3.reshape(n1, n2, n3, order=ORDER)


def restore_tucker4d_slice(f: TuckerFormat, p: int,
                           ws: Optional[RestorationWorkspace] = None) -> np.ndarray:
    """Slice ``p`` (0-based) of a 4-mode Tucker format."""
    if len(f.factors) != 4:
        raise ShapeError("restore_tucker4d_slice needs a 4-mode Tucker format")
    u4 = f.factors[3]
    _check_p(p, u4.shape[0])
    r1, r2, r3, r4 = f.core.shape
    cmat = np.asfortranarray(f.core).reshape(r1 * r2 * r3, r4, order=ORDER)
    core3 = (cmat @ u4[p]).reshape(r1, r2, r3, order=ORDER)
    if ws is not None:
        ws.note(core3)
    return _tucker3d_chain(core3, f.factors[:3], ws)


def restore_htucker_slice(f: HTuckerFormat, p: int,
                          ws: Optional[RestorationWorkspace] = None) -> np.ndarray:
    """Slice ``p`` (0-based) via transfer_34 -> root -> transfer_12 -> Tucker-3D chain."""
    u4 = f.leaf_factors[3]
    _check_p(p, u4.shape[0])
    r3, r4, r34 = f.transfer_34.shape
    r1, r2, r12 = f.transfer_12.shape
    if f.root_matrix.shape != (r12, r34):
        raise ShapeError("root matrix does not match transfer tensor ranks")
    c34 = np.asfortranarray(f.transfer_34)
    # M[c, j] = sum_d C34[c, d, j] U4[p, d]   -> r3 x r34
    m = np.matmul(u4[p], c34.T.reshape(r34, r4, r3)).T
    n = f.root_matrix @ m.T                                   # r12 x r3
    c12 = np.asfortranarray(f.transfer_12).reshape(r1 * r2, r12, order=ORDER)
    core3 = _fmul(c12, n).reshape(r1, r2, r3, order=ORDER)
    if ws is not None:
        ws.note(m, n, core3)
    return _tucker3d_chain(core3, f.leaf_factors[:3], ws)


def tt_head_matrix(f: TTFormat) -> np.ndarray:
    """U1 (n1 x r1) times the first core reshaped to r1 x n2 r2, viewed as n1 n2 x r2."""
    c1 = np.asfortranarray(f.cores[0])
    r1, n2, r2 = c1.shape
    n1 = f.head_factor.shape[0]
    t1 = _fmul(f.head_factor, c1.reshape(r1, n2 * r2, order=ORDER))
    return t1.reshape(n1 * n2, r2, order=ORDER)


def restore_tt3d(f: TTFormat, ws: Optional[RestorationWorkspace] = None) -> np.ndarray:
    if len(f.cores) != 1:
        raise ShapeError("restore_tt3d needs a 3-mode TT format")
    n1, n2, n3 = f.shape
    head = tt_head_matrix(f)
    if head.shape[1] != f.tail_factor.shape[1]:
        raise ShapeError("TT core rank does not match tail factor")
    out = _fmul(head, f.tail_factor.T)
    if ws is not None:
        ws.note(head, out)
    return out.reshape(n1, n2, n3, order=ORDER)


def restore_tt4d_slice(f: TTFormat, p: int, ws: Optional[RestorationWorkspace] = None) -> np.ndarray:
    """Slice ``p`` (0-based) of a 4-mode TT format using the cached auxiliary matrices."""
    if len(f.cores) != 2:
        raise ShapeError("restore_tt4d_slice needs a 4-mode TT format")
    n1, n2, n3, n4 = f.shape
    _check_p(p, n4)
    if ws is None:
        ws = RestorationWorkspace()
    ws.bind(f)
    r2 = f.cores[1].shape[0]
    col = ws.tail_columns[:, p].reshape(r2, n3, order=ORDER)
    out = _fmul(ws.head, col)
    ws.note(col, out)
    return out.reshape(n1, n2, n3, order=ORDER)


def restore_slice(f, p: Optional[int] = None, ws: Optional[RestorationWorkspace] = None) -> np.ndarray:
    """Dispatch on format type and dimensionality."""
    if isinstance(f, TuckerFormat):
        return restore_tucker3d(f, ws) if len(f.factors) == 3 else restore_tucker4d_slice(f, p, ws)
    if isinstance(f, TTFormat):
        return restore_tt3d(f, ws) if len(f.cores) == 1 else restore_tt4d_slice(f, p, ws)
    if isinstance(f, HTuckerFormat):
        return restore_htucker_slice(f, p, ws)
    raise TypeError(f"unknown format {type(f).__name__}")
