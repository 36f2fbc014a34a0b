"""Dense symmetric eigensolvers and PCA used by the Fisherfaces model.

Matrices are plain 2-D float64 numpy arrays.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    CholeskyFailure,
    DimMismatch,
    ModelFormatError,
    NoConvergence,
    NotSymmetric,
    RankDeficient,
)

__all__ = ["SymEig", "sym_eig", "gen_eig", "gram_pca", "write_mat", "read_mat",
           "format_mat", "parse_mat"]

MAX_SWEEPS = 100


@dataclass(frozen=True)
class SymEig:
    values: np.ndarray   # descending
    vectors: np.ndarray  # columns match ``values``
    reg: float = 0.0     # ridge added to the metric matrix (gen_eig only)


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so their first non-negligible entry is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        scale = np.abs(col).max()
        if scale == 0:
            continue
        first = np.flatnonzero(np.abs(col) > 1e-10 * scale)[0]
        if col[first] < 0:
            out[:, j] = -col
    return out


def _check_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimMismatch(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def sym_eig(a, max_sweeps: int = MAX_SWEEPS) -> SymEig:
    """Eigen-decompose a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the largest off-diagonal magnitude drops below
    ``1e-12 * ||a||_F``. Eigenpairs are returned in descending order with
    the sign convention of ``_canonical_signs``.
    """
    a = _check_square(a)
    n = a.shape[0]
    norm = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > 1e-9 * norm:
        raise NotSymmetric("matrix is not symmetric within 1e-9 relative")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    tol = 1e-12 * norm
    off_mask = ~np.eye(n, dtype=bool)

    for _ in range(max_sweeps + 1):
        if n < 2 or np.abs(a[off_mask]).max() < tol or norm == 0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return SymEig(values[order], _canonical_signs(v[:, order]))


def gen_eig(s_b, s_w) -> SymEig:
    """Solve ``s_b v = lambda (s_w + reg I) v`` for symmetric ``s_b``, PSD ``s_w``.

    The ridge ``reg`` is ``1e-6 * trace(s_w) / dim`` (``1e-6`` for a zero
    trace). Returned vectors are scaled to unit Euclidean norm.
    """
    s_b = _check_square(s_b, "s_b")
    s_w = _check_square(s_w, "s_w")
    if s_b.shape != s_w.shape:
        raise DimMismatch(f"s_b {s_b.shape} and s_w {s_w.shape} differ")
    dim = s_w.shape[0]
    if np.linalg.norm(s_w - s_w.T) > 1e-9 * np.linalg.norm(s_w):
        raise NotSymmetric("s_w is not symmetric")
    tr = np.trace(s_w)
    reg = 1e-6 * tr / dim if tr > 0 else 1e-6
    metric = (s_w + s_w.T) / 2.0 + reg * np.eye(dim)
    try:
        chol = np.linalg.cholesky(metric)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure("within-class scatter is not positive definite") from exc
    # L^-1 S_b L^-T
    tmp = solve_triangular(chol, s_b, lower=True)
    reduced = solve_triangular(chol, tmp.T, lower=True).T
    eig = sym_eig((reduced + reduced.T) / 2.0)
    vecs = solve_triangular(chol.T, eig.vectors, lower=False)
    norms = np.linalg.norm(vecs, axis=0)
    norms[norms == 0] = 1.0
    return SymEig(eig.values, _canonical_signs(vecs / norms), float(reg))


def gram_pca(data, k: int) -> np.ndarray:
    """Top-``k`` principal directions of centred columns via the Gram trick.

    ``data`` is ``d x N`` with N small; the ``N x N`` matrix ``data.T @ data``
    is decomposed instead of the ``d x d`` covariance.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DimMismatch(f"data must be 2-D, got shape {data.shape}")
    n = data.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= N={n}")
    eig = sym_eig(data.T @ data)
    floor = 1e-10 * max(1.0, eig.values[0])
    keep = eig.values[:k]
    if keep.size < k or keep[-1] <= floor:
        rank = int(np.sum(eig.values > floor))
        raise RankDeficient(f"only {rank} principal directions above threshold, need {k}")
    basis = data @ eig.vectors[:, :k] / np.sqrt(keep)
    return _canonical_signs(basis)


# ------------------------------------------------------------- text form

def format_mat(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    lines = [f"MAT {m.shape[0]} {m.shape[1]}"]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in m)
    return "\n".join(lines) + "\n"


def parse_mat(lines) -> np.ndarray:
    """Parse a ``MAT`` block from an iterator of lines, consuming exactly it."""
    lines = iter(lines)
    head = next(lines, "").split()
    if len(head) != 3 or head[0] != "MAT":
        raise ModelFormatError(f"expected 'MAT rows cols', got {' '.join(head)!r}")
    rows, cols = int(head[1]), int(head[2])
    out = np.empty((rows, cols))
    for i in range(rows):
        vals = next(lines, "").split()
        if len(vals) != cols:
            raise ModelFormatError(f"row {i}: expected {cols} values, got {len(vals)}")
        out[i] = [float(v) for v in vals]
    return out


def write_mat(fh: io.TextIOBase, m) -> None:
    fh.write(format_mat(m))


def read_mat(fh: io.TextIOBase) -> np.ndarray:
    return parse_mat(line.rstrip("\n") for line in fh)
