"""HOG person descriptor, Pegasos linear SVM and sliding-window detection.

The descriptor uses a 64x128 window, 8x8 cells and 9 unsigned orientation
bins. Each cell histogram is L2-normalised on its own (no 2x2 blocks), so a
window yields 8 * 16 * 9 = 1152 values.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .detections import Detection, nms
from .errors import BadWindowSize, DegenerateInput, ImageTooSmall, ModelFormatError
from .imgcore import GrayImage, Rect, resize

__all__ = [
    "WINDOW_W",
    "WINDOW_H",
    "CELL",
    "N_BINS",
    "DESCRIPTOR_LEN",
    "GradientField",
    "gradients",
    "cell_histograms",
    "normalize_cells",
    "descriptor",
    "HogTransformer",
    "LinearSVM",
    "svm_train",
    "svm_objective",
    "detect",
    "nms",
    "Detection",
    "save_svm",
    "load_svm",
]

WINDOW_W, WINDOW_H = 64, 128
CELL = 8
N_BINS = 9
BIN_WIDTH = 180.0 / N_BINS
CELLS_X, CELLS_Y = WINDOW_W // CELL, WINDOW_H // CELL
DESCRIPTOR_LEN = CELLS_X * CELLS_Y * N_BINS
NORM_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class GradientField:
    magnitude: np.ndarray
    orientation: np.ndarray  # degrees in [0, 180)

    @property
    def shape(self):
        return self.magnitude.shape


def gradients(img: GrayImage | np.ndarray) -> GradientField:
    """Central differences (-1, 0, +1) with replicated borders, unsigned angles."""
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    if px.shape[0] < 3 or px.shape[1] < 3:
        raise ImageTooSmall(f"gradients need at least 3x3, got {px.shape[1]}x{px.shape[0]}")
    p = np.pad(px.astype(np.float64), 1, mode="edge")
    dx = p[1:-1, 2:] - p[1:-1, :-2]
    dy = p[2:, 1:-1] - p[:-2, 1:-1]
    mag = np.hypot(dx, dy)
    ori = np.degrees(np.arctan2(dy, dx)) % 180.0
    ori[ori >= 180.0] = 0.0
    ori[mag == 0] = 0.0
    return GradientField(mag, ori)


def _vote(mag: np.ndarray, ori: np.ndarray) -> np.ndarray:
    """Cell histograms for a field whose sides are multiples of the cell size."""
    h, w = mag.shape
    ncy, ncx = h // CELL, w // CELL
    pos = ori / BIN_WIDTH - 0.5
    lo = np.floor(pos).astype(np.intp)
    frac = pos - lo
    b0 = lo % N_BINS
    b1 = (lo + 1) % N_BINS
    cy = (np.arange(h) // CELL)[:, None]
    cx = (np.arange(w) // CELL)[None, :]
    base = (cy * ncx + cx) * N_BINS
    size = ncy * ncx * N_BINS
    hist = np.bincount((base + b0).ravel(), (mag * (1.0 - frac)).ravel(), minlength=size)
    hist += np.bincount((base + b1).ravel(), (mag * frac).ravel(), minlength=size)
    return hist.reshape(ncy, ncx, N_BINS)


def cell_histograms(field: GradientField) -> np.ndarray:
    """``(16, 8, 9)`` grid; each pixel splits its magnitude between the two
    nearest bin centres (10, 30, ..., 170 degrees, wrapping at 180)."""
    if field.shape != (WINDOW_H, WINDOW_W):
        raise BadWindowSize(f"expected a {WINDOW_W}x{WINDOW_H} field, got {field.shape[1]}x{field.shape[0]}")
    return _vote(field.magnitude, field.orientation)


def normalize_cells(grid: np.ndarray) -> np.ndarray:
    """``h / sqrt(|h|^2 + eps^2)`` per 9-bin cell vector."""
    grid = np.asarray(grid, dtype=np.float64)
    norm = np.sqrt((grid * grid).sum(axis=-1, keepdims=True) + NORM_EPS ** 2)
    return grid / norm


def descriptor(img: GrayImage | np.ndarray) -> np.ndarray:
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    if px.shape != (WINDOW_H, WINDOW_W):
        raise BadWindowSize(f"descriptor needs {WINDOW_W}x{WINDOW_H}, got {px.shape[1]}x{px.shape[0]}")
    return normalize_cells(cell_histograms(gradients(px))).reshape(-1)


class HogTransformer(BaseEstimator, TransformerMixin):
    """Maps a stack of 64x128 windows ``(n, 128, 64)`` to ``(n, 1152)`` descriptors."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X)
        if X.ndim == 2:
            X = X[None]
        return np.stack([descriptor(x) for x in X]) if len(X) else np.zeros((0, DESCRIPTOR_LEN))


# ---------------------------------------------------------------- SVM

def svm_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    margins = y * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.maximum(0.0, 1.0 - margins).mean())


def svm_train(X, y, lam: float = 1e-4, epochs: int = 100, seed: int = 0):
    """Pegasos stochastic subgradient descent with step ``1 / (lam * t)``.

    The bias is unregularised and moves with step ``1 / t``: at the weight
    step it would swing by ``1 / lam`` on the first updates and never settle.
    Returns ``(w, b)`` averaged over the iterates of the last epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be -1 or +1")
    if np.all(y == y[0]):
        raise DegenerateInput("both labels must be present")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    w_avg = np.zeros(d)
    b_avg = 0.0
    t = 0
    for epoch in range(epochs):
        last = epoch == epochs - 1
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            xi, yi = X[i], y[i]
            violated = yi * (xi @ w + b) < 1.0
            w *= 1.0 - eta * lam
            if violated:
                w += (eta * yi) * xi
                b += yi / t
            if last:
                w_avg += w
                b_avg += b
    return w_avg / n, b_avg / n


class LinearSVM(BaseEstimator, ClassifierMixin):
    """Linear hinge-loss SVM trained with Pegasos; labels in {-1, +1}."""

    def __init__(self, lam=1e-4, epochs=100, seed=0):
        self.lam = lam
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.coef_, self.intercept_ = svm_train(X, y, self.lam, self.epochs, self.seed)
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def objective(self, X, y) -> float:
        check_is_fitted(self, "coef_")
        return svm_objective(self.coef_, self.intercept_, np.asarray(X, float), np.asarray(y, float),
                             self.lam)


def save_svm(svm: LinearSVM, path) -> None:
    check_is_fitted(svm, "coef_")
    text = "SVM1\n{!r}\n{!r}\n{}\n".format(
        float(svm.lam), float(svm.intercept_), " ".join(repr(float(v)) for v in svm.coef_))
    Path(path).write_text(text)


def load_svm(path) -> LinearSVM:
    lines = Path(path).read_text().split("\n")
    if not lines or lines[0].strip() != "SVM1":
        raise ModelFormatError(f"{path}: not an SVM1 file")
    try:
        lam = float(lines[1])
        bias = float(lines[2])
        weights = np.array([float(v) for v in lines[3].split()])
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed SVM model ({exc})") from exc
    if weights.size != DESCRIPTOR_LEN:
        raise ModelFormatError(f"{path}: expected {DESCRIPTOR_LEN} weights, got {weights.size}")
    svm = LinearSVM(lam=lam)
    svm.coef_, svm.intercept_ = weights, bias
    svm.classes_ = np.array([-1, 1])
    svm.n_features_in_ = DESCRIPTOR_LEN
    return svm


# ------------------------------------------------------------ detection

def _level_scores(level: np.ndarray, weights: np.ndarray, bias: float, stride: int):
    """Window scores on one pyramid level as ``[(score, x, y), ...]``.

    Windows share cell histograms, so each residue of the origin modulo the
    cell size is histogrammed once. Gradients at window borders use the real
    neighbouring pixels rather than replicated ones.
    """
    field = gradients(level)
    h, w = level.shape
    ys = np.arange(0, h - WINDOW_H + 1, stride)
    xs = np.arange(0, w - WINDOW_W + 1, stride)
    out = []
    kernel = weights.reshape(CELLS_Y, CELLS_X, N_BINS)
    for oy in sorted(set((ys % CELL).tolist())):
        for ox in sorted(set((xs % CELL).tolist())):
            ncy, ncx = (h - oy) // CELL, (w - ox) // CELL
            crop = (slice(oy, oy + ncy * CELL), slice(ox, ox + ncx * CELL))
            cells = normalize_cells(_vote(field.magnitude[crop], field.orientation[crop]))
            views = sliding_window_view(cells, (CELLS_Y, CELLS_X, N_BINS))[:, :, 0]
            scores = np.tensordot(views, kernel, axes=([2, 3, 4], [0, 1, 2])) + bias
            wy = ys[ys % CELL == oy]
            wx = xs[xs % CELL == ox]
            sub = scores[np.ix_((wy - oy) // CELL, (wx - ox) // CELL)]
            for iy, y0 in enumerate(wy.tolist()):
                for ix, x0 in enumerate(wx.tolist()):
                    out.append((float(sub[iy, ix]), x0, y0))
    return out


def detect(img: GrayImage, svm: LinearSVM, scale_step: float = 1.2, stride: int = 8,
           min_score: float = 0.0, iou_thresh: float = 0.45) -> list[Detection]:
    """Multi-scale sliding-window person detection, sorted by descending score."""
    if img.width < WINDOW_W or img.height < WINDOW_H:
        raise ImageTooSmall(f"frame {img.width}x{img.height} smaller than {WINDOW_W}x{WINDOW_H}")
    if scale_step <= 1.0:
        raise ValueError("scale_step must be > 1")
    check_is_fitted(svm, "coef_")
    hits = []
    k = 0
    while True:
        scale = scale_step ** k
        lw, lh = int(round(img.width / scale)), int(round(img.height / scale))
        if lw < WINDOW_W or lh < WINDOW_H:
            break
        level = resize(img, lw, lh).pixels if k else img.pixels
        sx, sy = img.width / lw, img.height / lh
        for score, x0, y0 in _level_scores(level, svm.coef_, float(svm.intercept_), stride):
            if score <= min_score:
                continue
            x, y = int(round(x0 * sx)), int(round(y0 * sy))
            w = min(int(round(WINDOW_W * sx)), img.width - x)
            h = min(int(round(WINDOW_H * sy)), img.height - y)
            hits.append((k, y0, x0, Detection(Rect(x, y, w, h), score)))
        k += 1
    hits.sort(key=lambda t: t[:3])
    return nms([t[3] for t in hits], iou_thresh)
