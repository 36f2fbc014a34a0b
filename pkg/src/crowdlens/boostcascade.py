"""Haar features, AdaBoost over decision stumps, and cascaded face detection.

Feature values are variance normalised: the weighted rectangle sums are
divided by the window's intensity standard deviation (clamped below at 1)
and by the window area relative to the 24x24 base, so a trained threshold
means the same thing at every detection scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .detections import Detection, nms
from .errors import (
    DegenerateInput,
    ImageTooSmall,
    InsufficientData,
    MissingFeature,
    ModelFormatError,
    RectOutOfBounds,
)
from .imgcore import GrayImage, IntegralImage, Rect, resize

__all__ = [
    "BASE_WINDOW",
    "KINDS",
    "HaarFeature",
    "WeakStump",
    "BoostRound",
    "StrongClassifier",
    "Cascade",
    "AdaBoostStumps",
    "enumerate_features",
    "eval_feature",
    "squared_integral",
    "feature_matrix",
    "best_stump",
    "adaboost_train",
    "classify",
    "train_cascade",
    "detect_faces",
    "save_cascade",
    "load_cascade",
]

BASE_WINDOW = 24
EPS_CLAMP = 1e-10
_TIE_TOL = 1e-12

# kind -> (unit width, unit height, column weights, row weights)
# The weight of a sub-cell is col_w[i] * row_w[j]; every kind sums to zero.
_LAYOUT = {
    "two-rect-horizontal": (2, 1, (1, -1), (1,)),
    "two-rect-vertical": (1, 2, (1,), (1, -1)),
    "three-rect-horizontal": (3, 1, (1, -2, 1), (1,)),
    "three-rect-vertical": (1, 3, (1,), (1, -2, 1)),
    "four-rect": (2, 2, (1, -1), (1, -1)),
}
KINDS = tuple(_LAYOUT)


def _round_half_up(v):
    return np.floor(np.asarray(v, dtype=np.float64) + 0.5).astype(np.intp)


@dataclass(frozen=True)
class HaarFeature:
    """Tiling of a base rect inside the reference window.

    White cells carry positive weight (left / top / outer / main diagonal),
    black cells negative weight; the three-rect middle counts double so a
    flat patch scores zero.
    """

    kind: str
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.kind not in _LAYOUT:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        uw, uh, _, _ = _LAYOUT[self.kind]
        if self.w < uw or self.h < uh or self.w % uw or self.h % uh:
            raise ValueError(f"{self.kind} needs w multiple of {uw}, h multiple of {uh}")
        if self.x < 0 or self.y < 0 or self.x + self.w > BASE_WINDOW or self.y + self.h > BASE_WINDOW:
            raise ValueError(f"feature {self} leaves the {BASE_WINDOW}x{BASE_WINDOW} window")

    def cells(self, scale: float = 1.0) -> list[tuple[int, int, int, int, int]]:
        """Sub-rects ``(x0, y0, x1, y1, weight)`` relative to the window origin.

        Cell boundaries are scaled and rounded individually so the scaled
        cells still tile the scaled base rect.
        """
        _, _, col_w, row_w = _LAYOUT[self.kind]
        nx, ny = len(col_w), len(row_w)
        xs = _round_half_up([(self.x + self.w * i / nx) * scale for i in range(nx + 1)])
        ys = _round_half_up([(self.y + self.h * j / ny) * scale for j in range(ny + 1)])
        out = []
        for j in range(ny):
            for i in range(nx):
                out.append((int(xs[i]), int(ys[j]), int(xs[i + 1]), int(ys[j + 1]),
                            col_w[i] * row_w[j]))
        return out


def enumerate_features(base: int = BASE_WINDOW, step_pos: int = 1, step_size: int = 1,
                       kinds=KINDS) -> list[HaarFeature]:
    """All features of the given kinds, ordered kind-major then y, x, h, w.

    Positions advance by ``step_pos`` pixels and sizes by ``step_size`` unit
    multiples; both subsample the full set.
    """
    if step_pos < 1 or step_size < 1:
        raise ValueError("steps must be >= 1")
    if base > BASE_WINDOW:
        raise ValueError(f"base window larger than {BASE_WINDOW}")
    feats = []
    for kind in kinds:
        uw, uh, _, _ = _LAYOUT[kind]
        for y in range(0, base, step_pos):
            for x in range(0, base, step_pos):
                for h in range(uh, base - y + 1, uh * step_size):
                    for w in range(uw, base - x + 1, uw * step_size):
                        feats.append(HaarFeature(kind, x, y, w, h))
    return feats


def squared_integral(img: GrayImage) -> IntegralImage:
    """Summed-area table of squared luma, same layout as ``integral``."""
    sq = img.pixels.astype(np.uint64) ** 2
    return _integral_of(sq)


def _integral_of(values: np.ndarray) -> IntegralImage:
    table = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.uint64)
    table[1:, 1:] = values.astype(np.uint64).cumsum(0).cumsum(1)
    return IntegralImage(table)


def _window_std(ii_t: np.ndarray, sq_t: np.ndarray, ys, xs, size: int) -> np.ndarray:
    y1, x1 = ys + size, xs + size
    s = ii_t[y1, x1] - ii_t[ys, x1] - ii_t[y1, xs] + ii_t[ys, xs]
    ss = sq_t[y1, x1] - sq_t[ys, x1] - sq_t[y1, xs] + sq_t[ys, xs]
    area = float(size * size)
    mean = s / area
    var = np.maximum(ss / area - mean * mean, 0.0)
    return np.maximum(np.sqrt(var), 1.0)


def _tables(img: GrayImage) -> tuple[np.ndarray, np.ndarray]:
    px = img.pixels.astype(np.float64)
    t = np.zeros((img.height + 1, img.width + 1))
    t[1:, 1:] = px.cumsum(0).cumsum(1)
    sq = np.zeros_like(t)
    sq[1:, 1:] = (px * px).cumsum(0).cumsum(1)
    return t, sq


def _raw_feature(t: np.ndarray, f: HaarFeature, ys, xs, scale: float) -> np.ndarray:
    total = np.zeros(np.shape(ys))
    for x0, y0, x1, y1, wt in f.cells(scale):
        total += wt * (t[ys + y1, xs + x1] - t[ys + y0, xs + x1]
                       - t[ys + y1, xs + x0] + t[ys + y0, xs + x0])
    return total


def eval_feature(ii: IntegralImage, f: HaarFeature, origin: tuple[int, int] = (0, 0),
                 scale: float = 1.0, sq_ii: IntegralImage | None = None) -> float:
    """Normalised value of one feature for the window at ``origin`` (x, y).

    ``sq_ii`` is the integral of squared luma; without it the std is taken as 1.
    """
    size = int(_round_half_up(BASE_WINDOW * scale))
    ox, oy = origin
    if ox < 0 or oy < 0 or ox + size > ii.width or oy + size > ii.height:
        raise RectOutOfBounds(f"window at {origin} size {size} outside {ii.width}x{ii.height}")
    t = ii.table.astype(np.float64)
    ys, xs = np.array([oy]), np.array([ox])
    raw = _raw_feature(t, f, ys, xs, scale)
    std = float(_window_std(t, sq_ii.table.astype(np.float64), ys, xs, size)[0]) \
        if sq_ii is not None else 1.0
    return float(raw[0]) / (std * (size / BASE_WINDOW) ** 2)


def _feature_operator(features) -> sparse.csr_matrix:
    """Sparse map from a flattened 25x25 integral table to raw feature values."""
    side = BASE_WINDOW + 1
    rows, cols, vals = [], [], []
    for k, f in enumerate(features):
        for x0, y0, x1, y1, wt in f.cells():
            for (yy, xx), sgn in (((y1, x1), 1), ((y0, x1), -1), ((y1, x0), -1), ((y0, x0), 1)):
                rows.append(k)
                cols.append(yy * side + xx)
                vals.append(wt * sgn)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(features), side * side))


def feature_matrix(windows, features) -> np.ndarray:
    """Normalised feature values, one row per 24x24 window."""
    arr = _stack_windows(windows)
    n = arr.shape[0]
    px = arr.astype(np.float64)
    tabs = np.zeros((n, BASE_WINDOW + 1, BASE_WINDOW + 1))
    tabs[:, 1:, 1:] = px.cumsum(1).cumsum(2)
    area = float(BASE_WINDOW * BASE_WINDOW)
    mean = px.reshape(n, -1).mean(1)
    var = np.maximum((px.reshape(n, -1) ** 2).sum(1) / area - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), 1.0)
    op = _feature_operator(features)
    raw = (op @ tabs.reshape(n, -1).T).T
    return raw / std[:, None]


def _stack_windows(windows) -> np.ndarray:
    if isinstance(windows, np.ndarray) and windows.ndim == 3:
        arr = windows
    else:
        arr = np.stack([w.pixels if isinstance(w, GrayImage) else np.asarray(w) for w in windows]) \
            if len(windows) else np.zeros((0, BASE_WINDOW, BASE_WINDOW))
    if arr.shape[1:] != (BASE_WINDOW, BASE_WINDOW):
        raise ValueError(f"training windows must be {BASE_WINDOW}x{BASE_WINDOW}, got {arr.shape[1:]}")
    return arr


# ----------------------------------------------------------------- stumps

@dataclass(frozen=True)
class WeakStump:
    feature: int
    threshold: float
    polarity: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        v = np.asarray(X)[:, self.feature]
        return np.where(v > self.threshold, self.polarity, -self.polarity)


@dataclass(frozen=True)
class BoostRound:
    stump: WeakStump
    alpha: float
    epsilon: float      # clamped weighted error used for alpha
    raw_epsilon: float = float("nan")
    z: float = float("nan")


def _stump_errors(X: np.ndarray, w: np.ndarray, y: np.ndarray):
    """Best (error, threshold, polarity) per column of ``X``.

    Candidate thresholds are -inf, midpoints between consecutive distinct
    sorted values, and +inf; a stump predicts ``polarity`` when the value is
    above the threshold. Ties go to the smaller threshold, then polarity +1.
    """
    n, f = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    wp = np.where(y > 0, w, 0.0)[order]
    wn = np.where(y < 0, w, 0.0)[order]
    cp = np.vstack([np.zeros((1, f)), np.cumsum(wp, axis=0)])
    cn = np.vstack([np.zeros((1, f)), np.cumsum(wn, axis=0)])
    err = np.empty((n + 1, 2, f))
    err[:, 0] = cp + (cn[-1] - cn)   # polarity +1
    err[:, 1] = cn + (cp[-1] - cp)   # polarity -1
    valid = np.ones((n + 1, f), dtype=bool)
    valid[1:n] = xs[:-1] < xs[1:]
    err[np.broadcast_to(~valid[:, None, :], err.shape)] = np.inf
    flat = err.reshape(2 * (n + 1), f)
    best = flat.min(axis=0)
    pick = np.argmax(flat <= best + _TIE_TOL, axis=0)
    split, pol = pick // 2, pick % 2
    thr = np.empty(f)
    cols = np.arange(f)
    inner = (split > 0) & (split < n)
    lo = xs[np.clip(split - 1, 0, n - 1), cols]
    hi = xs[np.clip(split, 0, n - 1), cols]
    thr[inner] = (lo[inner] + hi[inner]) / 2.0
    thr[split == 0] = -np.inf
    thr[split == n] = np.inf
    return best, thr, np.where(pol == 0, 1, -1)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be -1 or +1")
    if np.all(y == y[0]):
        raise DegenerateInput("both labels must be present")
    return y.astype(np.int64)


def _best_over_features(X, w, y, chunk: int = 4096) -> tuple[WeakStump, float]:
    best = (np.inf, None)
    for start in range(0, X.shape[1], chunk):
        err, thr, pol = _stump_errors(X[:, start:start + chunk], w, y)
        j = int(np.argmax(err <= err.min() + _TIE_TOL))
        if err[j] < best[0] - _TIE_TOL:
            best = (float(err[j]), WeakStump(start + j, float(thr[j]), int(pol[j])))
    return best[1], max(best[0], 0.0)


def best_stump(values, weights, labels) -> tuple[WeakStump, float]:
    """Minimum weighted-error stump on a single feature (index 0)."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (values.size == weights.size == np.size(labels)) or values.size < 2:
        raise ValueError("values, weights and labels need equal length >= 2")
    y = _check_labels(labels)
    return _best_over_features(values[:, None], weights, y)


# -------------------------------------------------------------- boosting

@dataclass(frozen=True)
class StrongClassifier:
    rounds: tuple[BoostRound, ...]
    shift: float = 0.0

    def __post_init__(self):
        if not self.rounds:
            raise ValueError("a strong classifier needs at least one round")

    @property
    def features(self) -> list[int]:
        return [r.stump.feature for r in self.rounds]

    def margin(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = np.zeros(X.shape[0])
        for r in self.rounds:
            total += r.alpha * r.stump.predict(X)
        return total - self.shift

    def predict(self, X) -> np.ndarray:
        return np.where(self.margin(X) >= 0, 1, -1)

    def with_shift(self, shift: float) -> "StrongClassifier":
        return StrongClassifier(self.rounds, float(shift))


def _boost(X: np.ndarray, y: np.ndarray, max_rounds: int):
    """Yield ``(round, weights_after_update, margins)`` until done."""
    n = X.shape[0]
    w = np.full(n, 1.0 / n)
    margins = np.zeros(n)
    for _ in range(max_rounds):
        stump, raw_eps = _best_over_features(X, w, y)
        if raw_eps >= 0.5:
            return
        eps = min(max(raw_eps, EPS_CLAMP), 0.5 - EPS_CLAMP)
        alpha = 0.5 * math.log((1.0 - eps) / eps)
        h = stump.predict(X)
        w = w * np.exp(-alpha * y * h)
        z = w.sum()
        w /= z
        margins = margins + alpha * h
        yield BoostRound(stump, alpha, eps, raw_eps, float(z)), w, margins
        if np.all(np.where(margins >= 0, 1, -1) == y):
            return


def adaboost_train(X, y, n_rounds: int, history: list | None = None) -> StrongClassifier:
    """Discrete AdaBoost over decision stumps, one stump per round.

    If ``history`` is given, the post-update weight vector of every round is
    appended to it.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    rounds = []
    for rnd, w, _ in _boost(X, y, n_rounds):
        rounds.append(rnd)
        if history is not None:
            history.append(w.copy())
    if not rounds:
        raise DegenerateInput("no stump beats chance on the first round")
    return StrongClassifier(tuple(rounds))


def classify(sc: StrongClassifier, feature_values) -> int:
    """``sign(sum_t alpha_t h_t(x) - shift)`` with ``sign(0) = +1``."""
    v = np.asarray(feature_values, dtype=np.float64).reshape(-1)
    need = max(sc.features) + 1
    if v.size < need:
        raise MissingFeature(f"classifier uses feature {need - 1}, got {v.size} values")
    return int(sc.predict(v[None, :])[0])


class AdaBoostStumps(BaseEstimator, ClassifierMixin):
    """Estimator wrapper: ``X`` holds precomputed feature values, ``y`` in {-1, +1}."""

    def __init__(self, n_rounds=50):
        self.n_rounds = n_rounds

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.array([-1, 1])
        self.classifier_ = adaboost_train(X, y, self.n_rounds)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "classifier_")
        X = check_array(X, dtype=np.float64)
        return self.classifier_.margin(X)

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)


# --------------------------------------------------------------- cascade

@dataclass(frozen=True)
class Cascade:
    features: tuple[HaarFeature, ...]
    stages: tuple[StrongClassifier, ...]
    base: int = BASE_WINDOW
    stage_stats: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.stages:
            raise ValueError("cascade needs at least one stage")

    def passes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        ok = np.ones(X.shape[0], dtype=bool)
        for stage in self.stages:
            ok &= stage.margin(X) >= 0
        return ok


def train_cascade(pos, neg, features=None, min_detect: float = 0.995, max_false_pos: float = 0.5,
                  max_stages: int = 10, max_rounds: int = 50, neg_images=(),
                  max_harvest: int | None = None) -> Cascade:
    """Grow boosted stages until each meets its detection / false-positive goals.

    Each stage's shift is lowered just enough that ``min_detect`` of the
    positives pass; rounds are added until the surviving negatives pass at a
    rate of at most ``max_false_pos`` (or ``max_rounds`` is hit). Negatives
    rejected by a stage never reach the next one.

    ``neg_images`` are face-free images used for bootstrapping: after every
    stage, windows the partial cascade still accepts are harvested (resized
    to the base window) and join the surviving negatives, at most
    ``max_harvest`` per stage (default: the size of ``neg``).
    """
    pos_arr, neg_arr = _stack_windows(pos), _stack_windows(neg)
    if len(pos_arr) < 20 or len(neg_arr) < 20:
        raise InsufficientData(
            f"need >= 20 windows per class, got {len(pos_arr)} positive / {len(neg_arr)} negative")
    if features is None:
        features = enumerate_features(BASE_WINDOW, 2, 2)
    features = tuple(features)
    fp_x = feature_matrix(pos_arr, features)
    fn_x = feature_matrix(neg_arr, features)
    need = math.ceil(min_detect * len(fp_x) - 1e-9)

    stages, stats = [], []
    alive = np.arange(len(fn_x))
    while len(stages) < max_stages and alive.size:
        X = np.vstack([fp_x, fn_x[alive]])
        y = np.concatenate([np.ones(len(fp_x), dtype=np.int64), -np.ones(alive.size, dtype=np.int64)])
        stage = None
        for rnd, _, margins in _boost(X, y, max_rounds):
            rounds = (stage.rounds if stage else ()) + (rnd,)
            pos_m = np.sort(margins[:len(fp_x)])[::-1]
            shift = min(0.0, float(pos_m[need - 1]))
            stage = StrongClassifier(rounds, shift)
            fp_rate = float(np.mean(margins[len(fp_x):] >= shift))
            if fp_rate <= max_false_pos:
                break
        if stage is None:
            break
        detect = float(np.mean(stage.margin(fp_x) >= 0))
        survivors = stage.margin(fn_x[alive]) >= 0
        stats.append({"rounds": len(stage.rounds), "detect": detect,
                      "false_pos": float(np.mean(survivors)), "negatives": int(alive.size)})
        stages.append(stage)
        alive = alive[survivors]
        if neg_images and len(stages) < max_stages:
            partial = Cascade(features, tuple(stages), BASE_WINDOW)
            fresh = _harvest(partial, neg_images, max_harvest or len(neg_arr))
            if len(fresh):
                fn_x = np.vstack([fn_x[alive], feature_matrix(fresh, features)])
                alive = np.arange(len(fn_x))
                stats[-1]["harvested"] = len(fresh)
    return Cascade(features, tuple(stages), BASE_WINDOW, tuple(stats))


def _harvest(cascade: "Cascade", images, limit: int, scale_factor: float = 1.25,
             stride: int = 2) -> np.ndarray:
    """Base-size crops of windows the cascade accepts in face-free images."""
    out = []
    for img in images:
        img = img if isinstance(img, GrayImage) else GrayImage(np.asarray(img))
        if img.width < cascade.base or img.height < cascade.base:
            continue
        t, sq = _tables(img)
        k = 0
        while len(out) < limit:
            scale = scale_factor ** k
            size = int(_round_half_up(cascade.base * scale))
            if size > min(img.width, img.height):
                break
            step = max(1, int(_round_half_up(stride * scale)))
            gy, gx = np.meshgrid(np.arange(0, img.height - size + 1, step),
                                 np.arange(0, img.width - size + 1, step), indexing="ij")
            ys, xs, _, size = _scan(cascade, t, sq, gy.ravel(), gx.ravel(), scale, None)
            for y, x in zip(ys.tolist(), xs.tolist()):
                crop = img.crop(Rect(x, y, size, size))
                out.append(resize(crop, cascade.base, cascade.base).pixels)
                if len(out) >= limit:
                    break
            k += 1
        if len(out) >= limit:
            break
    return np.stack(out) if out else np.zeros((0, cascade.base, cascade.base), dtype=np.uint8)


def _scan(cascade: Cascade, t: np.ndarray, sq: np.ndarray, ys, xs, scale: float,
          counters: list | None):
    size = int(_round_half_up(BASE_WINDOW * scale))
    norm = _window_std(t, sq, ys, xs, size) * (size / BASE_WINDOW) ** 2
    margin = np.zeros(0)
    for k, stage in enumerate(cascade.stages):
        if counters is not None:
            counters[k] += ys.size
        if ys.size == 0:
            break
        margin = np.full(ys.size, -stage.shift)
        for r in stage.rounds:
            v = _raw_feature(t, cascade.features[r.stump.feature], ys, xs, scale) / norm
            margin += r.alpha * np.where(v > r.stump.threshold, r.stump.polarity, -r.stump.polarity)
        keep = margin >= 0
        ys, xs, norm, margin = ys[keep], xs[keep], norm[keep], margin[keep]
    return ys, xs, margin, size


def detect_faces(img: GrayImage, cascade: Cascade, scale_factor: float = 1.25, stride: int = 2,
                 iou_thresh: float = 0.45, counters: list | None = None) -> list[Detection]:
    """Multi-scale sliding-window cascade scan followed by NMS.

    ``counters``, when given, must hold one integer per stage; each is
    incremented by the number of windows that stage evaluated.
    """
    base = cascade.base
    if img.width < base or img.height < base:
        raise ImageTooSmall(f"image {img.width}x{img.height} smaller than {base}x{base}")
    t, sq = _tables(img)
    hits = []
    k = 0
    while True:
        scale = scale_factor ** k
        size = int(_round_half_up(base * scale))
        if size > min(img.width, img.height):
            break
        step = max(1, int(_round_half_up(stride * scale)))
        gy, gx = np.meshgrid(np.arange(0, img.height - size + 1, step),
                             np.arange(0, img.width - size + 1, step), indexing="ij")
        ys, xs, margin, size = _scan(cascade, t, sq, gy.ravel(), gx.ravel(), scale, counters)
        for y, x, m in zip(ys.tolist(), xs.tolist(), margin.tolist()):
            hits.append((k, y, x, Detection(Rect(x, y, size, size), m)))
        k += 1
    hits.sort(key=lambda h: h[:3])
    return nms([h[3] for h in hits], iou_thresh)


# ------------------------------------------------------------ model file

def save_cascade(cascade: Cascade, path) -> None:
    lines = ["CASCADE1", str(cascade.base), str(len(cascade.stages))]
    for stage in cascade.stages:
        lines.append(f"{len(stage.rounds)} {stage.shift!r}")
        for r in stage.rounds:
            f = cascade.features[r.stump.feature]
            lines.append(f"{r.alpha!r} {f.kind} {f.x} {f.y} {f.w} {f.h} "
                         f"{r.stump.threshold!r} {r.stump.polarity}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_cascade(path) -> Cascade:
    """Read a cascade; only the features its stumps use are kept."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "CASCADE1":
        raise ModelFormatError(f"{path}: not a CASCADE1 file")
    try:
        base = int(lines[1])
        n_stages = int(lines[2])
        pos = 3
        feats: list[HaarFeature] = []
        index: dict[HaarFeature, int] = {}
        stages = []
        for _ in range(n_stages):
            count, shift = lines[pos].split()
            pos += 1
            rounds = []
            for _ in range(int(count)):
                alpha, kind, x, y, w, h, thr, pol = lines[pos].split()
                pos += 1
                f = HaarFeature(kind, int(x), int(y), int(w), int(h))
                if f not in index:
                    index[f] = len(feats)
                    feats.append(f)
                rounds.append(BoostRound(WeakStump(index[f], float(thr), int(pol)), float(alpha),
                                         float("nan")))
            stages.append(StrongClassifier(tuple(rounds), float(shift)))
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed cascade ({exc})") from exc
    return Cascade(tuple(feats), tuple(stages), base)
