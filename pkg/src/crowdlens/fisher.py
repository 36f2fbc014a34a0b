"""Fisherfaces: PCA down to N - c dimensions, then LDA, then nearest centroid.

Images enter as columns of a ``d x N`` matrix (``d`` pixels, ``N`` samples).
The estimator front end (:class:`FisherFaces`) follows the scikit-learn
convention of one sample per *row* and transposes internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DimMismatch, ModelFormatError, NoDiscrimination, TooFewSamples
from .imgcore import GrayImage, resize
from .numeric import format_mat, gen_eig, gram_pca, parse_mat

__all__ = [
    "FACE_SIZE",
    "ImageColumnMatrix",
    "ClassVector",
    "FisherModel",
    "FisherFaces",
    "build_matrix",
    "pca_step",
    "scatter_between",
    "scatter_within",
    "lda_step",
    "train",
    "predict",
    "save_model",
    "load_model",
]

FACE_SIZE = 32


@dataclass(frozen=True, eq=False)
class ImageColumnMatrix:
    x: np.ndarray  # d x N
    image_w: int
    image_h: int


@dataclass(frozen=True, eq=False)
class ClassVector:
    labels: np.ndarray      # class id per column, 0..c-1
    names: tuple[str, ...]  # display name per class id

    @property
    def c(self) -> int:
        return len(self.names)


@dataclass(frozen=True, eq=False)
class FisherModel:
    mean: np.ndarray        # d
    w: np.ndarray           # d x (c-1), PCA basis times LDA basis
    centroids: np.ndarray   # c x (c-1)
    names: tuple[str, ...]
    image_w: int
    image_h: int
    eigenvalues: np.ndarray | None = None

    def project(self, x: np.ndarray) -> np.ndarray:
        """Project ``d x m`` columns (or one ``d`` vector) to ``(c-1) x m``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.w.T @ (x - self.mean)
        return self.w.T @ (x - self.mean[:, None])


def build_matrix(images, labels) -> tuple[ImageColumnMatrix, ClassVector]:
    """Stack images as row-major flattened columns; class ids follow sorted names."""
    images = list(images)
    labels = list(labels)
    if len(images) != len(labels):
        raise DimMismatch(f"{len(images)} images but {len(labels)} labels")
    if not images:
        raise TooFewSamples("no images")
    h, w = images[0].height, images[0].width
    for k, img in enumerate(images):
        if (img.height, img.width) != (h, w):
            raise DimMismatch(f"image {k} is {img.width}x{img.height}, expected {w}x{h}")
    names = tuple(sorted(set(labels), key=str))
    ids = np.array([names.index(lb) for lb in labels], dtype=np.intp)
    counts = np.bincount(ids, minlength=len(names))
    if len(names) < 2 or counts.min() < 2:
        raise TooFewSamples(f"need >= 2 classes with >= 2 images each, got counts {counts.tolist()}")
    x = np.stack([img.luma.astype(np.float64) for img in images], axis=1)
    return ImageColumnMatrix(x, w, h), ClassVector(ids, tuple(str(n) for n in names))


def pca_step(xc: ImageColumnMatrix, cv: ClassVector):
    """Return ``(basis d x (N-c), mean, P)`` with ``P = basis.T (X - mean)``."""
    n = xc.x.shape[1]
    k = n - cv.c
    if k < 1:
        raise TooFewSamples(f"N - c = {k}; need at least one PCA dimension")
    mean = xc.x.mean(axis=1)
    centred = xc.x - mean[:, None]
    basis = gram_pca(centred, k)
    return basis, mean, basis.T @ centred


def _class_means(p: np.ndarray, labels: np.ndarray, c: int):
    return np.stack([p[:, labels == i].mean(axis=1) for i in range(c)], axis=1)


def scatter_between(p, cv: ClassVector) -> np.ndarray:
    """``sum_i N_i (m_i - m)(m_i - m)^T`` over the classes present."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if p.shape[1] != len(cv.labels):
        raise DimMismatch(f"{p.shape[1]} columns but {len(cv.labels)} labels")
    m = p.mean(axis=1)
    s_b = np.zeros((p.shape[0], p.shape[0]))
    for i in np.unique(cv.labels):
        cols = p[:, cv.labels == i]
        d = cols.mean(axis=1) - m
        s_b += cols.shape[1] * np.outer(d, d)
    return s_b


def scatter_within(p, cv: ClassVector) -> np.ndarray:
    """``sum_i sum_{x in class i} (x - m_i)(x - m_i)^T``."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if p.shape[1] != len(cv.labels):
        raise DimMismatch(f"{p.shape[1]} columns but {len(cv.labels)} labels")
    s_w = np.zeros((p.shape[0], p.shape[0]))
    for i in np.unique(cv.labels):
        cols = p[:, cv.labels == i]
        dev = cols - cols.mean(axis=1, keepdims=True)
        s_w += dev @ dev.T
    return s_w


def lda_step(s_b, s_w, k: int):
    """Top-``k`` generalised eigenvectors (unit columns) and their eigenvalues."""
    eig = gen_eig(s_b, s_w)
    if k > eig.vectors.shape[1]:
        raise DimMismatch(f"asked for {k} directions from a {eig.vectors.shape[1]}-dim problem")
    return eig.vectors[:, :k], eig.values[:k]


def train(xc: ImageColumnMatrix, cv: ClassVector) -> FisherModel:
    basis, mean, p = pca_step(xc, cv)
    w_fld, values = lda_step(scatter_between(p, cv), scatter_within(p, cv), cv.c - 1)
    if values[0] < 1e-8:
        raise NoDiscrimination(f"top generalised eigenvalue {values[0]:.3g} < 1e-8")
    w = basis @ w_fld
    proj = w.T @ (xc.x - mean[:, None])
    centroids = _class_means(proj, cv.labels, cv.c).T
    return FisherModel(mean, w, centroids, cv.names, xc.image_w, xc.image_h, values)


def _nearest(model: FisherModel, y: np.ndarray):
    """Nearest centroid for each column of ``y``; ties go to the lower class id."""
    d = np.linalg.norm(model.centroids[:, :, None] - y[None, :, :], axis=1)
    idx = np.argmin(d, axis=0)
    return idx, d[idx, np.arange(d.shape[1])]


def predict(model: FisherModel, face: GrayImage) -> tuple[str, float]:
    if (face.width, face.height) != (model.image_w, model.image_h):
        raise DimMismatch(f"face is {face.width}x{face.height}, model expects "
                          f"{model.image_w}x{model.image_h}")
    y = model.project(face.luma.astype(np.float64))
    idx, dist = _nearest(model, y[:, None])
    return model.names[int(idx[0])], float(dist[0])


def normalize_face(face: GrayImage, size: int = FACE_SIZE) -> GrayImage:
    """Resize a face crop to the square input size used by gender models."""
    return resize(face, size, size)


class FisherFaces(BaseEstimator, ClassifierMixin, TransformerMixin):
    """Fisherfaces classifier over flattened images (one image per row).

    Parameters
    ----------
    image_shape : (width, height) or None
        Geometry of the flattened rows. Only used to validate
        :meth:`predict_image` inputs and to write model files; inferred as a
        single row of pixels when omitted.
    """

    def __init__(self, image_shape=None):
        self.image_shape = image_shape

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        w, h = self.image_shape if self.image_shape is not None else (X.shape[1], 1)
        if w * h != X.shape[1]:
            raise DimMismatch(f"image_shape {w}x{h} does not match {X.shape[1]} features")
        names = tuple(sorted({str(v) for v in y}))
        ids = np.array([names.index(str(v)) for v in y])
        counts = np.bincount(ids, minlength=len(names))
        if len(names) < 2 or counts.min() < 2:
            raise TooFewSamples(f"need >= 2 classes with >= 2 samples each, got {counts.tolist()}")
        self.model_ = train(ImageColumnMatrix(X.T, w, h), ClassVector(ids, names))
        self.classes_ = np.array(names)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_images(self, images, labels):
        xc, cv = build_matrix(images, labels)
        self.image_shape = (xc.image_w, xc.image_h)
        return self.fit(xc.x.T, np.asarray(cv.names)[cv.labels])

    @classmethod
    def from_model(cls, model: FisherModel) -> "FisherFaces":
        est = cls(image_shape=(model.image_w, model.image_h))
        est.model_ = model
        est.classes_ = np.array(model.names)
        est.n_features_in_ = model.mean.size
        return est

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.model_.mean.size:
            raise DimMismatch(f"expected {self.model_.mean.size} features, got {X.shape[1]}")
        return self.model_.project(X.T).T

    def predict(self, X):
        idx, _ = _nearest(self.model_, self.transform(X).T)
        return self.classes_[idx]

    def predict_image(self, face: GrayImage) -> tuple[str, float]:
        check_is_fitted(self, "model_")
        return predict(self.model_, face)


# ------------------------------------------------------------ model file

def save_model(model: FisherModel, path) -> None:
    for name in model.names:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"class name {name!r} must be non-empty without whitespace")
    parts = [
        "FISHER1",
        f"{model.image_w} {model.image_h} {len(model.names)}",
        " ".join(model.names),
        format_mat(model.mean[None, :]).rstrip("\n"),
        format_mat(model.w).rstrip("\n"),
        format_mat(model.centroids).rstrip("\n"),
    ]
    Path(path).write_text("\n".join(parts) + "\n")


def load_model(path) -> FisherModel:
    lines = iter(Path(path).read_text().splitlines())
    if next(lines, "").strip() != "FISHER1":
        raise ModelFormatError(f"{path}: not a FISHER1 file")
    try:
        w, h, c = (int(v) for v in next(lines).split())
        names = tuple(next(lines).split())
        if len(names) != c:
            raise ModelFormatError(f"{path}: {c} classes but {len(names)} names")
        mean = parse_mat(lines)[0]
        proj = parse_mat(lines)
        centroids = parse_mat(lines)
    except (StopIteration, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed Fisher model ({exc})") from exc
    if mean.size != w * h or proj.shape != (w * h, c - 1) or centroids.shape != (c, c - 1):
        raise ModelFormatError(f"{path}: inconsistent matrix shapes")
    return FisherModel(mean, proj, centroids, names, w, h)
