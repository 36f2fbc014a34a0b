"""Synthetic image generators for tests, demos and the committed fixture.

Nothing here pretends to be realistic imagery; each generator produces a
controlled stand-in for one detector's positive or negative class.
"""
from __future__ import annotations

import numpy as np

from .imgcore import GrayImage, Rect

__all__ = [
    "face_window",
    "nonface_window",
    "misaligned_face",
    "bar_figure",
    "noise_window",
    "gender_faces",
    "paste",
    "noise_frame",
    "Walker",
    "walker_frames",
]


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)


def face_window(rng: np.random.Generator, size: int = 24) -> np.ndarray:
    """Bright oval with dark eye band, eyes and mouth, in a 24x24 window."""
    yy, xx = np.mgrid[0:24, 0:24].astype(np.float64)
    img = np.full((24, 24), 70.0)
    oval = ((xx - 11.5) / 10.5) ** 2 + ((yy - 12.0) / 12.5) ** 2 <= 1.0
    img[oval] = 185.0
    img[6:8, 4:20] = 120.0   # brows
    img[8:11, 4:10] = 40.0   # eyes
    img[8:11, 14:20] = 40.0
    img[11:15, 10:14] = 205.0  # nose ridge
    img[16:19, 8:16] = 60.0  # mouth
    dy, dx = rng.integers(-1, 2, size=2)
    img = np.roll(img, (dy, dx), axis=(0, 1))
    img = img * rng.uniform(0.75, 1.25) + rng.uniform(-25, 25)
    img += rng.normal(0, 8, img.shape)
    out = _to_u8(img)
    if size != 24:
        from .imgcore import resize
        out = resize(GrayImage(out), size, size).pixels.copy()
    return out


def nonface_window(rng: np.random.Generator) -> np.ndarray:
    kind = rng.integers(0, 6)
    if kind == 5:
        return misaligned_face(rng)
    if kind == 0:
        img = rng.normal(rng.uniform(40, 210), rng.uniform(5, 50), (24, 24))
    elif kind == 1:
        g = rng.normal(0, 1, (6, 6))
        img = np.kron(g, np.ones((4, 4))) * rng.uniform(10, 60) + rng.uniform(60, 190)
    elif kind == 2:
        img = np.full((24, 24), rng.uniform(40, 210))
        for _ in range(rng.integers(1, 5)):
            x0, y0 = rng.integers(0, 20, size=2)
            w, h = rng.integers(2, 14, size=2)
            img[y0:y0 + h, x0:x0 + w] = rng.uniform(0, 255)
        img += rng.normal(0, 6, img.shape)
    elif kind == 3:
        yy, xx = np.mgrid[0:24, 0:24]
        ang = rng.uniform(0, np.pi)
        img = 128 + (np.cos(ang) * xx + np.sin(ang) * yy - 12) * rng.uniform(-8, 8)
        img += rng.normal(0, 6, img.shape)
    else:
        # bright blob without the facial layout
        yy, xx = np.mgrid[0:24, 0:24].astype(np.float64)
        cx, cy = rng.uniform(4, 20, size=2)
        img = np.where((xx - cx) ** 2 + (yy - cy) ** 2 < rng.uniform(20, 120), 190.0, 70.0)
        img += rng.normal(0, 10, img.shape)
    return _to_u8(img)


def misaligned_face(rng: np.random.Generator) -> np.ndarray:
    """Hard negative: a face shifted well off-centre or shrunk inside the window."""
    img = rng.normal(rng.uniform(60, 190), rng.uniform(5, 30), (24, 24))
    if rng.random() < 0.5:
        face = face_window(rng).astype(np.float64)
        dy, dx = rng.integers(-12, 13, size=2)
        while max(abs(dy), abs(dx)) < 4:
            dy, dx = rng.integers(-12, 13, size=2)
        ys, xs = slice(max(0, dy), 24 + min(0, dy)), slice(max(0, dx), 24 + min(0, dx))
        img[ys, xs] = face[max(0, -dy):24 - max(0, dy), max(0, -dx):24 - max(0, dx)]
    else:
        size = int(rng.integers(12, 21))
        x, y = rng.integers(0, 25 - size, size=2)
        img[y:y + size, x:x + size] = face_window(rng, size)
    return _to_u8(img)


def bar_figure(rng: np.random.Generator) -> np.ndarray:
    """64x128 window: dark vertical body bar with a head, on noise."""
    img = rng.normal(128, 25, (128, 64))
    cx = 32 + rng.integers(-3, 4)
    half = rng.integers(7, 11)
    top = 30 + rng.integers(-4, 5)
    bottom = 118 + rng.integers(-4, 5)
    tone = rng.uniform(15, 50)
    img[top:bottom, cx - half:cx + half] = tone + rng.normal(0, 6, (bottom - top, 2 * half))
    yy, xx = np.mgrid[0:128, 0:64]
    head = (xx - cx) ** 2 + (yy - (top - 10)) ** 2 <= 81
    img[head] = tone + 5
    return _to_u8(img)


def noise_window(rng: np.random.Generator) -> np.ndarray:
    """64x128 negative: noise, a horizontal bar, a blob, or an off-centre figure."""
    img = rng.normal(128, 25, (128, 64))
    kind = rng.integers(0, 4)
    if kind == 3:
        # misaligned figure: the detector must score these below centred ones
        fig = bar_figure(rng).astype(np.float64)
        if rng.random() < 0.5:
            dx = int(rng.integers(22, 40)) * (1 if rng.random() < 0.5 else -1)
            src = fig[:, max(0, -dx):64 - max(0, dx)]
            img[:, max(0, dx):max(0, dx) + src.shape[1]] = src
        else:
            dy = int(rng.integers(40, 70)) * (1 if rng.random() < 0.5 else -1)
            src = fig[max(0, -dy):128 - max(0, dy), :]
            img[max(0, dy):max(0, dy) + src.shape[0], :] = src
        return _to_u8(img)
    if kind == 1:
        y0 = rng.integers(10, 100)
        img[y0:y0 + rng.integers(8, 20), 4:60] = rng.uniform(15, 50)
    elif kind == 2:
        yy, xx = np.mgrid[0:128, 0:64]
        cy, cx = rng.integers(20, 108), rng.integers(10, 54)
        img[(xx - cx) ** 2 + (yy - cy) ** 2 <= rng.integers(40, 200)] = rng.uniform(15, 50)
    return _to_u8(img)


def gender_faces(rng: np.random.Generator, n_per_class: int, offset_sigma: float = 3.0,
                 sigma: float = 12.0, size: int = 32):
    """Two Gaussian image classes whose means differ by ``offset_sigma * sigma``.

    Pixel noise is i.i.d. with std ``sigma``. The class-1 mean image is the
    class-0 mean plus ``offset_sigma * sigma`` on a fixed half of the pixels
    (a centred band), so every pixel of that band is shifted by the stated
    number of noise standard deviations.
    Returns ``(images, labels)`` with labels ``"male"`` / ``"female"``.
    """
    base = np.full((size, size), 110.0)
    base[size // 4: 3 * size // 4, :] += 20.0
    band = np.zeros((size, size), dtype=bool)
    band[:, size // 4: 3 * size // 4] = True
    images, labels = [], []
    for cls, name in enumerate(("male", "female")):
        mean = base + (offset_sigma * sigma * band if cls else 0.0)
        for _ in range(n_per_class):
            images.append(GrayImage(_to_u8(mean + rng.normal(0, sigma, mean.shape))))
            labels.append(name)
    return images, labels


def paste(frame: np.ndarray, patch: np.ndarray, x: int, y: int) -> np.ndarray:
    out = frame.copy()
    h, w = patch.shape
    out[y:y + h, x:x + w] = patch
    return out


def noise_frame(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    return _to_u8(rng.normal(128, 25, (height, width)))


class Walker:
    """Straight-line walker: a bar figure moving ``(vx, vy)`` pixels per frame."""

    def __init__(self, x0: int, y0: int, vx: int, vy: int, seed: int):
        self.x0, self.y0, self.vx, self.vy = x0, y0, vx, vy
        self.sprite = bar_figure(np.random.default_rng(seed))

    def rect(self, frame_index: int) -> Rect:
        return Rect(self.x0 + self.vx * frame_index, self.y0 + self.vy * frame_index, 64, 128)


def walker_frames(walkers, n_frames: int, width: int = 320, height: int = 240, seed: int = 0):
    """Frames with every walker drawn over fresh noise; returns a list of arrays."""
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        frame = noise_frame(rng, width, height)
        for wk in walkers:
            r = wk.rect(i)
            if r.inside(width, height):
                frame = paste(frame, wk.sprite, r.x, r.y)
        frames.append(frame)
    return frames
