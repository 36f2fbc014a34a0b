"""Scored detections and greedy non-maximum suppression."""
from __future__ import annotations

from dataclasses import dataclass

from .imgcore import Rect

__all__ = ["Detection", "sort_detections", "nms"]


@dataclass(frozen=True)
class Detection:
    rect: Rect
    score: float


def sort_detections(dets):
    """Canonical order: score descending, then y, then x."""
    return sorted(dets, key=lambda d: (-d.score, d.rect.y, d.rect.x, d.rect.w, d.rect.h))


def nms(dets, iou_thresh: float = 0.45) -> list[Detection]:
    """Greedy suppression: keep the best, drop anything with IoU > ``iou_thresh``.

    Overlap exactly at the threshold survives.
    """
    remaining = sort_detections(dets)
    keep: list[Detection] = []
    while remaining:
        best = remaining.pop(0)
        keep.append(best)
        remaining = [d for d in remaining if best.rect.iou(d.rect) <= iou_thresh]
    return keep
