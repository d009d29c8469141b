"""Oriented 3D boxes, anchor-relative target encoding and rotated-box IoU.

Frame convention: BEV ground plane is (x, y), z points up, ``yaw`` is the
counter-clockwise heading of the box length axis measured from +x. Box
centers are volumetric centers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from harmonic3d._backend import kernel

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into ``[-pi, pi)``.

    Raises:
        ValueError: if ``a`` is not finite.
    """
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    r = math.fmod(a + math.pi, TWO_PI)
    if r < 0:
        r += TWO_PI
    r -= math.pi
    if r >= math.pi:
        r -= TWO_PI
    return r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle` (no finiteness check)."""
    r = np.mod(np.asarray(a, dtype=np.float64) + math.pi, TWO_PI) - math.pi
    return np.where(r >= math.pi, r - TWO_PI, r)


@dataclass(frozen=True)
class Box3D:
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.l, self.w, self.h, self.yaw)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ValueError(f"box fields must be finite: {vals}")
        if self.l <= 0 or self.w <= 0 or self.h <= 0:
            raise ValueError(f"box dimensions must be positive: l={self.l}, w={self.w}, h={self.h}")
        for name in ("x", "y", "z", "l", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_array(self) -> np.ndarray:
        """``[x, y, z, l, w, h, yaw]``."""
        return np.array([self.x, self.y, self.z, self.l, self.w, self.h, self.yaw])

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "Box3D":
        x, y, z, l, w, h, yaw = (float(t) for t in v)
        return cls(x, y, z, l, w, h, yaw)

    def bev_corners(self) -> list[tuple[float, float]]:
        """Footprint corners, counter-clockwise from (+l/2, +w/2) in the box frame."""
        return bev_corners(self.x, self.y, self.l, self.w, self.yaw)

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h


@dataclass(frozen=True)
class BoxDelta:
    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dw: float = 0.0
    dl: float = 0.0
    dh: float = 0.0
    dtheta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(float(v)) for v in self.as_tuple()):
            raise ValueError(f"delta fields must be finite: {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.dx, self.dy, self.dz, self.dw, self.dl, self.dh, self.dtheta)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "BoxDelta":
        return cls(*(float(t) for t in v))


class EncodingMode(enum.Enum):
    #: log ratio on all three dimensions (default)
    STANDARD_LOG = "standard-log"
    #: plain ratio on the width channel, log ratio on length and height
    AS_PRINTED = "as-printed"


def bev_corners(x: float, y: float, l: float, w: float, yaw: float) -> list[tuple[float, float]]:
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = 0.5 * l, 0.5 * w
    return [(x + u * c - v * s, y + u * s + v * c)
            for u, v in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]


def encode_box(gt: Box3D, anchor: Box3D, mode: EncodingMode = EncodingMode.STANDARD_LOG) -> BoxDelta:
    diag = math.hypot(anchor.w, anchor.l)
    dw = math.log(gt.w / anchor.w) if mode is EncodingMode.STANDARD_LOG else gt.w / anchor.w
    return BoxDelta(
        dx=(gt.x - anchor.x) / diag,
        dy=(gt.y - anchor.y) / diag,
        dz=(gt.z - anchor.z) / anchor.h,
        dw=dw,
        dl=math.log(gt.l / anchor.l),
        dh=math.log(gt.h / anchor.h),
        dtheta=math.sin(gt.yaw - anchor.yaw),
    )


def decode_box(delta: BoxDelta, anchor: Box3D, mode: EncodingMode = EncodingMode.STANDARD_LOG) -> Box3D:
    """Invert :func:`encode_box`.

    Yaw comes back on the principal ``arcsin`` branch; resolving the
    remaining ambiguity is up to the caller's direction classifier.
    """
    diag = math.hypot(anchor.w, anchor.l)
    if mode is EncodingMode.STANDARD_LOG:
        w = anchor.w * math.exp(delta.dw)
    else:
        if delta.dw <= 0:
            raise ValueError(f"as-printed width ratio must be positive, got {delta.dw}")
        w = anchor.w * delta.dw
    return Box3D(
        x=anchor.x + delta.dx * diag,
        y=anchor.y + delta.dy * diag,
        z=anchor.z + delta.dz * anchor.h,
        l=anchor.l * math.exp(delta.dl),
        w=w,
        h=anchor.h * math.exp(delta.dh),
        yaw=anchor.yaw + math.asin(min(1.0, max(-1.0, delta.dtheta))),
    )


def encode_boxes(gt: np.ndarray, anchors: np.ndarray, mode: EncodingMode = EncodingMode.STANDARD_LOG) -> np.ndarray:
    """Array form of :func:`encode_box` over (N, 7) rows; columns follow :class:`BoxDelta`."""
    gt = np.asarray(gt, dtype=np.float64)
    a = np.asarray(anchors, dtype=np.float64)
    diag = np.hypot(a[..., 4], a[..., 3])
    if mode is EncodingMode.STANDARD_LOG:
        dw = np.log(gt[..., 4] / a[..., 4])
    else:
        dw = gt[..., 4] / a[..., 4]
    return np.stack([
        (gt[..., 0] - a[..., 0]) / diag,
        (gt[..., 1] - a[..., 1]) / diag,
        (gt[..., 2] - a[..., 2]) / a[..., 5],
        dw,
        np.log(gt[..., 3] / a[..., 3]),
        np.log(gt[..., 5] / a[..., 5]),
        np.sin(gt[..., 6] - a[..., 6]),
    ], axis=-1)


def decode_boxes(deltas: np.ndarray, anchors: np.ndarray, mode: EncodingMode = EncodingMode.STANDARD_LOG) -> np.ndarray:
    """Array form of :func:`decode_box`; returns (N, 7) box rows with wrapped yaw."""
    d = np.asarray(deltas, dtype=np.float64)
    a = np.asarray(anchors, dtype=np.float64)
    diag = np.hypot(a[..., 4], a[..., 3])
    if mode is EncodingMode.STANDARD_LOG:
        w = a[..., 4] * np.exp(d[..., 3])
    else:
        if np.any(d[..., 3] <= 0):
            raise ValueError("as-printed width ratio must be positive")
        w = a[..., 4] * d[..., 3]
    return np.stack([
        a[..., 0] + d[..., 0] * diag,
        a[..., 1] + d[..., 1] * diag,
        a[..., 2] + d[..., 2] * a[..., 5],
        a[..., 3] * np.exp(d[..., 4]),
        w,
        a[..., 5] * np.exp(d[..., 5]),
        wrap_angles(a[..., 6] + np.arcsin(np.clip(d[..., 6], -1.0, 1.0))),
    ], axis=-1)


def quad_intersection_area(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]]) -> float:
    """Intersection area of two convex quadrilaterals given as 4 (x, y) corners."""
    return float(kernel.quad_intersection_area(a, b))


def polygon_area(poly: Iterable[Sequence[float]]) -> float:
    pts = [(float(x), float(y)) for x, y in poly]
    s = 0.0
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        s += x1 * y2 - x2 * y1
    return abs(0.5 * s)


def _vertical_overlap(za, ha, zb, hb):
    lo = np.maximum(za - 0.5 * ha, zb - 0.5 * hb)
    hi = np.minimum(za + 0.5 * ha, zb + 0.5 * hb)
    return np.maximum(hi - lo, 0.0)


def bev_iou(a: Box3D, b: Box3D) -> float:
    inter = quad_intersection_area(a.bev_corners(), b.bev_corners())
    union = a.l * a.w + b.l * b.w - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a: Box3D, b: Box3D) -> float:
    inter = quad_intersection_area(a.bev_corners(), b.bev_corners())
    inter *= float(_vertical_overlap(a.z, a.h, b.z, b.h))
    union = a.volume + b.volume - inter
    return min(1.0, max(0.0, inter / union))


def boxes_to_array(boxes: Iterable[Box3D]) -> np.ndarray:
    rows = [b.as_array() for b in boxes]
    return np.array(rows, dtype=np.float64).reshape(-1, 7)


def iou_matrix(boxes_a, boxes_b, kind: str = "bev") -> np.ndarray:
    """Pairwise IoU between two box collections.

    Args:
        boxes_a: (N, 7) array or sequence of :class:`Box3D`.
        boxes_b: (M, 7) array or sequence of :class:`Box3D`.
        kind: ``"bev"`` or ``"3d"``.

    Returns:
        (N, M) array of IoU values in [0, 1].
    """
    A = _as_rows(boxes_a)
    B = _as_rows(boxes_b)
    inter = kernel.bev_intersection_matrix(A, B)
    if kind == "bev":
        area_a = A[:, 3] * A[:, 4]
        area_b = B[:, 3] * B[:, 4]
    elif kind == "3d":
        inter = inter * _vertical_overlap(A[:, None, 2], A[:, None, 5], B[None, :, 2], B[None, :, 5])
        area_a = A[:, 3] * A[:, 4] * A[:, 5]
        area_b = B[:, 3] * B[:, 4] * B[:, 5]
    else:
        raise ValueError(f"unknown IoU kind {kind!r}; expected 'bev' or '3d'")
    union = area_a[:, None] + area_b[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def _as_rows(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    return boxes_to_array(boxes)
