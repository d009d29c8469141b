"""KITTI object label files: parsing, writing, and conversion to :class:`Box3D`.

Camera-to-BEV convention, used everywhere in this package::

    BEV x   =  camera x          (right)
    BEV y   =  camera z          (forward)
    BEV z   =  h/2 - camera y    (up; camera y points down to the box bottom)
    yaw     =  wrap(-rotation_y)

Worked example: a car at camera location (2.0, 1.65, 10.0), h=1.5,
rotation_y=pi/2 (heading along -camera z, i.e. towards the sensor) becomes
Box3D(x=2.0, y=10.0, z=-0.9, ..., yaw=-pi/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from harmonic3d.geometry import Box3D, wrap_angle

DONT_CARE = "DontCare"

COLUMNS = (
    "type", "truncated", "occluded", "alpha",
    "bbox_left", "bbox_top", "bbox_right", "bbox_bottom",
    "h", "w", "l", "x", "y", "z", "rotation_y", "score",
)


class KittiFormatError(ValueError):
    def __init__(self, message: str, line: int, column: Optional[int] = None):
        where = f"line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class KittiRecord:
    object_type: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple
    dimensions: tuple  # (h, w, l)
    location: tuple  # camera frame, bottom-face center
    rotation_y: float
    score: Optional[float] = None

    @property
    def is_dont_care(self) -> bool:
        return self.object_type == DONT_CARE


def _number(tok: str, line: int, col: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise KittiFormatError(f"cannot parse {COLUMNS[col - 1]} value {tok!r}", line, col) from None
    if not math.isfinite(v):
        raise KittiFormatError(f"non-finite {COLUMNS[col - 1]} value {tok!r}", line, col)
    return v


def parse_line(text: str, line_no: int = 1) -> KittiRecord:
    toks = text.split()
    if len(toks) not in (15, 16):
        raise KittiFormatError(f"expected 15 or 16 fields, got {len(toks)}", line_no)
    vals = [_number(t, line_no, i + 1) for i, t in enumerate(toks) if i > 0]
    occ = vals[1]
    if occ != int(occ):
        raise KittiFormatError(f"occluded must be an integer, got {toks[2]!r}", line_no, 3)
    rec = KittiRecord(
        object_type=toks[0],
        truncated=vals[0],
        occluded=int(occ),
        alpha=vals[2],
        bbox2d=tuple(vals[3:7]),
        dimensions=tuple(vals[7:10]),
        location=tuple(vals[10:13]),
        rotation_y=vals[13],
        score=vals[14] if len(vals) == 15 else None,
    )
    if not rec.is_dont_care and min(rec.dimensions) <= 0:
        raise KittiFormatError("dimensions must be positive", line_no, 9)
    return rec


def parse_label_file(text: Union[str, Iterable[str]]) -> list[KittiRecord]:
    """Parse KITTI label lines; blank lines are skipped, DontCare rows kept."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    return [parse_line(ln, i) for i, ln in enumerate(lines, start=1) if ln.strip()]


def format_record(r: KittiRecord) -> str:
    f2 = lambda v: f"{v:.2f}"
    fields = [r.object_type, f2(r.truncated), str(int(r.occluded)), f2(r.alpha)]
    fields += [f2(v) for v in r.bbox2d]
    fields += [f2(v) for v in r.dimensions]
    fields += [f2(v) for v in r.location]
    fields.append(f2(r.rotation_y))
    if r.score is not None:
        fields.append(f2(r.score))
    return " ".join(fields)


def write_label_file(records: Iterable[KittiRecord]) -> str:
    lines = [format_record(r) for r in records]
    return "".join(ln + "\n" for ln in lines)


def read_label_path(path: Union[str, Path]) -> list[KittiRecord]:
    path = Path(path)
    try:
        return parse_label_file(path.read_text())
    except KittiFormatError as e:
        raise KittiFormatError(f"{path}: {e}", e.line, e.column) from None


def kitti_to_box3d(r: KittiRecord) -> Box3D:
    if r.is_dont_care:
        raise ValueError("DontCare records carry no box")
    h, w, l = r.dimensions
    cx, cy, cz = r.location
    return Box3D(x=cx, y=cz, z=0.5 * h - cy, l=l, w=w, h=h, yaw=wrap_angle(-r.rotation_y))


def box3d_to_kitti(box: Box3D, object_type: str = "Car", score: Optional[float] = None,
                   bbox2d=(0.0, 0.0, 0.0, 0.0), truncated: float = 0.0, occluded: int = 0) -> KittiRecord:
    """Inverse of :func:`kitti_to_box3d`; ``alpha`` is derived from the viewing ray."""
    ry = wrap_angle(-box.yaw)
    cam_x, cam_y, cam_z = box.x, 0.5 * box.h - box.z, box.y
    alpha = wrap_angle(ry - math.atan2(cam_x, cam_z))
    return KittiRecord(object_type, truncated, occluded, alpha, tuple(bbox2d),
                       (box.h, box.w, box.l), (cam_x, cam_y, cam_z), ry, score)
