"""Annotation CSV parsing: one labeled box per row.

Expected columns: path,x,y,w,h,label,frame. The box is (x, y) for the
upper-left corner plus a width and height in pixels; whether it fits the
image is only checkable once the image is open, so that happens at crop
time.
"""

import csv
from dataclasses import dataclass

REQUIRED_COLUMNS = ("path", "x", "y", "w", "h", "label", "frame")


@dataclass(frozen=True)
class AnnotationRow:
    index: int
    path: str
    x: int
    y: int
    w: int
    h: int
    label: str
    frame: int

    @property
    def line(self) -> int:
        """1-based CSV line, counting the header."""
        return self.index + 2


def read_annotations(path) -> list[AnnotationRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        have = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in have]
        if missing:
            raise ValueError(f"{path}: annotation CSV lacks columns: {', '.join(missing)}")
        rows = []
        for i, raw in enumerate(reader):
            line = i + 2
            try:
                row = AnnotationRow(
                    index=i,
                    path=raw["path"] or "",
                    x=int(raw["x"]),
                    y=int(raw["y"]),
                    w=int(raw["w"]),
                    h=int(raw["h"]),
                    label=raw["label"] or "",
                    frame=int(raw["frame"]),
                )
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{line}: non-integer box or frame") from None
            if not row.path:
                raise ValueError(f"{path}:{line}: empty image path")
            if not row.label:
                raise ValueError(f"{path}:{line}: empty label")
            if row.w <= 0 or row.h <= 0:
                raise ValueError(f"{path}:{line}: box {row.w}x{row.h} is not positive")
            if row.x < 0 or row.y < 0:
                raise ValueError(f"{path}:{line}: negative box position")
            if row.frame < 0:
                raise ValueError(f"{path}:{line}: negative frame index")
            rows.append(row)
    return rows
