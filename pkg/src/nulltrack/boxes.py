"""Axis-aligned boxes in (left, top, right, bottom) form."""

from __future__ import annotations

from dataclasses import dataclass

from nulltrack.errors import ValidationError


@dataclass(frozen=True)
class BoxLTRB:
    """A box with right > left and bottom > top; ``scale`` tags the coordinate
    system ("feature" cells or "image" pixels)."""

    left: float
    top: float
    right: float
    bottom: float
    scale: str = "feature"

    def __post_init__(self):
        if not (self.right > self.left and self.bottom > self.top):
            raise ValidationError(
                f"degenerate box ({self.left}, {self.top}, {self.right}, {self.bottom})"
            )

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        """(row, col) center."""
        return (0.5 * (self.top + self.bottom), 0.5 * (self.left + self.right))

    def shifted(self, drow: float, dcol: float) -> "BoxLTRB":
        return BoxLTRB(
            self.left + dcol, self.top + drow, self.right + dcol, self.bottom + drow, self.scale
        )


def intersection_area(a: BoxLTRB, b: BoxLTRB) -> float:
    w = min(a.right, b.right) - max(a.left, b.left)
    h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoxLTRB, b: BoxLTRB) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union
