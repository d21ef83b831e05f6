"""Label taxonomy: heart rhythm classes and signal-quality grades."""

from __future__ import annotations

from enum import Enum


class Rhythm(Enum):
    SINUS = "sinus"
    AF = "af"

    @classmethod
    def from_str(cls, s: str) -> "Rhythm":
        return cls(s.lower())

    @property
    def index(self) -> int:
        return RHYTHM_ORDER.index(self)


class Quality(Enum):
    EXCELLENT = "excellent"
    ACCEPTABLE = "acceptable"
    POOR = "poor"

    @classmethod
    def from_str(cls, s: str) -> "Quality":
        return cls(s.lower())

    @property
    def index(self) -> int:
        return QUALITY_ORDER.index(self)


# Fixed orderings used for probability vectors and one-hot targets.
RHYTHM_ORDER = (Rhythm.SINUS, Rhythm.AF)
QUALITY_ORDER = (Quality.EXCELLENT, Quality.ACCEPTABLE, Quality.POOR)
