"""Per-group aggregation of feature importance scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from ..errors import DataError, GroupingError
from .catalog import GROUPS


@dataclass(frozen=True)
class GroupImportance:
    group: str
    count: int
    score: float

    def __post_init__(self):
        if self.count < 1:
            raise DataError("a group needs at least one feature")
        if self.score < 0:
            raise DataError("importance scores are non-negative")


def group_of(feature_name: str) -> str:
    """Catalog group of ``group__...`` or ``lead__group__...`` names."""
    parts = feature_name.split("__")
    for part in parts[:2]:
        if part in GROUPS:
            return part
    raise GroupingError(f"feature {feature_name!r} matches no catalog group")


def aggregate_importance(scores: Mapping[str, float]) -> list[GroupImportance]:
    """Sum scores per group, sorted by descending score then group name."""
    members: dict[str, list[float]] = {}
    for name, score in scores.items():
        if score < 0 or math.isnan(score):
            raise DataError(f"importance of {name!r} must be >= 0")
        members.setdefault(group_of(name), []).append(float(score))
    out = [GroupImportance(g, len(v), math.fsum(v)) for g, v in members.items()]
    return sorted(out, key=lambda gi: (-gi.score, gi.group))


def render_importance_table(groups: list[GroupImportance], digits: int = 4) -> str:
    """Plain-text table: group, feature count, score."""
    width = max([len("Feature group")] + [len(g.group) for g in groups])
    lines = [f"{'Feature group':<{width}}  {'Count':>5}  {'Score':>8}"]
    for g in groups:
        lines.append(f"{g.group:<{width}}  {g.count:>5d}  {g.score:>8.{digits}f}")
    return "\n".join(lines)
