"""Multi-objective metric space and Pareto frontier maintenance.

A submission's quality/efficiency point lives in a declared metric space
where every dimension carries an optimization direction. Point a
*dominates* point b when a is at least as good in every shared dimension
(direction-aware) and strictly better in at least one. The frontier is
the set of points dominated by nobody; the scoreboard calls them the
winning workflows.

All comparisons are exact, with no epsilon: a tolerance would make
dominance non-transitive, and equal vectors are deliberately mutually
non-dominating so duplicate submissions stay visible side by side.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

# Row-block size for the vectorized dominated-mask computation; bounds the
# n*block boolean intermediates when point sets grow past desk scale.
_BLOCK = 256


class ParetoError(ValueError):
    """Base class for metric-space and frontier contract violations."""


class MetricMismatchError(ParetoError):
    """Compared vectors do not cover the same metric_id set."""


class UnknownDimensionError(ParetoError):
    """A metric_id is not part of the governing space."""


class DuplicatePointError(ParetoError):
    """A point_id occurs more than once."""


class EmptyFrontierError(ParetoError):
    """Distance requested against a frontier with no members."""


class MetricValueError(ParetoError):
    """A metric value violates the vector invariants (NaN, inf, range)."""


class Direction(enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


@dataclass(frozen=True)
class Dimension:
    metric_id: str
    direction: Direction
    unit: str


@dataclass(frozen=True)
class MetricSpace:
    """Ordered, non-empty list of uniquely named, direction-tagged metrics."""

    dimensions: tuple[Dimension, ...]

    def __post_init__(self) -> None:
        if not self.dimensions:
            raise ParetoError("metric space must declare at least one dimension")
        ids = [d.metric_id for d in self.dimensions]
        if len(set(ids)) != len(ids):
            raise ParetoError(f"duplicate metric ids in space: {ids}")

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(d.metric_id for d in self.dimensions)

    def dimension(self, metric_id: str) -> Dimension:
        for d in self.dimensions:
            if d.metric_id == metric_id:
                return d
        raise UnknownDimensionError(f"unknown dimension: {metric_id!r}")

    def direction_of(self, metric_id: str) -> Direction:
        return self.dimension(metric_id).direction

    def subspace(self, dim_x: str, dim_y: str) -> "MetricSpace":
        if dim_x == dim_y:
            raise ParetoError(f"projection dimensions must differ, got {dim_x!r} twice")
        return MetricSpace((self.dimension(dim_x), self.dimension(dim_y)))

    def to_json(self) -> list[dict[str, str]]:
        return [
            {"id": d.metric_id, "direction": d.direction.value, "unit": d.unit}
            for d in self.dimensions
        ]

    @classmethod
    def from_json(cls, doc: object) -> "MetricSpace":
        if not isinstance(doc, list):
            raise ParetoError("metric space must be a list of dimension objects")
        dims = []
        for entry in doc:
            if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
                raise ParetoError(f"bad dimension entry: {entry!r}")
            try:
                direction = Direction(entry.get("direction"))
            except ValueError:
                raise ParetoError(
                    f"bad direction {entry.get('direction')!r} for {entry['id']!r}"
                ) from None
            dims.append(Dimension(entry["id"], direction, str(entry.get("unit", ""))))
        return cls(tuple(dims))


#: Canonical tournament space: quality plus every efficiency axis the
#: scoreboard tracks by default.
DEFAULT_SPACE = MetricSpace(
    (
        Dimension("accuracy", Direction.MAXIMIZE, "ratio"),
        Dimension("latency_s", Direction.MINIMIZE, "seconds"),
        Dimension("energy_j", Direction.MINIMIZE, "joules"),
        Dimension("peak_mem_bytes", Direction.MINIMIZE, "bytes"),
        Dimension("model_bytes", Direction.MINIMIZE, "bytes"),
        Dimension("cost_usd", Direction.MINIMIZE, "USD"),
    )
)


class MetricVector(Mapping):
    """Immutable map metric_id -> finite float.

    Construction rejects NaN and infinities outright; space-dependent
    range checks (accuracy in [0,1], minimize metrics >= 0) live in
    :func:`validate_vector` so the vector type stays space-agnostic.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, float]):
        clean: dict[str, float] = {}
        for key, raw in values.items():
            if not isinstance(key, str):
                raise MetricValueError(f"metric id must be a string, got {key!r}")
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise MetricValueError(f"metric {key!r} has non-numeric value {raw!r}")
            value = float(raw)
            if not math.isfinite(value):
                raise MetricValueError(f"metric {key!r} must be finite, got {value!r}")
            clean[key] = value
        self._values = clean

    def __getitem__(self, key: str) -> float:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, MetricVector):
            return self._values == other._values
        if isinstance(other, Mapping):
            return self._values == dict(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(frozenset(self._values.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v}" for k, v in sorted(self._values.items()))
        return f"MetricVector({inner})"

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(self._values)

    def restrict(self, keep: Iterable[str]) -> "MetricVector":
        return MetricVector({k: self._values[k] for k in keep})

    def to_json(self) -> dict[str, float]:
        return dict(self._values)


def validate_vector(vector: MetricVector, space: MetricSpace) -> None:
    """Enforce the space-dependent vector invariants, raising on violation."""
    extra = vector.ids - space.ids
    if extra:
        raise UnknownDimensionError(f"metrics not in space: {sorted(extra)}")
    for metric_id, value in vector.items():
        if metric_id == "accuracy" and not (0.0 <= value <= 1.0):
            raise MetricValueError(f"accuracy must lie in [0,1], got {value}")
        if space.direction_of(metric_id) is Direction.MINIMIZE and value < 0:
            raise MetricValueError(f"minimize metric {metric_id!r} must be >= 0, got {value}")


@dataclass(frozen=True)
class ParetoFrontier:
    """Mutually non-dominated (point_id, vector) pairs under one space.

    Members are kept sorted by point_id so structurally equal frontiers
    compare equal regardless of the order points arrived in.
    """

    space: MetricSpace
    members: tuple[tuple[str, MetricVector], ...]

    @property
    def member_ids(self) -> frozenset[str]:
        return frozenset(pid for pid, _ in self.members)

    @property
    def metric_ids(self) -> frozenset[str] | None:
        """Common metric_id set of the members; None while empty."""
        if not self.members:
            return None
        return self.members[0][1].ids

    def __len__(self) -> int:
        return len(self.members)


class EventKind(enum.Enum):
    ENTERED = "entered"
    REJECTED_DOMINATED = "rejected_dominated"
    DISPLACED = "displaced"


@dataclass(frozen=True)
class FrontierEvent:
    kind: EventKind
    point_id: str
    cause_point_id: str | None = None


def dominates(a: MetricVector, b: MetricVector, space: MetricSpace) -> bool:
    """True iff a is at least as good as b everywhere and better somewhere.

    Both vectors must cover the same metric_id set, itself a subset of the
    space. Comparison is exact; equal vectors never dominate each other.
    """
    ids = a.ids
    if ids != b.ids:
        raise MetricMismatchError(
            f"vectors cover different metrics: {sorted(ids)} vs {sorted(b.ids)}"
        )
    extra = ids - space.ids
    if extra:
        raise UnknownDimensionError(f"metrics not in space: {sorted(extra)}")
    strictly_better = False
    for metric_id in ids:
        av, bv = a[metric_id], b[metric_id]
        if space.direction_of(metric_id) is Direction.MINIMIZE:
            if av > bv:
                return False
            if av < bv:
                strictly_better = True
        else:
            if av < bv:
                return False
            if av > bv:
                strictly_better = True
    return strictly_better


def _checked_points(
    points: Iterable[tuple[str, MetricVector]], space: MetricSpace
) -> list[tuple[str, MetricVector]]:
    items = list(points)
    seen: set[str] = set()
    for pid, _ in items:
        if pid in seen:
            raise DuplicatePointError(f"duplicate point_id {pid!r}")
        seen.add(pid)
    if items:
        ids = items[0][1].ids
        for pid, vec in items:
            if vec.ids != ids:
                raise MetricMismatchError(
                    f"point {pid!r} covers {sorted(vec.ids)}, expected {sorted(ids)}"
                )
        extra = ids - space.ids
        if extra:
            raise UnknownDimensionError(f"metrics not in space: {sorted(extra)}")
    return items


def _dominated_mask(items: list[tuple[str, MetricVector]], space: MetricSpace) -> np.ndarray:
    """Boolean mask, True where the point is dominated by some other point.

    Vectorized pairwise scan: every metric is flipped to higher-is-better,
    then point i is dominated iff some j is >= in all dimensions and > in
    at least one. float64 keeps the comparisons exact for Python floats.
    """
    n = len(items)
    ids = sorted(items[0][1].ids)
    sign = np.array(
        [1.0 if space.direction_of(m) is Direction.MAXIMIZE else -1.0 for m in ids]
    )
    matrix = np.array([[vec[m] for m in ids] for _, vec in items]) * sign
    dominated = np.zeros(n, dtype=bool)
    for start in range(0, n, _BLOCK):
        block = matrix[start : start + _BLOCK]
        ge = (block[:, None, :] <= matrix[None, :, :]).all(axis=2)
        gt = (block[:, None, :] < matrix[None, :, :]).any(axis=2)
        dominated[start : start + _BLOCK] = (ge & gt).any(axis=1)
    return dominated


def compute_frontier(
    points: Iterable[tuple[str, MetricVector]], space: MetricSpace
) -> ParetoFrontier:
    """Frontier of the given points: exactly those dominated by no other.

    Duplicate vectors under distinct point_ids are all retained (equals are
    mutually non-dominating). Output is independent of input order; empty
    input yields an empty frontier.
    """
    items = _checked_points(points, space)
    if not items:
        return ParetoFrontier(space, ())
    dominated = _dominated_mask(items, space)
    members = sorted(
        (item for item, dead in zip(items, dominated) if not dead),
        key=lambda item: item[0],
    )
    return ParetoFrontier(space, tuple(members))


def insert_incremental(
    frontier: ParetoFrontier, point_id: str, vector: MetricVector
) -> tuple[ParetoFrontier, list[FrontierEvent]]:
    """Fold one point into a frontier, reporting every membership change.

    The result always equals compute_frontier over (members + new point).
    Events are either a single rejected_dominated, or one entered followed
    by a displaced event (cause = the new point) per evicted member.
    """
    if point_id in frontier.member_ids:
        raise DuplicatePointError(f"point_id {point_id!r} already on frontier")
    expected = frontier.metric_ids
    if expected is not None and vector.ids != expected:
        raise MetricMismatchError(
            f"vector covers {sorted(vector.ids)}, frontier tracks {sorted(expected)}"
        )
    extra = vector.ids - frontier.space.ids
    if extra:
        raise UnknownDimensionError(f"metrics not in space: {sorted(extra)}")

    for member_id, member_vec in frontier.members:
        if dominates(member_vec, vector, frontier.space):
            event = FrontierEvent(EventKind.REJECTED_DOMINATED, point_id, member_id)
            return frontier, [event]

    events = [FrontierEvent(EventKind.ENTERED, point_id)]
    survivors: list[tuple[str, MetricVector]] = []
    for member_id, member_vec in frontier.members:
        if dominates(vector, member_vec, frontier.space):
            events.append(FrontierEvent(EventKind.DISPLACED, member_id, point_id))
        else:
            survivors.append((member_id, member_vec))
    survivors.append((point_id, vector))
    survivors.sort(key=lambda item: item[0])
    return ParetoFrontier(frontier.space, tuple(survivors)), events


def project(
    points: Iterable[tuple[str, MetricVector]],
    space: MetricSpace,
    dim_x: str,
    dim_y: str,
) -> ParetoFrontier:
    """Frontier of the points restricted to two chosen dimensions.

    A point dominated in the full space may be optimal in a 2-D projection
    and vice versa, so the frontier is recomputed in the projected space.
    Points missing either dimension are excluded, never imputed.
    """
    sub = space.subspace(dim_x, dim_y)
    kept = [
        (pid, vec.restrict((dim_x, dim_y)))
        for pid, vec in points
        if dim_x in vec and dim_y in vec
    ]
    return compute_frontier(kept, sub)


def distance_to_frontier(
    vector: MetricVector, frontier: ParetoFrontier, space: MetricSpace
) -> float:
    """Closeness of a vector to the frontier: 0 exactly on the non-dominated set.

    Dominated vectors get the minimum Chebyshev (max-coordinate) distance to
    any member after per-dimension min-max normalization over the members
    plus the vector itself, which keeps the value bounded and unit-free.
    """
    if not frontier.members:
        raise EmptyFrontierError("distance undefined for an empty frontier")
    expected = frontier.metric_ids
    if vector.ids != expected:
        raise MetricMismatchError(
            f"vector covers {sorted(vector.ids)}, frontier tracks {sorted(expected or ())}"
        )
    if not any(dominates(mvec, vector, space) for _, mvec in frontier.members):
        return 0.0

    ids = sorted(vector.ids)
    spans: dict[str, tuple[float, float]] = {}
    for metric_id in ids:
        values = [vec[metric_id] for _, vec in frontier.members] + [vector[metric_id]]
        spans[metric_id] = (min(values), max(values))

    def normalized(value: float, metric_id: str) -> float:
        lo, hi = spans[metric_id]
        if hi == lo:
            return 0.0
        return (value - lo) / (hi - lo)

    best = math.inf
    for _, member_vec in frontier.members:
        chebyshev = max(
            abs(normalized(vector[m], m) - normalized(member_vec[m], m)) for m in ids
        )
        best = min(best, chebyshev)
    return best
