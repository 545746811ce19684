"""Scale-free IR for distributed index tasks.

Stores are distributed dense arrays described by metadata only; partitions map
launch-domain points to rectangular sub-stores without ever enumerating them,
so every query here runs in time independent of the launch-domain volume.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Sequence

Point = tuple[int, ...]


class MalformedPartitionError(ValueError):
    """Partition rank/projection does not fit the store or launch point."""


@dataclass(frozen=True)
class Domain:
    """Rectangular index space with exclusive per-dimension upper bounds."""

    extents: tuple[int, ...]

    def __post_init__(self) -> None:
        if not all(isinstance(e, int) and e > 0 for e in self.extents):
            raise ValueError(f"domain extents must be positive ints: {self.extents}")

    @property
    def rank(self) -> int:
        return len(self.extents)

    @property
    def volume(self) -> int:
        v = 1
        for e in self.extents:
            v *= e
        return v

    def contains(self, p: Point) -> bool:
        return len(p) == self.rank and all(0 <= c < e for c, e in zip(p, self.extents))

    def points(self) -> Iterator[Point]:
        """All points in lexicographic order."""
        return itertools.product(*(range(e) for e in self.extents))


@dataclass(frozen=True)
class Store:
    """Distributed array descriptor: unique id plus a fixed rectangular shape."""

    id: int
    shape: Domain

    @property
    def rank(self) -> int:
        return self.shape.rank


StoreTable = Mapping[int, Store]


@dataclass(frozen=True)
class ProjectionFn:
    """Integer affine map ``p -> A @ p + b`` applied to launch points.

    Covers identity, dimension dropping, broadcast and permutation; equality is
    structural on (A, b), which keeps partition comparison constant-time.
    """

    matrix: tuple[tuple[int, ...], ...]
    offset: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.matrix) != len(self.offset):
            raise MalformedPartitionError("projection matrix rows must match offset length")
        widths = {len(row) for row in self.matrix}
        if len(widths) > 1:
            raise MalformedPartitionError("ragged projection matrix")

    @property
    def out_rank(self) -> int:
        return len(self.matrix)

    @property
    def in_rank(self) -> int:
        return len(self.matrix[0]) if self.matrix else 0

    @classmethod
    def identity(cls, rank: int) -> "ProjectionFn":
        rows = tuple(tuple(1 if i == j else 0 for j in range(rank)) for i in range(rank))
        return cls(rows, (0,) * rank)

    @property
    def is_identity(self) -> bool:
        if self.in_rank != self.out_rank:
            return False
        return self == ProjectionFn.identity(self.out_rank)

    def apply(self, p: Point) -> Point:
        if len(p) != self.in_rank:
            raise MalformedPartitionError(
                f"projection expects rank {self.in_rank}, got point of rank {len(p)}"
            )
        return tuple(sum(a * c for a, c in zip(row, p)) + b for row, b in zip(self.matrix, self.offset))


@dataclass(frozen=True)
class NonePart:
    """Replication: every launch point maps to the entire store."""


@dataclass(frozen=True)
class Tiling:
    """Affine tiling: point p covers ``[proj(p)*tile, proj(p+1)*tile) + offset``."""

    tile: tuple[int, ...]
    offset: tuple[int, ...]
    proj: ProjectionFn

    def __post_init__(self) -> None:
        if not (len(self.tile) == len(self.offset) == self.proj.out_rank):
            raise MalformedPartitionError("tile, offset and projection output rank must agree")


Partition = NonePart | Tiling


def partition_eq(a: Partition, b: Partition) -> bool:
    """Structural partition equality; inequality is read as "may alias"."""
    return a == b


class Privilege(Enum):
    READ = "R"
    WRITE = "W"
    REDUCE = "Rd"  # combine operator fixed to sum
    READ_WRITE = "RW"

    @property
    def is_read(self) -> bool:
        return self in (Privilege.READ, Privilege.READ_WRITE)

    @property
    def is_write(self) -> bool:
        return self in (Privilege.WRITE, Privilege.READ_WRITE)

    @property
    def is_reduce(self) -> bool:
        return self is Privilege.REDUCE


def join_privileges(a: Privilege, b: Privilege) -> Privilege:
    """Least upper bound of two access modes on the same (store, partition)."""
    if a == b:
        return a
    if Privilege.REDUCE in (a, b):
        raise ValueError("Reduce cannot be joined with other privileges")
    return Privilege.READ_WRITE


@dataclass(frozen=True)
class StoreArg:
    store: int
    partition: Partition
    privilege: Privilege


@dataclass(frozen=True)
class IndexTask:
    """A group of parallel point tasks over a rectangular launch domain."""

    kind: str
    domain: Domain
    args: tuple[StoreArg, ...]
    scalars: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.args:
            raise ValueError("index task needs at least one store argument")
        effectful = [
            (a.store, a.partition)
            for a in self.args
            if a.privilege.is_write or a.privilege.is_reduce
        ]
        if len(effectful) != len(set(effectful)):
            raise ValueError("duplicate (store, partition) among W/RW/Rd arguments")


@dataclass(frozen=True)
class Rect:
    """Half-open rectangle in element coordinates."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.lo)

    @property
    def is_empty(self) -> bool:
        return any(h <= l for l, h in zip(self.lo, self.hi))

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(max(0, h - l) for l, h in zip(self.lo, self.hi))

    @property
    def volume(self) -> int:
        v = 1
        for e in self.extents:
            v *= e
        return v

    def intersect(self, other: "Rect") -> "Rect":
        return Rect(
            tuple(max(a, b) for a, b in zip(self.lo, other.lo)),
            tuple(min(a, b) for a, b in zip(self.hi, other.hi)),
        )

    def overlaps(self, other: "Rect") -> bool:
        if self.is_empty or other.is_empty:
            return False
        return not self.intersect(other).is_empty

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(l, h) for l, h in zip(self.lo, self.hi))

    def points(self) -> Iterator[Point]:
        return itertools.product(*(range(l, h) for l, h in zip(self.lo, self.hi)))

    @classmethod
    def full(cls, shape: Domain) -> "Rect":
        return cls((0,) * shape.rank, shape.extents)


@dataclass(frozen=True)
class SubStore:
    """Rectangular subset of a parent store assigned to one launch point."""

    parent: int
    bounds: Rect


def sub_store_bounds(store: Store, part: Partition, p: Point) -> SubStore:
    """Bounding box within ``store`` that ``part`` maps the launch point ``p`` to.

    Tiles are clamped to the store's bounds; empty sub-stores are legal.
    """
    if isinstance(part, NonePart):
        return SubStore(store.id, Rect.full(store.shape))
    if part.proj.out_rank != store.rank:
        raise MalformedPartitionError(
            f"partition maps into rank {part.proj.out_rank}, store {store.id} has rank {store.rank}"
        )
    q = part.proj.apply(p)
    q1 = part.proj.apply(tuple(c + 1 for c in p))
    lo = tuple(a * t + o for a, t, o in zip(q, part.tile, part.offset))
    hi = tuple(a * t + o for a, t, o in zip(q1, part.tile, part.offset))
    shape = store.shape.extents
    lo = tuple(min(max(l, 0), s) for l, s in zip(lo, shape))
    hi = tuple(min(max(h, 0), s) for h, s in zip(hi, shape))
    return SubStore(store.id, Rect(lo, hi))


def covers(store: Store, part: Partition, launch: Domain) -> bool:
    """Whether the union of sub-stores over ``launch`` is the whole store.

    Exact for NonePart and identity-projection tilings; conservatively false
    otherwise so temporary elimination never over-approximates coverage.
    """
    if isinstance(part, NonePart):
        return True
    if not part.proj.is_identity:
        return False
    if part.proj.out_rank != store.rank or launch.rank != store.rank:
        return False
    return all(
        o <= 0 and t * n + o >= s
        for t, o, n, s in zip(part.tile, part.offset, launch.extents, store.shape.extents)
    )


def reads(task: IndexTask, store: int, part: Partition) -> bool:
    """R(T, (S, P)): T has an argument on exactly (S, P) with a reading privilege."""
    return any(
        a.store == store and partition_eq(a.partition, part) and a.privilege.is_read
        for a in task.args
    )


def writes(task: IndexTask, store: int, part: Partition) -> bool:
    return any(
        a.store == store and partition_eq(a.partition, part) and a.privilege.is_write
        for a in task.args
    )


def reduces(task: IndexTask, store: int, part: Partition) -> bool:
    return any(
        a.store == store and partition_eq(a.partition, part) and a.privilege.is_reduce
        for a in task.args
    )


@dataclass(frozen=True)
class TaskWindow:
    """Buffered task sequence plus the application-reference state it was cut at."""

    tasks: tuple[IndexTask, ...]
    live_app_refs: frozenset[int] = frozenset()
    pending_after: tuple[IndexTask, ...] = ()
