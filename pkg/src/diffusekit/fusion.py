"""Greedy scale-free identification of fusible task prefixes.

Four constraints rule out any non-point-wise dependence between index tasks:
equal launch domains, no write followed by a differently-partitioned read or
write of the same store, no read followed by a differently-partitioned write,
and no store that is both reduced and read/written by distinct tasks. The
true/anti checks are a forward dataflow pass over the window; no check ever
touches individual launch-domain points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .ir import (
    Domain,
    IndexTask,
    Partition,
    Privilege,
    StoreArg,
    join_privileges,
    partition_eq,
)
from .kernels import KernelRegistry


class FusionConstraint(Enum):
    LAUNCH_DOMAIN = "LaunchDomain"
    TRUE_DEP = "TrueDep"
    ANTI_DEP = "AntiDep"
    REDUCTION = "Reduction"
    NO_GENERATOR = "NoGenerator"


@dataclass(frozen=True)
class ConstraintVerdict:
    """Why prefix growth stopped at ``blocking_task_index``."""

    constraint: FusionConstraint
    blocking_task_index: int
    store: int | None = None
    partitions: tuple[Partition, Partition] | None = None

    def describe(self) -> str:
        msg = f"{self.constraint.value} at task {self.blocking_task_index}"
        if self.store is not None:
            msg += f" on store {self.store}"
        if self.partitions is not None:
            msg += f" partitions {self.partitions[0]} vs {self.partitions[1]}"
        return msg


@dataclass
class AnalysisStats:
    """Operation counter; must stay independent of launch-domain volume."""

    constraint_steps: int = 0


class PrefixTracker:
    """Forward dataflow state over a candidate prefix."""

    def __init__(self) -> None:
        self.domain: Domain | None = None
        self.written: dict[int, list[Partition]] = {}
        self.read: dict[int, list[Partition]] = {}
        self.reduced_by: dict[int, set[int]] = {}
        self.readwrite_by: dict[int, set[int]] = {}

    def admit(self, task: IndexTask, index: int, stats: AnalysisStats) -> ConstraintVerdict | None:
        """Check all constraints for appending ``task``; apply effects on success."""
        stats.constraint_steps += 1
        if self.domain is None:
            self.domain = task.domain
        elif task.domain != self.domain:
            return ConstraintVerdict(FusionConstraint.LAUNCH_DOMAIN, index)

        for arg in task.args:
            stats.constraint_steps += 1
            s = arg.store
            if arg.privilege.is_read or arg.privilege.is_write:
                for p in self.written.get(s, ()):
                    stats.constraint_steps += 1
                    if not partition_eq(p, arg.partition):
                        return ConstraintVerdict(
                            FusionConstraint.TRUE_DEP, index, s, (p, arg.partition)
                        )
                others = self.reduced_by.get(s, set()) - {index}
                if others:
                    return ConstraintVerdict(FusionConstraint.REDUCTION, index, s)
            if arg.privilege.is_write:
                for p in self.read.get(s, ()):
                    stats.constraint_steps += 1
                    if not partition_eq(p, arg.partition):
                        return ConstraintVerdict(
                            FusionConstraint.ANTI_DEP, index, s, (p, arg.partition)
                        )
            if arg.privilege.is_reduce:
                others = self.readwrite_by.get(s, set()) - {index}
                if others:
                    return ConstraintVerdict(FusionConstraint.REDUCTION, index, s)

        self._apply(task, index)
        return None

    def _apply(self, task: IndexTask, index: int) -> None:
        for arg in task.args:
            s = arg.store
            if arg.privilege.is_write:
                parts = self.written.setdefault(s, [])
                if not any(partition_eq(p, arg.partition) for p in parts):
                    parts.append(arg.partition)
            if arg.privilege.is_read:
                parts = self.read.setdefault(s, [])
                if not any(partition_eq(p, arg.partition) for p in parts):
                    parts.append(arg.partition)
            if arg.privilege.is_read or arg.privilege.is_write:
                self.readwrite_by.setdefault(s, set()).add(index)
            if arg.privilege.is_reduce:
                self.reduced_by.setdefault(s, set()).add(index)


def check_launch_domain(tasks: Sequence[IndexTask]) -> bool:
    return all(t.domain == tasks[0].domain for t in tasks)


def check_true_dependence(tasks: Sequence[IndexTask]) -> bool:
    """No write of (S, P) followed by a read or write of S via P' != P."""
    written: dict[int, list[Partition]] = {}
    for t in tasks:
        for arg in t.args:
            if arg.privilege.is_read or arg.privilege.is_write:
                if any(not partition_eq(p, arg.partition) for p in written.get(arg.store, ())):
                    return False
        for arg in t.args:
            if arg.privilege.is_write:
                written.setdefault(arg.store, []).append(arg.partition)
    return True


def check_anti_dependence(tasks: Sequence[IndexTask]) -> bool:
    """No read of (S, P) followed by a write of S via P' != P."""
    read: dict[int, list[Partition]] = {}
    for t in tasks:
        for arg in t.args:
            if arg.privilege.is_write:
                if any(not partition_eq(p, arg.partition) for p in read.get(arg.store, ())):
                    return False
        for arg in t.args:
            if arg.privilege.is_read:
                read.setdefault(arg.store, []).append(arg.partition)
    return True


def check_reduction(tasks: Sequence[IndexTask]) -> bool:
    """No store both reduced by one task and read/written by a different task."""
    reduced_by: dict[int, set[int]] = {}
    readwrite_by: dict[int, set[int]] = {}
    for i, t in enumerate(tasks):
        for arg in t.args:
            if arg.privilege.is_reduce:
                reduced_by.setdefault(arg.store, set()).add(i)
            if arg.privilege.is_read or arg.privilege.is_write:
                readwrite_by.setdefault(arg.store, set()).add(i)
    for s, reducers in reduced_by.items():
        rw = readwrite_by.get(s, set())
        if rw and not (len(reducers) == 1 and rw <= reducers):
            return False
    return True


def longest_fusible_prefix(
    tasks: Sequence[IndexTask],
    registry: KernelRegistry,
    stats: AnalysisStats | None = None,
) -> tuple[int, list[ConstraintVerdict]]:
    """Largest f with all constraints holding on tasks[:f]; always f >= 1.

    Growth stops at the first violation or at the first task without a kernel
    generator (an opaque task caps the prefix before itself; if it is the
    first task it passes through alone).
    """
    if not tasks:
        raise ValueError("empty task window")
    stats = stats if stats is not None else AnalysisStats()
    verdicts: list[ConstraintVerdict] = []
    if not registry.has(tasks[0].kind):
        if len(tasks) > 1:
            verdicts.append(ConstraintVerdict(FusionConstraint.NO_GENERATOR, 0))
        return 1, verdicts
    tracker = PrefixTracker()
    tracker.admit(tasks[0], 0, stats)
    f = 1
    for i in range(1, len(tasks)):
        if not registry.has(tasks[i].kind):
            verdicts.append(ConstraintVerdict(FusionConstraint.NO_GENERATOR, i))
            break
        v = tracker.admit(tasks[i], i, stats)
        if v is not None:
            verdicts.append(v)
            break
        f = i + 1
    return f, verdicts


@dataclass
class FusedTaskPlan:
    """Recipe for replacing tasks[:prefix_len] with one fused index task."""

    prefix_len: int
    fused_task: IndexTask
    arg_map: tuple[tuple[int, ...], ...]  # per original task: arg position -> fused position
    temporaries: frozenset[int] = frozenset()


def fused_kind_name(kinds: Sequence[str]) -> str:
    seen: list[str] = []
    for k in kinds:
        if k not in seen:
            seen.append(k)
    return "FUSED_" + "_".join(seen)


def build_fused_task(tasks: Sequence[IndexTask], f: int, registry: KernelRegistry) -> FusedTaskPlan:
    """Union the prefix's (store, partition) arguments with joined privileges."""
    prefix = tasks[:f]
    if f == 1:
        t = prefix[0]
        return FusedTaskPlan(1, t, (tuple(range(len(t.args))),))
    for t in prefix:
        if not registry.has(t.kind):
            raise ValueError(f"internal error: task kind {t.kind!r} has no generator")

    order: list[tuple[int, Partition]] = []
    privs: dict[tuple[int, Partition], Privilege] = {}
    arg_map: list[tuple[int, ...]] = []
    scalars: list[tuple[str, float]] = []
    for i, t in enumerate(prefix):
        positions = []
        for a in t.args:
            key = (a.store, a.partition)
            if key not in privs:
                privs[key] = a.privilege
                order.append(key)
            else:
                privs[key] = join_privileges(privs[key], a.privilege)
            positions.append(order.index(key))
        arg_map.append(tuple(positions))
        scalars.extend((f"s{i}_{k}", v) for k, (_, v) in enumerate(t.scalars))

    fused = IndexTask(
        fused_kind_name([t.kind for t in prefix]),
        prefix[0].domain,
        tuple(StoreArg(s, p, privs[(s, p)]) for s, p in order),
        tuple(scalars),
    )
    return FusedTaskPlan(f, fused, tuple(arg_map))
