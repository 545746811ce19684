"""Windowed task-stream pipeline: buffer, fuse, demote temporaries, execute.

A Session ingests stream events, buffers index tasks into a window, and on
flush repeatedly carves the longest fusible prefix off the buffer, compiles a
fused kernel for it, demotes temporaries to task-local buffers, and executes.
Isomorphic windows replay memoized analysis results. The window grows
adaptively: whenever an entire flushed buffer fuses into one task, the window
doubles up to a cap, so long chains reach steady state after a few rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import logging

from .executor import (
    Builtin,
    Heap,
    default_builtins,
    execute_isolated,
    execute_task,
)
from .fusion import (
    AnalysisStats,
    build_fused_task,
    FusedTaskPlan,
    longest_fusible_prefix,
)
from .ir import Domain, IndexTask, Partition, Store, sub_store_bounds
from .kernels import Kernel, KernelRegistry, count_memory_traffic, default_registry, optimize, compose
from .memo import CanonicalStream, MemoCache, MemoEntry, canonicalize, extent_class
from .oracle import DEFAULT_ORACLE_CAP, oracle_fusible
from .temporaries import RefState, find_temporaries
from . import trace as tracefmt
from .ir import Privilege, StoreArg

log = logging.getLogger("diffusekit.pipeline")


class SoundnessError(AssertionError):
    """The brute-force oracle rejected an engine-accepted prefix."""


@dataclass
class SessionConfig:
    window: int = 10
    max_window: int = 256
    adaptive: bool = True
    fusion: bool = True
    memoize: bool = True
    temp_elim: bool = True
    oracle_check: bool = False
    isolated: bool = False
    execute: bool = True
    seed: int = 0


@dataclass
class FlushReport:
    explicit: bool
    tasks_in: int = 0
    tasks_out: int = 0
    fused_prefixes: list[int] = field(default_factory=list)
    temporaries: list[int] = field(default_factory=list)
    memo_hits: int = 0
    memo_misses: int = 0
    constraint_steps: int = 0
    loads: int = 0
    stores: int = 0
    verdicts: list[str] = field(default_factory=list)
    kernel_stats: list[tuple[int, int, int]] = field(default_factory=list)


@dataclass
class Report:
    tasks_in: int = 0
    tasks_out: int = 0
    fused_prefixes: list[int] = field(default_factory=list)
    temporaries_eliminated: list[int] = field(default_factory=list)
    memo_hits: int = 0
    memo_misses: int = 0
    constraint_steps: int = 0
    loads: int = 0
    stores: int = 0
    final_window: int = 0
    per_flush: list[FlushReport] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "tasks_in": self.tasks_in,
            "tasks_out": self.tasks_out,
            "fused_prefixes": list(self.fused_prefixes),
            "temporaries_eliminated": list(self.temporaries_eliminated),
            "memo_hits": self.memo_hits,
            "loads": self.loads,
            "stores": self.stores,
        }

    def summary(self) -> str:
        lines = [
            f"tasks: {self.tasks_in} -> {self.tasks_out}",
            f"fused prefixes: {self.fused_prefixes}",
            f"temporaries eliminated: {sorted(set(self.temporaries_eliminated))}",
            f"memo: {self.memo_hits} hits, {self.memo_misses} misses",
            f"traffic: {self.loads} loads, {self.stores} stores",
            f"final window: {self.final_window}",
        ]
        for i, fr in enumerate(self.per_flush):
            for v in fr.verdicts:
                lines.append(f"flush {i}: stopped by {v}")
        return "\n".join(lines)


@dataclass
class SegmentPlan:
    """One carved prefix: the task to run and how to run it."""

    f: int
    task: IndexTask
    kernel: Kernel | None
    temp_positions: frozenset[int]
    temp_stores: frozenset[int]
    from_memo: bool


class Session:
    def __init__(
        self,
        config: SessionConfig | None = None,
        registry: KernelRegistry | None = None,
        builtins: Mapping[str, Builtin] | None = None,
    ) -> None:
        self.config = config or SessionConfig()
        self.registry = registry or default_registry()
        self.builtins = dict(builtins) if builtins is not None else default_builtins()
        self.stores: dict[int, Store] = {}
        self.partitions: dict[int, Partition] = {}
        self.refs = RefState()
        self.heap = Heap(self.stores, self.config.seed)
        self.memo = MemoCache()
        self.stats = AnalysisStats()
        self.window = self.config.window
        self.report = Report()
        self._buffer: list[IndexTask] = []
        self._finished = False

    # --- stream-facing API ---------------------------------------------------

    def create_store(self, store_id: int, extents: Sequence[int]) -> Store:
        if store_id in self.stores:
            raise ValueError(f"store id {store_id} already exists")
        store = Store(store_id, Domain(tuple(extents)))
        self.stores[store_id] = store
        self.refs.create(store_id)
        return store

    def create_partition(self, part_id: int, part: Partition) -> None:
        if part_id in self.partitions:
            raise ValueError(f"partition id {part_id} already exists")
        self.partitions[part_id] = part

    def submit(self, task: IndexTask) -> None:
        for a in task.args:
            if a.store not in self.stores:
                raise ValueError(f"task {task.kind} names unknown store {a.store}")
        self.report.tasks_in += 1
        self._buffer.append(task)
        for s in {a.store for a in task.args}:
            self.refs.acquire_runtime(s)
        if len(self._buffer) >= self.window:
            self._flush(explicit=False)

    def drop_ref(self, store_id: int) -> None:
        self.refs.drop_app_ref(store_id)
        self._maybe_free(store_id)

    def flush(self) -> None:
        self._flush(explicit=True)

    def finish(self) -> Report:
        if not self._finished:
            self._flush(explicit=True)
            self.report.final_window = self.window
            self._finished = True
        return self.report

    def live_store_ids(self) -> list[int]:
        return sorted(s for s, n in self.refs.app_refs.items() if n > 0)

    # --- window processing ---------------------------------------------------

    def _flush(self, explicit: bool) -> None:
        if not self._buffer:
            return
        rem = self._buffer
        self._buffer = []
        fr = FlushReport(explicit=explicit, tasks_in=len(rem))
        steps0 = self.stats.constraint_steps
        hits0, miss0 = self.memo.hits, self.memo.misses
        whole_buffer = len(rem)
        first_f: int | None = None
        while rem:
            plan = self._analyze(rem, fr)
            if first_f is None:
                first_f = plan.f
            self._execute(plan, fr)
            for t in rem[: plan.f]:
                for s in {a.store for a in t.args}:
                    self.refs.release_runtime(s)
                    self._maybe_free(s)
            rem = rem[plan.f :]
        fr.constraint_steps = self.stats.constraint_steps - steps0
        fr.memo_hits = self.memo.hits - hits0
        fr.memo_misses = self.memo.misses - miss0
        if (
            self.config.adaptive
            and self.config.fusion
            and whole_buffer > 1
            and first_f == whole_buffer
        ):
            self.window = min(self.window * 2, self.config.max_window)
        log.debug(
            "flush(%s): %d -> %d tasks, prefixes %s, window now %d",
            "explicit" if explicit else "full",
            fr.tasks_in,
            fr.tasks_out,
            fr.fused_prefixes,
            self.window,
        )
        self.report.per_flush.append(fr)
        self.report.tasks_out += fr.tasks_out
        self.report.fused_prefixes.extend(fr.fused_prefixes)
        self.report.temporaries_eliminated.extend(fr.temporaries)
        self.report.loads += fr.loads
        self.report.stores += fr.stores
        self.report.memo_hits = self.memo.hits
        self.report.memo_misses = self.memo.misses
        self.report.constraint_steps = self.stats.constraint_steps

    def _analyze(self, rem: list[IndexTask], fr: FlushReport) -> SegmentPlan:
        if not self.config.fusion:
            return SegmentPlan(1, rem[0], None, frozenset(), frozenset(), False)
        key: CanonicalStream | None = None
        sbind: list[int] = []
        if self.config.memoize:
            live = {s for s, n in self.refs.app_refs.items() if n > 0}
            key, sbind, _ = canonicalize(rem, self.stores, live)
            entry = self.memo.lookup(key)
            if entry is not None:
                return self._replay(rem, entry, sbind)
        f, verdicts = longest_fusible_prefix(rem, self.registry, self.stats)
        fr.verdicts.extend(v.describe() for v in verdicts)
        temps: frozenset[int] = frozenset()
        positions: frozenset[int] = frozenset()
        kernel: Kernel | None = None
        task = rem[0]
        if f > 1:
            if self.config.temp_elim:
                temps = frozenset(find_temporaries(rem, f, (), self.refs, self.stores))
            plan0 = build_fused_task(rem, f, self.registry)
            task = plan0.fused_task
            positions = frozenset(
                j for j, a in enumerate(task.args) if a.store in temps
            )
            kernel = self._compile(rem[:f], plan0, positions)
            if self.config.oracle_check:
                self._cross_check(rem[:f])
        if self.config.memoize and key is not None:
            idx = {s: i for i, s in enumerate(sbind)}
            self.memo.insert(
                key,
                MemoEntry(f, frozenset(idx[s] for s in temps), positions, kernel),
            )
        return SegmentPlan(f, task, kernel, positions, temps, False)

    def _replay(self, rem: list[IndexTask], entry: MemoEntry, sbind: list[int]) -> SegmentPlan:
        f = entry.prefix_len
        if f == 1:
            return SegmentPlan(1, rem[0], None, frozenset(), frozenset(), True)
        plan0 = build_fused_task(rem, f, self.registry)
        temps = frozenset(sbind[i] for i in entry.temp_store_indices)
        return SegmentPlan(
            f, plan0.fused_task, entry.kernel, entry.temp_arg_positions, temps, True
        )

    def _compile(
        self, prefix: Sequence[IndexTask], plan0: FusedTaskPlan, temp_positions: frozenset[int]
    ) -> Kernel:
        kernels = [self.registry.generate(t) for t in prefix]
        fused = plan0.fused_task
        class_ids: dict[object, int] = {}
        classes: dict[int, int] = {}
        for j, a in enumerate(fused.args):
            cls = extent_class(self.stores[a.store], a.partition, fused.domain)
            classes[j] = class_ids.setdefault(cls, len(class_ids))
        composed = compose(
            kernels, plan0.arg_map, temp_positions, classes, len(fused.args)
        )
        return optimize(composed)

    def _cross_check(self, prefix: Sequence[IndexTask]) -> None:
        if prefix[0].domain.volume > DEFAULT_ORACLE_CAP:
            return
        if not oracle_fusible(list(prefix), self.stores):
            raise SoundnessError(
                f"oracle rejected engine-accepted prefix of {len(prefix)} tasks "
                f"starting with {prefix[0].kind}"
            )

    def _execute(self, plan: SegmentPlan, fr: FlushReport) -> None:
        fr.fused_prefixes.append(plan.f)
        fr.temporaries.extend(sorted(plan.temp_stores))
        kernel = plan.kernel
        names_fused = kernel is not None
        if kernel is None and self.registry.has(plan.task.kind):
            kernel = self.registry.generate(plan.task)
        if kernel is not None:
            loads, stores = self._traffic(kernel, plan.task, plan.temp_positions, names_fused)
            fr.loads += loads
            fr.stores += stores
            fr.kernel_stats.append((plan.f, len(kernel.nests), len(kernel.locals)))
        if self.config.execute:
            if plan.f > 1 and self.config.isolated:
                execute_isolated(
                    plan.task,
                    self.heap,
                    self.stores,
                    self.registry,
                    self.builtins,
                    plan.kernel,
                    plan.temp_positions,
                )
            else:
                execute_task(
                    plan.task,
                    self.heap,
                    self.stores,
                    self.registry,
                    self.builtins,
                    plan.kernel,
                    plan.temp_positions,
                )
        fr.tasks_out += 1

    def _traffic(
        self,
        kernel: Kernel,
        task: IndexTask,
        temp_positions: frozenset[int],
        fused_names: bool,
    ) -> tuple[int, int]:
        """Static whole-launch element traffic, using the first point's extents.

        Edge tiles of clamped partitions may differ; the count is exact for
        uniform tilings and an approximation otherwise.
        """
        p0 = tuple(0 for _ in range(task.domain.rank))
        shapes: dict[str, tuple[int, ...]] = {}
        for j, a in enumerate(task.args):
            sub = sub_store_bounds(self.stores[a.store], a.partition, p0)
            if j in temp_positions:
                shapes[f"l{j}"] = sub.bounds.extents
            else:
                shapes[("b" if fused_names else "a") + str(j)] = sub.bounds.extents
        loads, stores = count_memory_traffic(kernel, shapes)
        vol = task.domain.volume
        return loads * vol, stores * vol

    def _maybe_free(self, store_id: int) -> None:
        if not self.refs.live(store_id):
            self.heap.free(store_id)


def task_from_event(session: Session, ev: tracefmt.TaskEvent) -> IndexTask:
    args = tuple(
        StoreArg(s, session.partitions[p], Privilege(pr)) for s, p, pr in ev.args
    )
    return IndexTask(ev.kind, Domain(ev.domain), args, ev.scalars)


def run_events(session: Session, events: Iterable[tracefmt.Event]) -> Report:
    """Drive a session from parsed trace events and return its final report."""
    for ev in events:
        if isinstance(ev, tracefmt.CreateStore):
            session.create_store(ev.id, ev.shape)
        elif isinstance(ev, tracefmt.CreatePartition):
            session.create_partition(ev.id, tracefmt.partition_from_event(ev))
        elif isinstance(ev, tracefmt.TaskEvent):
            session.submit(task_from_event(session, ev))
        elif isinstance(ev, tracefmt.DropRef):
            session.drop_ref(ev.store)
        elif isinstance(ev, tracefmt.Flush):
            session.flush()
        else:
            raise TypeError(f"unknown event {ev!r}")
    return session.finish()
