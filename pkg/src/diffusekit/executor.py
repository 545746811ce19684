"""Reference execution of task streams over dense in-memory stores.

Two modes matter for verification. Sequential mode runs tasks in program
order, point tasks in lexicographic order, and is the semantic oracle. The
isolated mode executes every point task of one (possibly fused) index task
against private copies of exactly its own sub-stores, turning the point-wise
dependence property into an executable check: any cross-point data flow shows
up as an arena violation or a heap mismatch.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .ir import (
    IndexTask,
    Point,
    Rect,
    Store,
    StoreTable,
    sub_store_bounds,
)
from .kernels import Kernel, KernelRegistry, interpret


class ExecutionError(RuntimeError):
    pass


class UnknownTaskKindError(ExecutionError):
    """Task kind has neither a kernel generator nor a built-in semantic."""


class ArenaViolationError(ExecutionError):
    """A point task touched data claimed by a different point task."""


class Heap:
    """Lazy StoreId -> dense float64 array map.

    Arrays materialize on first access, filled with small deterministic
    integers derived from (seed, store id); allocation order therefore never
    affects contents, and stores demoted to task-local buffers simply never
    appear here.
    """

    def __init__(self, stores: StoreTable, seed: int = 0) -> None:
        self._stores = stores
        self._seed = seed
        self.arrays: dict[int, np.ndarray] = {}

    def get(self, store_id: int) -> np.ndarray:
        arr = self.arrays.get(store_id)
        if arr is None:
            shape = self._stores[store_id].shape.extents
            rng = np.random.default_rng([self._seed, store_id])
            arr = rng.integers(1, 10, size=shape).astype(np.float64)
            self.arrays[store_id] = arr
        return arr

    def materialized(self, store_id: int) -> bool:
        return store_id in self.arrays

    def free(self, store_id: int) -> None:
        self.arrays.pop(store_id, None)

    def digest(self, ids: Sequence[int]) -> dict[int, bytes]:
        """Byte-exact snapshots; materializes any listed store deterministically."""
        return {s: self.get(s).tobytes() for s in ids}

    def dump_text(self, ids: Sequence[int]) -> str:
        lines = []
        for s in sorted(ids):
            arr = self.get(s)
            lines.append(f"store {s} shape {arr.shape}:")
            lines.append(np.array2string(arr, precision=6))
        return "\n".join(lines)


def heap_diff(a: Heap, b: Heap, ids: Sequence[int]) -> list[int]:
    """Ids whose contents differ between the two heaps (byte comparison)."""
    da, db = a.digest(ids), b.digest(ids)
    return [s for s in ids if da[s] != db[s]]


# --- built-in semantics for opaque task kinds --------------------------------

Builtin = Callable[[IndexTask, dict[str, np.ndarray]], None]


def _builtin_matvec(task: IndexTask, bufs: dict[str, np.ndarray]) -> None:
    bufs["a2"][...] = bufs["a0"] @ bufs["a1"]


def _builtin_norm(task: IndexTask, bufs: dict[str, np.ndarray]) -> None:
    bufs["a1"][()] += float(np.sum(bufs["a0"] * bufs["a0"]))


def _builtin_opaque(task: IndexTask, bufs: dict[str, np.ndarray]) -> None:
    for i, arg in enumerate(task.args):
        if arg.privilege.is_write:
            bufs[f"a{i}"][...] += 1.0


def default_builtins() -> dict[str, Builtin]:
    return {
        "MATVEC": _builtin_matvec,
        "SPMV": _builtin_matvec,
        "NORM": _builtin_norm,
        "OPAQUE": _builtin_opaque,
    }


# --- binding helpers ---------------------------------------------------------


def _region(arr: np.ndarray, rect: Rect) -> np.ndarray:
    sl = rect.slices()
    return arr[sl] if sl else arr


def _scalar_env(kernel: Kernel, task: IndexTask) -> dict[str, float]:
    if len(kernel.scalar_params) != len(task.scalars):
        raise ExecutionError(
            f"task {task.kind} carries {len(task.scalars)} scalars, "
            f"kernel expects {len(kernel.scalar_params)}"
        )
    return {sp.name: value for sp, (_, value) in zip(kernel.scalar_params, task.scalars)}


def _point_bindings(
    task: IndexTask,
    p: Point,
    heap: Heap,
    stores: StoreTable,
    name_of: Callable[[int], str],
    temp_positions: frozenset[int],
) -> tuple[dict[str, np.ndarray], dict[str, tuple[int, ...]]]:
    bufs: dict[str, np.ndarray] = {}
    local_shapes: dict[str, tuple[int, ...]] = {}
    for j, a in enumerate(task.args):
        sub = sub_store_bounds(stores[a.store], a.partition, p)
        if j in temp_positions:
            local_shapes[f"l{j}"] = sub.bounds.extents
        else:
            bufs[name_of(j)] = _region(heap.get(a.store), sub.bounds)
    return bufs, local_shapes


def _fused_name(j: int) -> str:
    return f"b{j}"


def _plain_name(j: int) -> str:
    return f"a{j}"


# --- execution ---------------------------------------------------------------


def execute_task(
    task: IndexTask,
    heap: Heap,
    stores: StoreTable,
    registry: KernelRegistry,
    builtins: Mapping[str, Builtin],
    kernel: Kernel | None = None,
    temp_positions: frozenset[int] = frozenset(),
) -> None:
    """Run one index task point-by-point in lexicographic order.

    With an explicit ``kernel`` the task is treated as fused: buffer params are
    named b{j} by fused-arg position and positions in ``temp_positions`` bind
    as task-local buffers l{j} instead of heap regions.
    """
    if kernel is not None:
        name_of = _fused_name
    elif registry.has(task.kind):
        kernel = registry.generate(task)
        name_of = _plain_name
    elif task.kind in builtins:
        fn = builtins[task.kind]
        for p in task.domain.points():
            bufs, _ = _point_bindings(task, p, heap, stores, _plain_name, frozenset())
            fn(task, bufs)
        return
    else:
        raise UnknownTaskKindError(f"no generator or builtin for task kind {task.kind!r}")

    scalars = _scalar_env(kernel, task)
    for p in task.domain.points():
        bufs, local_shapes = _point_bindings(task, p, heap, stores, name_of, temp_positions)
        interpret(kernel, bufs, scalars, local_shapes)


def execute_sequential(
    tasks: Sequence[IndexTask],
    heap: Heap,
    stores: StoreTable,
    registry: KernelRegistry,
    builtins: Mapping[str, Builtin],
) -> None:
    for t in tasks:
        execute_task(t, heap, stores, registry, builtins)


def execute_isolated(
    task: IndexTask,
    heap: Heap,
    stores: StoreTable,
    registry: KernelRegistry,
    builtins: Mapping[str, Builtin],
    kernel: Kernel | None = None,
    temp_positions: frozenset[int] = frozenset(),
) -> None:
    """Execute with per-point private arenas, aborting on any shared touch.

    Writes claim store cells per point; overlapping write claims, or a read or
    reduction touching another point's claim, mean the points could not run
    without communication and raise ArenaViolationError. Execution then reads
    from a snapshot, so cross-point write visibility is impossible, and writes
    back W/RW regions and sum-combines Rd contributions in point order.
    """
    if kernel is not None:
        name_of = _fused_name
    elif registry.has(task.kind):
        kernel = registry.generate(task)
        name_of = _plain_name
    else:
        raise ExecutionError(f"isolated execution needs a kernel for kind {task.kind!r}")

    points = list(task.domain.points())
    subs = {
        p: [sub_store_bounds(stores[a.store], a.partition, p) for a in task.args]
        for p in points
    }
    claims: dict[int, np.ndarray] = {}
    for ordinal, p in enumerate(points):
        for j, a in enumerate(task.args):
            if j in temp_positions or not a.privilege.is_write:
                continue
            claim = claims.get(a.store)
            if claim is None:
                claim = np.full(stores[a.store].shape.extents, -1, dtype=np.int64)
                claims[a.store] = claim
            region = _region(claim, subs[p][j].bounds)
            if ((region != -1) & (region != ordinal)).any():
                raise ArenaViolationError(
                    f"write overlap on store {a.store} at point {p} of {task.kind}"
                )
            region[...] = ordinal
    for ordinal, p in enumerate(points):
        for j, a in enumerate(task.args):
            if j in temp_positions or a.privilege.is_write:
                continue
            claim = claims.get(a.store)
            if claim is None:
                continue
            region = _region(claim, subs[p][j].bounds)
            if ((region != -1) & (region != ordinal)).any():
                raise ArenaViolationError(
                    f"point {p} of {task.kind} reads store {a.store} cells "
                    f"written by another point"
                )

    touched = {a.store for j, a in enumerate(task.args) if j not in temp_positions}
    base = {s: heap.get(s).copy() for s in touched}
    scalars = _scalar_env(kernel, task)
    for p in points:
        bufs: dict[str, np.ndarray] = {}
        local_shapes: dict[str, tuple[int, ...]] = {}
        arenas: list[tuple[int, np.ndarray, Rect]] = []
        for j, a in enumerate(task.args):
            sub = subs[p][j]
            if j in temp_positions:
                local_shapes[f"l{j}"] = sub.bounds.extents
                continue
            if a.privilege.is_reduce:
                arena = np.zeros(sub.bounds.extents, dtype=np.float64)
            else:
                arena = np.array(_region(base[a.store], sub.bounds))
            bufs[name_of(j)] = arena
            arenas.append((j, arena, sub.bounds))
        interpret(kernel, bufs, scalars, local_shapes)
        for j, arena, rect in arenas:
            a = task.args[j]
            dest = _region(heap.get(a.store), rect)
            if a.privilege.is_reduce:
                dest[...] += arena
            elif a.privilege.is_write:
                dest[...] = arena
