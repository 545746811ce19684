"""Detection of stores made temporary by fusion.

A store is temporary in a fused prefix when every read of it inside the
prefix is preceded by a covering same-partition write, no buffered or pending
task after the prefix reads or reduces it, and the application holds no live
reference. Such stores are demoted to task-local buffers and never
materialize as distributed data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .ir import IndexTask, StoreTable, covers, partition_eq


class RefUnderflowError(ValueError):
    """A reference was dropped more times than it was held."""


@dataclass
class RefState:
    """Split reference counts: application-held vs. runtime-held (buffered tasks)."""

    app_refs: dict[int, int] = field(default_factory=dict)
    runtime_refs: dict[int, int] = field(default_factory=dict)

    def create(self, store_id: int) -> None:
        if store_id in self.app_refs:
            raise ValueError(f"store id {store_id} already created")
        self.app_refs[store_id] = 1

    def add_app_ref(self, store_id: int) -> None:
        self.app_refs[store_id] = self.app_refs.get(store_id, 0) + 1

    def drop_app_ref(self, store_id: int) -> None:
        n = self.app_refs.get(store_id, 0)
        if n <= 0:
            raise RefUnderflowError(f"application reference underflow on store {store_id}")
        self.app_refs[store_id] = n - 1

    def acquire_runtime(self, store_id: int) -> None:
        self.runtime_refs[store_id] = self.runtime_refs.get(store_id, 0) + 1

    def release_runtime(self, store_id: int) -> None:
        n = self.runtime_refs.get(store_id, 0)
        if n <= 0:
            raise RefUnderflowError(f"runtime reference underflow on store {store_id}")
        self.runtime_refs[store_id] = n - 1

    def live(self, store_id: int) -> bool:
        return self.app_refs.get(store_id, 0) > 0 or self.runtime_refs.get(store_id, 0) > 0


def find_temporaries(
    tasks: Sequence[IndexTask],
    f: int,
    pending_after: Iterable[IndexTask],
    refs: RefState,
    stores: StoreTable,
) -> set[int]:
    """Stores demotable to task-local buffers in the fusion of tasks[:f].

    ``pending_after`` is whatever the runtime knows will follow the prefix:
    the rest of the buffered window plus any declared future tasks. A store
    that is only written after the prefix is still demotable; the later write
    re-creates its distributed state.
    """
    prefix = tasks[:f]
    launch = prefix[0].domain
    later = list(tasks[f:]) + list(pending_after)

    candidates = {a.store for t in prefix for a in t.args}
    result: set[int] = set()
    for s in candidates:
        if refs.app_refs.get(s, 0) > 0:
            continue
        if any(
            a.store == s and (a.privilege.is_read or a.privilege.is_reduce)
            for t in later
            for a in t.args
        ):
            continue
        if _reads_all_preceded_by_covering_writes(prefix, s, launch, stores):
            result.add(s)
    return result


def _reads_all_preceded_by_covering_writes(prefix, s, launch, stores) -> bool:
    for j, t in enumerate(prefix):
        for a in t.args:
            if a.store != s or not a.privilege.is_read:
                continue
            if not covers(stores[s], a.partition, launch):
                return False
            if not any(
                b.store == s and b.privilege.is_write and partition_eq(b.partition, a.partition)
                for ti in prefix[:j]
                for b in ti.args
            ):
                return False
    return True
