"""JSON-lines stream format and benchmark stream generators.

One event per line: create_store, create_partition, index_task, drop_ref,
flush. The format round-trips through parse_trace/print_trace exactly, and
parsing validates ids, ranks and reference counts with line-numbered errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .ir import NonePart, Partition, ProjectionFn, Tiling

_PRIVS = ("R", "W", "Rd", "RW")


class TraceError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class CreateStore:
    id: int
    shape: tuple[int, ...]


@dataclass(frozen=True)
class CreatePartition:
    id: int
    store: int
    kind: str  # "none" | "tiling"
    tile: tuple[int, ...] | None = None
    offset: tuple[int, ...] | None = None
    proj: tuple[tuple[tuple[int, ...], ...], tuple[int, ...]] | None = None  # (A, b)


@dataclass(frozen=True)
class TaskEvent:
    kind: str
    domain: tuple[int, ...]
    args: tuple[tuple[int, int, str], ...]  # (store, partition id, privilege)
    scalars: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class DropRef:
    store: int


@dataclass(frozen=True)
class Flush:
    pass


Event = CreateStore | CreatePartition | TaskEvent | DropRef | Flush


def partition_from_event(ev: CreatePartition) -> Partition:
    if ev.kind == "none":
        return NonePart()
    assert ev.tile is not None and ev.offset is not None and ev.proj is not None
    matrix, offset_vec = ev.proj
    return Tiling(ev.tile, ev.offset, ProjectionFn(matrix, offset_vec))


# --- serialization -----------------------------------------------------------


def event_to_json(ev: Event) -> dict:
    if isinstance(ev, CreateStore):
        return {"event": "create_store", "id": ev.id, "shape": list(ev.shape)}
    if isinstance(ev, CreatePartition):
        out: dict = {
            "event": "create_partition",
            "id": ev.id,
            "store": ev.store,
            "kind": ev.kind,
        }
        if ev.kind == "tiling":
            out["tile"] = list(ev.tile or ())
            out["offset"] = list(ev.offset or ())
            matrix, b = ev.proj or ((), ())
            out["proj"] = {"A": [list(row) for row in matrix], "b": list(b)}
        return out
    if isinstance(ev, TaskEvent):
        return {
            "event": "index_task",
            "kind": ev.kind,
            "domain": list(ev.domain),
            "args": [{"store": s, "part": p, "priv": pr} for s, p, pr in ev.args],
            "scalars": {name: value for name, value in ev.scalars},
        }
    if isinstance(ev, DropRef):
        return {"event": "drop_ref", "store": ev.store}
    return {"event": "flush"}


def print_trace(events: Iterable[Event]) -> str:
    return "\n".join(json.dumps(event_to_json(ev)) for ev in events) + "\n"


def _require(cond: bool, line: int, msg: str) -> None:
    if not cond:
        raise TraceError(line, msg)


def _int_tuple(value: object, line: int, what: str) -> tuple[int, ...]:
    _require(isinstance(value, list) and all(isinstance(v, int) for v in value), line, f"{what} must be a list of integers")
    return tuple(value)  # type: ignore[arg-type]


def parse_trace(source: str | Iterable[str]) -> list[Event]:
    lines: Iterator[str] = iter(source.splitlines() if isinstance(source, str) else source)
    events: list[Event] = []
    stores: dict[int, tuple[int, ...]] = {}
    parts: dict[int, int] = {}  # partition id -> store id
    refcounts: dict[int, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TraceError(lineno, f"invalid JSON: {exc}") from exc
        _require(isinstance(obj, dict) and "event" in obj, lineno, "expected an object with an 'event' field")
        tag = obj["event"]
        if tag == "create_store":
            sid = obj.get("id")
            _require(isinstance(sid, int) and sid >= 0, lineno, "store id must be a non-negative integer")
            _require(sid not in stores, lineno, f"store id {sid} already defined")
            shape = _int_tuple(obj.get("shape"), lineno, "shape")
            _require(all(e > 0 for e in shape), lineno, "shape extents must be positive")
            stores[sid] = shape
            refcounts[sid] = 1
            events.append(CreateStore(sid, shape))
        elif tag == "create_partition":
            pid, sid, kind = obj.get("id"), obj.get("store"), obj.get("kind")
            _require(isinstance(pid, int), lineno, "partition id must be an integer")
            _require(pid not in parts, lineno, f"partition id {pid} already defined")
            _require(sid in stores, lineno, f"unknown store {sid}")
            if kind == "none":
                events.append(CreatePartition(pid, sid, "none"))
            elif kind == "tiling":
                tile = _int_tuple(obj.get("tile"), lineno, "tile")
                offset = _int_tuple(obj.get("offset"), lineno, "offset")
                proj = obj.get("proj")
                _require(isinstance(proj, dict) and "A" in proj and "b" in proj, lineno, "tiling needs proj {A, b}")
                matrix = tuple(_int_tuple(row, lineno, "proj.A row") for row in proj["A"])
                b = _int_tuple(proj["b"], lineno, "proj.b")
                rank = len(stores[sid])
                _require(len(tile) == len(offset) == len(matrix) == len(b) == rank, lineno, f"tiling rank must match store rank {rank}")
                _require(all(t > 0 for t in tile), lineno, "tile extents must be positive")
                events.append(CreatePartition(pid, sid, "tiling", tile, offset, (matrix, b)))
            else:
                raise TraceError(lineno, f"unknown partition kind {kind!r}")
            parts[pid] = sid
        elif tag == "index_task":
            kind = obj.get("kind")
            _require(isinstance(kind, str) and kind != "", lineno, "task kind must be a nonempty string")
            domain = _int_tuple(obj.get("domain"), lineno, "domain")
            _require(len(domain) >= 1 and all(e > 0 for e in domain), lineno, "domain extents must be positive")
            raw_args = obj.get("args")
            _require(isinstance(raw_args, list) and raw_args, lineno, "args must be a nonempty list")
            args = []
            for a in raw_args:
                _require(isinstance(a, dict), lineno, "each arg must be an object")
                s, p, pr = a.get("store"), a.get("part"), a.get("priv")
                _require(s in stores, lineno, f"unknown store {s}")
                _require(p in parts, lineno, f"unknown partition {p}")
                _require(parts[p] == s, lineno, f"partition {p} belongs to store {parts[p]}, not {s}")
                _require(pr in _PRIVS, lineno, f"malformed privilege {pr!r}")
                args.append((s, p, pr))
            raw_scalars = obj.get("scalars", {})
            _require(isinstance(raw_scalars, dict), lineno, "scalars must be an object")
            scalars = tuple((k, float(v)) for k, v in raw_scalars.items())
            events.append(TaskEvent(kind, domain, tuple(args), scalars))
        elif tag == "drop_ref":
            sid = obj.get("store")
            _require(sid in stores, lineno, f"unknown store {sid}")
            refcounts[sid] -= 1
            _require(refcounts[sid] >= 0, lineno, f"reference underflow on store {sid}")
            events.append(DropRef(sid))
        elif tag == "flush":
            events.append(Flush())
        else:
            raise TraceError(lineno, f"unknown event {tag!r}")
    return events


# --- benchmark generators ----------------------------------------------------


def _identity_proj(rank: int) -> tuple[tuple[tuple[int, ...], ...], tuple[int, ...]]:
    return (
        tuple(tuple(1 if i == j else 0 for j in range(rank)) for i in range(rank)),
        (0,) * rank,
    )


class _Builder:
    def __init__(self) -> None:
        self.events: list[Event] = []
        self._next_store = 0
        self._next_part = 0

    def store(self, shape: Sequence[int]) -> int:
        sid = self._next_store
        self._next_store += 1
        self.events.append(CreateStore(sid, tuple(shape)))
        return sid

    def none_part(self, store: int) -> int:
        pid = self._next_part
        self._next_part += 1
        self.events.append(CreatePartition(pid, store, "none"))
        return pid

    def tiling(self, store: int, tile: Sequence[int], offset: Sequence[int]) -> int:
        pid = self._next_part
        self._next_part += 1
        rank = len(tile)
        self.events.append(
            CreatePartition(pid, store, "tiling", tuple(tile), tuple(offset), _identity_proj(rank))
        )
        return pid

    def task(self, kind, domain, args, scalars=()) -> None:
        self.events.append(TaskEvent(kind, tuple(domain), tuple(args), tuple(scalars)))

    def drop(self, store: int) -> None:
        self.events.append(DropRef(store))

    def flush(self) -> None:
        self.events.append(Flush())


def gen_stencil(size: int = 34, nodes: int = 2, iters: int = 10) -> list[Event]:
    """Five-point averaging stencil over aliased interior views of one grid.

    Per iteration: four ADDs chaining the neighbor views, one scalar MULT into
    the work array, and a COPY of work back into the grid's center view.
    """
    m = size - 2
    if m % nodes:
        raise ValueError(f"interior size {m} must be divisible by nodes {nodes}")
    t = m // nodes
    b = _Builder()
    grid = b.store((size, size))
    work = b.store((m, m))
    p_center = b.tiling(grid, (t, t), (1, 1))
    p_north = b.tiling(grid, (t, t), (0, 1))
    p_east = b.tiling(grid, (t, t), (1, 2))
    p_west = b.tiling(grid, (t, t), (1, 0))
    p_south = b.tiling(grid, (t, t), (2, 1))
    p_work = b.tiling(work, (t, t), (0, 0))
    launch = (nodes, nodes)
    for _ in range(iters):
        tmp = [b.store((m, m)) for _ in range(4)]  # t1, t2, t3, avg
        pt = [b.tiling(s, (t, t), (0, 0)) for s in tmp]
        t1, t2, t3, avg = tmp
        b.task("ADD", launch, [(grid, p_center, "R"), (grid, p_north, "R"), (t1, pt[0], "W")])
        b.task("ADD", launch, [(t1, pt[0], "R"), (grid, p_east, "R"), (t2, pt[1], "W")])
        b.drop(t1)
        b.task("ADD", launch, [(t2, pt[1], "R"), (grid, p_west, "R"), (t3, pt[2], "W")])
        b.drop(t2)
        b.task("ADD", launch, [(t3, pt[2], "R"), (grid, p_south, "R"), (avg, pt[3], "W")])
        b.drop(t3)
        b.task("MULT", launch, [(avg, pt[3], "R"), (work, p_work, "W")], [("s", 0.2)])
        b.drop(avg)
        b.task("COPY", launch, [(work, p_work, "R"), (grid, p_center, "W")])
        b.flush()
    return b.events


def gen_blackscholes_chain(size: int = 1024, nodes: int = 4, iters: int = 4) -> list[Event]:
    """A 67-task elementwise chain per iteration over rank-1 stores.

    The operator cycle (negate, scale by 2, copy, scale by one half, negate)
    keeps every element exactly representable and bounded, so fused and
    unfused runs compare bit for bit.
    """
    if size % nodes:
        raise ValueError(f"size {size} must be divisible by nodes {nodes}")
    t = size // nodes
    b = _Builder()
    x = b.store((size,))
    y = b.store((size,))
    out = b.store((size,))
    px = b.tiling(x, (t,), (0,))
    py = b.tiling(y, (t,), (0,))
    pout = b.tiling(out, (t,), (0,))
    launch = (nodes,)
    cycle = ("NEG", "MULT", "COPY", "MULT", "NEG")
    for _ in range(iters):
        prev = b.store((size,))
        pprev = b.tiling(prev, (t,), (0,))
        b.task("ADD", launch, [(x, px, "R"), (y, py, "R"), (prev, pprev, "W")])
        for k in range(65):
            op = cycle[k % 5]
            cur = b.store((size,))
            pcur = b.tiling(cur, (t,), (0,))
            if op == "MULT":
                scale = 2.0 if k % 5 == 1 else 0.5
                b.task("MULT", launch, [(prev, pprev, "R"), (cur, pcur, "W")], [("s", scale)])
            else:
                b.task(op, launch, [(prev, pprev, "R"), (cur, pcur, "W")])
            b.drop(prev)
            prev, pprev = cur, pcur
        b.task("COPY", launch, [(prev, pprev, "R"), (out, pout, "W")])
        b.drop(prev)
        b.flush()
    return b.events


def gen_jacobi(size: int = 16, nodes: int = 4, iters: int = 5) -> list[Event]:
    """Jacobi-style update: opaque MATVEC, then residual and relaxed update.

    The MATVEC reads the iterate through replication, so only the two
    elementwise tasks fuse.
    """
    if size % nodes:
        raise ValueError(f"size {size} must be divisible by nodes {nodes}")
    t = size // nodes
    b = _Builder()
    mat = b.store((size, size))
    x = b.store((size,))
    rhs = b.store((size,))
    y = b.store((size,))
    n_mat = b.none_part(mat)
    n_x = b.none_part(x)
    n_y = b.none_part(y)
    p_x = b.tiling(x, (t,), (0,))
    p_y = b.tiling(y, (t,), (0,))
    p_rhs = b.tiling(rhs, (t,), (0,))
    launch = (nodes,)
    for _ in range(iters):
        r = b.store((size,))
        p_r = b.tiling(r, (t,), (0,))
        b.task("MATVEC", (1,), [(mat, n_mat, "R"), (x, n_x, "R"), (y, n_y, "W")])
        b.task("SUB", launch, [(rhs, p_rhs, "R"), (y, p_y, "R"), (r, p_r, "W")])
        b.task("AXPY", launch, [(r, p_r, "R"), (x, p_x, "RW")], [("w", 0.5)])
        b.drop(r)
        b.flush()
    return b.events


def gen_cg_like(size: int = 16, nodes: int = 4, iters: int = 5) -> list[Event]:
    """Conjugate-gradient-shaped iteration: 12 tasks mixing an opaque SPMV,
    dot-product reductions into rank-0 stores, ratio updates reading those
    scalars through replication, and an elementwise tail."""
    if size % nodes:
        raise ValueError(f"size {size} must be divisible by nodes {nodes}")
    t = size // nodes
    b = _Builder()
    mat = b.store((size, size))
    x = b.store((size,))
    r = b.store((size,))
    p = b.store((size,))
    q = b.store((size,))
    resid = b.store((size,))
    n_mat = b.none_part(mat)
    n_p = b.none_part(p)
    n_q = b.none_part(q)
    p_x = b.tiling(x, (t,), (0,))
    p_r = b.tiling(r, (t,), (0,))
    p_p = b.tiling(p, (t,), (0,))
    p_q = b.tiling(q, (t,), (0,))
    p_resid = b.tiling(resid, (t,), (0,))
    launch = (nodes,)
    for _ in range(iters):
        pq = b.store(())
        rs_old = b.store(())
        rs_new = b.store(())
        n_pq = b.none_part(pq)
        n_rso = b.none_part(rs_old)
        n_rsn = b.none_part(rs_new)
        w = [b.store((size,)) for _ in range(4)]
        pw = [b.tiling(s, (t,), (0,)) for s in w]
        b.task("SPMV", (1,), [(mat, n_mat, "R"), (p, n_p, "R"), (q, n_q, "W")])
        b.task("DOT", launch, [(p, p_p, "R"), (q, p_q, "R"), (pq, n_pq, "Rd")])
        b.task("DOT", launch, [(r, p_r, "R"), (r, p_r, "R"), (rs_old, n_rso, "Rd")])
        b.task("AXPY_RATIO", launch, [(p, p_p, "R"), (x, p_x, "RW"), (rs_old, n_rso, "R"), (pq, n_pq, "R")])
        b.task("AXMY_RATIO", launch, [(q, p_q, "R"), (r, p_r, "RW"), (rs_old, n_rso, "R"), (pq, n_pq, "R")])
        b.drop(pq)
        b.task("DOT", launch, [(r, p_r, "R"), (r, p_r, "R"), (rs_new, n_rsn, "Rd")])
        b.task("XPBY_RATIO", launch, [(r, p_r, "R"), (p, p_p, "RW"), (rs_new, n_rsn, "R"), (rs_old, n_rso, "R")])
        b.drop(rs_old)
        b.drop(rs_new)
        b.task("COPY", launch, [(r, p_r, "R"), (w[0], pw[0], "W")])
        b.task("NEG", launch, [(w[0], pw[0], "R"), (w[1], pw[1], "W")])
        b.drop(w[0])
        b.task("MULT", launch, [(w[1], pw[1], "R"), (w[2], pw[2], "W")], [("s", 2.0)])
        b.drop(w[1])
        b.task("ADD", launch, [(w[2], pw[2], "R"), (r, p_r, "R"), (w[3], pw[3], "W")])
        b.drop(w[2])
        b.task("COPY", launch, [(w[3], pw[3], "R"), (resid, p_resid, "W")])
        b.drop(w[3])
        b.flush()
    return b.events


BENCHMARKS = {
    "stencil": gen_stencil,
    "blackscholes_chain": gen_blackscholes_chain,
    "jacobi": gen_jacobi,
    "cg_like": gen_cg_like,
}


def gen_benchmark(name: str, size: int | None = None, nodes: int | None = None, iters: int | None = None) -> list[Event]:
    if name not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}")
    kwargs = {}
    if size is not None:
        kwargs["size"] = size
    if nodes is not None:
        kwargs["nodes"] = nodes
    if iters is not None:
        kwargs["iters"] = iters
    return BENCHMARKS[name](**kwargs)
