"""Loop-based kernel language for task bodies.

Each task kind has a generator producing a small loop-nest program over its
point-local sub-store buffers. Fused task bodies are program-order
compositions of generated kernels; temporaries become local buffers, adjacent
compatible nests are merged, and same-index locals collapse to scalars.

Buffer extents stay symbolic: a nest iterates over the extents of a named
buffer, and concrete shapes are bound only at interpretation time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .ir import IndexTask, Privilege, join_privileges


class KernelError(Exception):
    pass


class NoGeneratorError(KernelError):
    """Task kind has no registered generator; acts as a fusion barrier."""


class PrivilegeViolationError(KernelError):
    pass


class OutOfBoundsError(KernelError):
    pass


# --- program representation -------------------------------------------------


@dataclass(frozen=True)
class BufParam:
    name: str
    rank: int
    privilege: Privilege


@dataclass(frozen=True)
class ScalarParam:
    name: str


@dataclass(frozen=True)
class LocalBuf:
    name: str
    rank: int


@dataclass(frozen=True)
class Load:
    buf: str
    offsets: tuple[int, ...]  # added to the loop indices; () for rank-0


@dataclass(frozen=True)
class ScalarRef:
    name: str


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class TempRef:
    name: str


@dataclass(frozen=True)
class Bin:
    op: str  # + - * / ** min max lt le eq
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Un:
    op: str  # neg
    x: "Expr"


@dataclass(frozen=True)
class Select:
    cond: "Expr"
    if_true: "Expr"
    if_false: "Expr"


Expr = Load | ScalarRef | Const | TempRef | Bin | Un | Select


@dataclass(frozen=True)
class SetTemp:
    name: str
    expr: Expr


@dataclass(frozen=True)
class StoreStmt:
    buf: str
    offsets: tuple[int, ...]
    expr: Expr


@dataclass(frozen=True)
class ReduceStmt:
    """Sum-accumulate the expression into a rank-0 buffer."""

    buf: str
    expr: Expr


Stmt = SetTemp | StoreStmt | ReduceStmt


@dataclass(frozen=True)
class LoopNest:
    domain: str  # buffer whose extents give the iteration bounds
    rank: int
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class Kernel:
    buf_params: tuple[BufParam, ...]
    scalar_params: tuple[ScalarParam, ...]
    locals: tuple[LocalBuf, ...]
    nests: tuple[LoopNest, ...]
    # buffer name -> hashable iteration-domain class; nests merge only within a class
    shape_class: Mapping[str, object] = field(default_factory=dict)

    def param(self, name: str) -> BufParam | None:
        for p in self.buf_params:
            if p.name == name:
                return p
        return None

    def buffer_names(self) -> set[str]:
        return {p.name for p in self.buf_params} | {l.name for l in self.locals}


# --- expression / statement walking ----------------------------------------


def _expr_loads(e: Expr) -> Iterable[Load]:
    if isinstance(e, Load):
        yield e
    elif isinstance(e, Bin):
        yield from _expr_loads(e.lhs)
        yield from _expr_loads(e.rhs)
    elif isinstance(e, Un):
        yield from _expr_loads(e.x)
    elif isinstance(e, Select):
        yield from _expr_loads(e.cond)
        yield from _expr_loads(e.if_true)
        yield from _expr_loads(e.if_false)


def _stmt_loads(s: Stmt) -> Iterable[Load]:
    yield from _expr_loads(s.expr)


def _nest_reads(nest: LoopNest) -> dict[str, list[tuple[int, ...]]]:
    out: dict[str, list[tuple[int, ...]]] = {}
    for s in nest.body:
        for ld in _stmt_loads(s):
            out.setdefault(ld.buf, []).append(ld.offsets)
    return out


def _nest_writes(nest: LoopNest) -> dict[str, list[tuple[int, ...]]]:
    out: dict[str, list[tuple[int, ...]]] = {}
    for s in nest.body:
        if isinstance(s, StoreStmt):
            out.setdefault(s.buf, []).append(s.offsets)
        elif isinstance(s, ReduceStmt):
            out.setdefault(s.buf, []).append(())
    return out


def _rename_expr(e: Expr, bufs: Mapping[str, str], scalars: Mapping[str, str]) -> Expr:
    if isinstance(e, Load):
        return Load(bufs.get(e.buf, e.buf), e.offsets)
    if isinstance(e, ScalarRef):
        return ScalarRef(scalars.get(e.name, e.name))
    if isinstance(e, Bin):
        return Bin(e.op, _rename_expr(e.lhs, bufs, scalars), _rename_expr(e.rhs, bufs, scalars))
    if isinstance(e, Un):
        return Un(e.op, _rename_expr(e.x, bufs, scalars))
    if isinstance(e, Select):
        return Select(
            _rename_expr(e.cond, bufs, scalars),
            _rename_expr(e.if_true, bufs, scalars),
            _rename_expr(e.if_false, bufs, scalars),
        )
    return e


def _rename_stmt(s: Stmt, bufs: Mapping[str, str], scalars: Mapping[str, str]) -> Stmt:
    if isinstance(s, SetTemp):
        return SetTemp(s.name, _rename_expr(s.expr, bufs, scalars))
    if isinstance(s, StoreStmt):
        return StoreStmt(bufs.get(s.buf, s.buf), s.offsets, _rename_expr(s.expr, bufs, scalars))
    return ReduceStmt(bufs.get(s.buf, s.buf), _rename_expr(s.expr, bufs, scalars))


# --- generators -------------------------------------------------------------

Generator = Callable[[IndexTask], Kernel]


class KernelRegistry:
    """task_kind -> generator(task) -> Kernel."""

    def __init__(self) -> None:
        self._gens: dict[str, Generator] = {}

    def register(self, kind: str, fn: Generator) -> None:
        self._gens[kind] = fn

    def has(self, kind: str) -> bool:
        return kind in self._gens

    def generate(self, task: IndexTask) -> Kernel:
        gen = self._gens.get(task.kind)
        if gen is None:
            raise NoGeneratorError(f"no kernel generator for task kind {task.kind!r}")
        kernel = gen(task)
        if len(kernel.buf_params) != len(task.args):
            raise KernelError(
                f"generator for {task.kind!r} produced {len(kernel.buf_params)} buffer params "
                f"for a task with {len(task.args)} arguments"
            )
        return kernel


def _arity(task: IndexTask, nargs: int, nscalars: int | None = None) -> None:
    if len(task.args) != nargs:
        raise KernelError(f"{task.kind}: expected {nargs} store args, got {len(task.args)}")
    if nscalars is not None and len(task.scalars) != nscalars:
        raise KernelError(f"{task.kind}: expected {nscalars} scalar params, got {len(task.scalars)}")


def _params(task: IndexTask) -> tuple[BufParam, ...]:
    # ranks are unknown to generators beyond what the store args imply; the
    # executor binds concrete sub-store arrays positionally
    return tuple(
        BufParam(f"a{i}", _arg_rank(task, i), a.privilege) for i, a in enumerate(task.args)
    )


def _arg_rank(task: IndexTask, i: int) -> int:
    # Partitions carry the store rank for tilings; NonePart args default to the
    # launch rank unless a tiling elsewhere in the task pins the store.
    part = task.args[i].partition
    if hasattr(part, "tile"):
        return len(part.tile)
    return task.domain.rank


def _elementwise(task: IndexTask, out: int, expr: Expr) -> Kernel:
    rank = _arg_rank(task, out)
    nest = LoopNest(f"a{out}", rank, (StoreStmt(f"a{out}", (0,) * rank, expr),))
    return Kernel(
        _params(task),
        tuple(ScalarParam(f"s{k}") for k in range(len(task.scalars))),
        (),
        (nest,),
    )


def _ld(i: int, rank: int) -> Load:
    return Load(f"a{i}", (0,) * rank)


def _binary_gen(op: str) -> Generator:
    def gen(task: IndexTask) -> Kernel:
        _arity(task, 3)
        r = _arg_rank(task, 2)
        return _elementwise(task, 2, Bin(op, _ld(0, r), _ld(1, r)))

    return gen


def _gen_mult(task: IndexTask) -> Kernel:
    if len(task.args) == 2:
        _arity(task, 2, 1)
        r = _arg_rank(task, 1)
        return _elementwise(task, 1, Bin("*", ScalarRef("s0"), _ld(0, r)))
    _arity(task, 3)
    r = _arg_rank(task, 2)
    return _elementwise(task, 2, Bin("*", _ld(0, r), _ld(1, r)))


def _gen_pow(task: IndexTask) -> Kernel:
    if len(task.args) == 2:
        _arity(task, 2, 1)
        r = _arg_rank(task, 1)
        return _elementwise(task, 1, Bin("**", _ld(0, r), ScalarRef("s0")))
    _arity(task, 3)
    r = _arg_rank(task, 2)
    return _elementwise(task, 2, Bin("**", _ld(0, r), _ld(1, r)))


def _gen_copy(task: IndexTask) -> Kernel:
    _arity(task, 2)
    r = _arg_rank(task, 1)
    return _elementwise(task, 1, _ld(0, r))


def _gen_neg(task: IndexTask) -> Kernel:
    _arity(task, 2)
    r = _arg_rank(task, 1)
    return _elementwise(task, 1, Un("neg", _ld(0, r)))


def _gen_fill(task: IndexTask) -> Kernel:
    _arity(task, 1, 1)
    r = _arg_rank(task, 0)
    return _elementwise(task, 0, ScalarRef("s0"))


def _gen_axpy(task: IndexTask) -> Kernel:
    # y = y + s * x with args (x: R, y: RW)
    _arity(task, 2, 1)
    r = _arg_rank(task, 1)
    return _elementwise(task, 1, Bin("+", _ld(1, r), Bin("*", ScalarRef("s0"), _ld(0, r))))


def _reduction(task: IndexTask, acc: int, expr: Expr) -> Kernel:
    rank = _arg_rank(task, 0)
    nest = LoopNest("a0", rank, (ReduceStmt(f"a{acc}", expr),))
    return Kernel(
        _params(task),
        tuple(ScalarParam(f"s{k}") for k in range(len(task.scalars))),
        (),
        (nest,),
    )


def _gen_dot(task: IndexTask) -> Kernel:
    _arity(task, 3)
    r = _arg_rank(task, 0)
    return _reduction(task, 2, Bin("*", _ld(0, r), _ld(1, r)))


def _gen_sum(task: IndexTask) -> Kernel:
    _arity(task, 2)
    return _reduction(task, 1, _ld(0, _arg_rank(task, 0)))


def _ratio_update(sign: str) -> Generator:
    # y = y +/- (num / den) * x with args (x: R, y: RW, num: R, den: R)
    def gen(task: IndexTask) -> Kernel:
        _arity(task, 4)
        r = _arg_rank(task, 1)
        ratio = Bin("/", Load("a2", ()), Load("a3", ()))
        return _elementwise(task, 1, Bin(sign, _ld(1, r), Bin("*", ratio, _ld(0, r))))

    return gen


def _gen_xpby_ratio(task: IndexTask) -> Kernel:
    # p = r + (num / den) * p with args (r: R, p: RW, num: R, den: R)
    _arity(task, 4)
    r = _arg_rank(task, 1)
    ratio = Bin("/", Load("a2", ()), Load("a3", ()))
    return _elementwise(task, 1, Bin("+", _ld(0, r), Bin("*", ratio, _ld(1, r))))


def default_registry() -> KernelRegistry:
    reg = KernelRegistry()
    reg.register("ADD", _binary_gen("+"))
    reg.register("SUB", _binary_gen("-"))
    reg.register("DIV", _binary_gen("/"))
    reg.register("MIN", _binary_gen("min"))
    reg.register("MAX", _binary_gen("max"))
    reg.register("MULT", _gen_mult)
    reg.register("POW", _gen_pow)
    reg.register("COPY", _gen_copy)
    reg.register("NEG", _gen_neg)
    reg.register("FILL", _gen_fill)
    reg.register("AXPY", _gen_axpy)
    reg.register("DOT", _gen_dot)
    reg.register("SUM", _gen_sum)
    reg.register("AXPY_RATIO", _ratio_update("+"))
    reg.register("AXMY_RATIO", _ratio_update("-"))
    reg.register("XPBY_RATIO", _gen_xpby_ratio)
    return reg


# --- composition ------------------------------------------------------------


def compose(
    kernels: Sequence[Kernel],
    arg_maps: Sequence[Sequence[int]],
    temp_arg_indices: frozenset[int],
    shape_classes: Mapping[int, object],
    n_fused_args: int,
) -> Kernel:
    """Concatenate kernel bodies with parameters unified per fused argument.

    Fused argument j becomes buffer ``b{j}``, or local ``l{j}`` when j is a
    demoted temporary. Scalars of kernel i become ``s{i}_{k}``.
    """
    buf_name = {
        j: (f"l{j}" if j in temp_arg_indices else f"b{j}") for j in range(n_fused_args)
    }
    nests: list[LoopNest] = []
    params: dict[int, BufParam] = {}
    scalar_params: list[ScalarParam] = []
    locals_: dict[int, LocalBuf] = {}
    for i, (kernel, amap) in enumerate(zip(kernels, arg_maps)):
        bmap: dict[str, str] = {}
        for k, p in enumerate(kernel.buf_params):
            j = amap[k]
            bmap[p.name] = buf_name[j]
            if j in temp_arg_indices:
                locals_.setdefault(j, LocalBuf(buf_name[j], p.rank))
            else:
                prev = params.get(j)
                priv = p.privilege
                if prev is not None:
                    priv = join_privileges(prev.privilege, priv)
                params[j] = BufParam(buf_name[j], p.rank, priv)
        smap = {sp.name: f"s{i}_{k}" for k, sp in enumerate(kernel.scalar_params)}
        scalar_params.extend(ScalarParam(v) for v in smap.values())
        for nest in kernel.nests:
            nests.append(LoopNest(bmap[nest.domain], nest.rank, tuple(_rename_stmt(s, bmap, smap) for s in nest.body)))
    shape_class = {buf_name[j]: shape_classes[j] for j in range(n_fused_args) if j in shape_classes}
    return Kernel(
        tuple(params[j] for j in sorted(params)),
        tuple(scalar_params),
        tuple(locals_[j] for j in sorted(locals_)),
        tuple(nests),
        shape_class,
    )


def _mergeable(a: LoopNest, b: LoopNest) -> bool:
    """Cross-nest dependences must all be at the same iteration point."""
    ra, wa = _nest_reads(a), _nest_writes(a)
    rb, wb = _nest_reads(b), _nest_writes(b)
    shared = (set(wa) & (set(rb) | set(wb))) | (set(ra) & set(wb))
    for buf in shared:
        for offs in ra.get(buf, []) + wa.get(buf, []) + rb.get(buf, []) + wb.get(buf, []):
            if any(o != 0 for o in offs):
                return False
    return True


def fuse_loops(kernel: Kernel) -> Kernel:
    """Merge adjacent nests with identical iteration domains and same-index deps."""
    if not kernel.nests:
        return kernel
    cls = dict(kernel.shape_class)

    def domain_key(nest: LoopNest) -> object:
        return cls.get(nest.domain, ("buf", nest.domain))

    merged = [kernel.nests[0]]
    for nest in kernel.nests[1:]:
        prev = merged[-1]
        if (
            nest.rank == prev.rank
            and domain_key(nest) == domain_key(prev)
            and _mergeable(prev, nest)
        ):
            merged[-1] = LoopNest(prev.domain, prev.rank, prev.body + nest.body)
        else:
            merged.append(nest)
    return replace(kernel, nests=tuple(merged))


def _domain_replacement(
    nest: LoopNest, gone: set[str], shape_class: Mapping[str, object]
) -> str | None:
    """A surviving buffer whose extents can stand in for the nest's domain.

    Prefers a buffer in the same shape class; falls back to any same-rank
    zero-offset access, which iterates identically for elementwise bodies.
    """
    cands: list[str] = []
    for s in nest.body:
        if (
            isinstance(s, StoreStmt)
            and s.buf not in gone
            and len(s.offsets) == nest.rank
            and all(o == 0 for o in s.offsets)
        ):
            cands.append(s.buf)
    for s in nest.body:
        for ld in _stmt_loads(s):
            if (
                ld.buf not in gone
                and len(ld.offsets) == nest.rank
                and all(o == 0 for o in ld.offsets)
            ):
                cands.append(ld.buf)
    cls = shape_class.get(nest.domain)
    for c in cands:
        if cls is not None and shape_class.get(c) == cls:
            return c
    return cands[0] if cands else None


def scalarize_locals(kernel: Kernel) -> Kernel:
    """Replace same-index single-nest locals with per-iteration scalars.

    Locals written but never read are dead and dropped along with their stores.
    """
    usage: dict[str, list[tuple[int, bool, tuple[int, ...]]]] = {}
    reduced_into: set[str] = set()
    for ni, nest in enumerate(kernel.nests):
        for buf, offs in _nest_reads(nest).items():
            for o in offs:
                usage.setdefault(buf, []).append((ni, False, o))
        for s in nest.body:
            if isinstance(s, (StoreStmt, ReduceStmt)):
                offs = s.offsets if isinstance(s, StoreStmt) else ()
                usage.setdefault(s.buf, []).append((ni, True, offs))
                if isinstance(s, ReduceStmt):
                    reduced_into.add(s.buf)

    local_names = {l.name for l in kernel.locals}
    dead: set[str] = set()
    scalarized: set[str] = set()
    for name in local_names:
        uses = usage.get(name, [])
        if not any(not is_w for _, is_w, _ in uses):
            dead.add(name)
            continue
        if name in reduced_into:
            continue  # accumulation targets stay buffers
        nests_used = {ni for ni, _, _ in uses}
        same_index = all(all(o == 0 for o in offs) for _, _, offs in uses)
        if len(nests_used) == 1 and same_index:
            scalarized.add(name)

    # A removed local may be some nest's iteration domain; each such nest needs
    # another buffer with the same extents to iterate over, otherwise the local
    # has to stay.
    while True:
        gone = dead | scalarized
        problem = None
        for nest in kernel.nests:
            if nest.domain not in gone:
                continue
            survives = any(
                isinstance(s, (StoreStmt, ReduceStmt)) and s.buf not in gone
                for s in nest.body
            )
            if survives and _domain_replacement(nest, gone, kernel.shape_class) is None:
                problem = nest.domain
                break
        if problem is None:
            break
        dead.discard(problem)
        scalarized.discard(problem)

    def temp_of(name: str) -> str:
        return f"_v_{name}"

    def rewrite_expr(e: Expr) -> Expr:
        if isinstance(e, Load) and e.buf in scalarized:
            return TempRef(temp_of(e.buf))
        if isinstance(e, Bin):
            return Bin(e.op, rewrite_expr(e.lhs), rewrite_expr(e.rhs))
        if isinstance(e, Un):
            return Un(e.op, rewrite_expr(e.x))
        if isinstance(e, Select):
            return Select(rewrite_expr(e.cond), rewrite_expr(e.if_true), rewrite_expr(e.if_false))
        return e

    gone = dead | scalarized
    new_nests = []
    for nest in kernel.nests:
        body: list[Stmt] = []
        for s in nest.body:
            if isinstance(s, StoreStmt) and s.buf in dead:
                continue
            if isinstance(s, ReduceStmt) and s.buf in dead:
                continue
            if isinstance(s, StoreStmt) and s.buf in scalarized:
                body.append(SetTemp(temp_of(s.buf), rewrite_expr(s.expr)))
            elif isinstance(s, SetTemp):
                body.append(SetTemp(s.name, rewrite_expr(s.expr)))
            elif isinstance(s, StoreStmt):
                body.append(StoreStmt(s.buf, s.offsets, rewrite_expr(s.expr)))
            else:
                body.append(ReduceStmt(s.buf, rewrite_expr(s.expr)))
        if not any(isinstance(s, (StoreStmt, ReduceStmt)) for s in body):
            continue  # no observable effects left
        domain = nest.domain
        if domain in gone:
            domain = _domain_replacement(nest, gone, kernel.shape_class)
            assert domain is not None  # guaranteed by the back-off loop above
        new_nests.append(LoopNest(domain, nest.rank, tuple(body)))
    return replace(
        kernel,
        locals=tuple(l for l in kernel.locals if l.name not in gone),
        nests=tuple(new_nests),
    )


def optimize(kernel: Kernel) -> Kernel:
    return scalarize_locals(fuse_loops(kernel))


# --- instrumentation --------------------------------------------------------


def count_memory_traffic(kernel: Kernel, shapes: Mapping[str, tuple[int, ...]]) -> tuple[int, int]:
    """Static (loads, stores) element-access counts for one execution.

    ReduceStmt counts as one store per iteration; scalar params are free.
    """
    loads = 0
    stores = 0
    for nest in kernel.nests:
        vol = 1
        for e in shapes[nest.domain]:
            vol *= e
        for s in nest.body:
            loads += sum(1 for _ in _stmt_loads(s)) * vol
            if isinstance(s, (StoreStmt, ReduceStmt)):
                stores += vol
    return loads, stores


# --- interpretation ---------------------------------------------------------

_BIN_OPS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.true_divide,
    "**": np.power,
    "min": np.minimum,
    "max": np.maximum,
    "lt": np.less,
    "le": np.less_equal,
    "eq": np.equal,
}


def _eval_vec(e: Expr, bufs: Mapping[str, np.ndarray], scalars: Mapping[str, float], temps: dict):
    if isinstance(e, Load):
        return bufs[e.buf][()] if bufs[e.buf].ndim == 0 else bufs[e.buf]
    if isinstance(e, ScalarRef):
        return scalars[e.name]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, TempRef):
        return temps[e.name]
    if isinstance(e, Bin):
        out = _BIN_OPS[e.op](_eval_vec(e.lhs, bufs, scalars, temps), _eval_vec(e.rhs, bufs, scalars, temps))
        return out.astype(np.float64) if isinstance(out, np.ndarray) and out.dtype == bool else out
    if isinstance(e, Un):
        return np.negative(_eval_vec(e.x, bufs, scalars, temps))
    if isinstance(e, Select):
        return np.where(
            _eval_vec(e.cond, bufs, scalars, temps) != 0,
            _eval_vec(e.if_true, bufs, scalars, temps),
            _eval_vec(e.if_false, bufs, scalars, temps),
        )
    raise KernelError(f"unknown expression {e!r}")


def _eval_at(e: Expr, idx: tuple[int, ...], bufs, scalars, temps):
    if isinstance(e, Load):
        arr = bufs[e.buf]
        if arr.ndim == 0:
            return arr[()]
        at = tuple(i + o for i, o in zip(idx, e.offsets))
        if any(a < 0 or a >= s for a, s in zip(at, arr.shape)):
            raise OutOfBoundsError(f"access {at} outside buffer {e.buf} of shape {arr.shape}")
        return arr[at]
    if isinstance(e, ScalarRef):
        return np.float64(scalars[e.name])
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, TempRef):
        return temps[e.name]
    if isinstance(e, Bin):
        return _BIN_OPS[e.op](_eval_at(e.lhs, idx, bufs, scalars, temps), _eval_at(e.rhs, idx, bufs, scalars, temps))
    if isinstance(e, Un):
        return np.negative(_eval_at(e.x, idx, bufs, scalars, temps))
    if isinstance(e, Select):
        c = _eval_at(e.cond, idx, bufs, scalars, temps)
        return _eval_at(e.if_true if c != 0 else e.if_false, idx, bufs, scalars, temps)
    raise KernelError(f"unknown expression {e!r}")


def _nest_all_zero_offsets(nest: LoopNest) -> bool:
    for s in nest.body:
        if isinstance(s, StoreStmt) and any(o != 0 for o in s.offsets):
            return False
        for ld in _stmt_loads(s):
            if ld.offsets and any(o != 0 for o in ld.offsets):
                return False
    return True


def interpret(
    kernel: Kernel,
    bufs: Mapping[str, np.ndarray],
    scalars: Mapping[str, float] | None = None,
    local_shapes: Mapping[str, tuple[int, ...]] | None = None,
) -> dict[str, np.ndarray]:
    """Execute the kernel in place on the given buffers; returns local buffers.

    ``bufs`` must bind every buffer param; locals are allocated from
    ``local_shapes`` (falling back to a same-shape-class param's shape).
    """
    scalars = scalars or {}
    env: dict[str, np.ndarray] = dict(bufs)
    priv = {p.name: p.privilege for p in kernel.buf_params}
    for p in kernel.buf_params:
        if p.name not in env:
            raise KernelError(f"missing buffer binding for param {p.name}")
    for loc in kernel.locals:
        if local_shapes and loc.name in local_shapes:
            shape = local_shapes[loc.name]
        else:
            cls = kernel.shape_class.get(loc.name)
            shape = None
            for p in kernel.buf_params:
                if cls is not None and kernel.shape_class.get(p.name) == cls:
                    shape = env[p.name].shape
                    break
            if shape is None:
                raise KernelError(f"cannot determine shape of local buffer {loc.name}")
        env[loc.name] = np.zeros(shape, dtype=np.float64)

    with np.errstate(all="ignore"):
        for nest in kernel.nests:
            bounds = env[nest.domain].shape
            if _nest_all_zero_offsets(nest):
                temps: dict[str, np.ndarray] = {}
                for s in nest.body:
                    if isinstance(s, SetTemp):
                        temps[s.name] = _eval_vec(s.expr, env, scalars, temps)
                    elif isinstance(s, StoreStmt):
                        if not priv.get(s.buf, Privilege.READ_WRITE).is_write and s.buf in priv:
                            raise PrivilegeViolationError(f"store to read-only param {s.buf}")
                        val = _eval_vec(s.expr, env, scalars, temps)
                        env[s.buf][...] = np.broadcast_to(val, bounds) if np.ndim(val) == 0 else val
                    else:
                        if s.buf in priv and not priv[s.buf].is_reduce and not priv[s.buf].is_write:
                            raise PrivilegeViolationError(f"reduce into read-only param {s.buf}")
                        val = _eval_vec(s.expr, env, scalars, temps)
                        env[s.buf][()] += np.sum(val) if np.ndim(val) else val * np.prod(bounds)
            else:
                for idx in np.ndindex(*bounds):
                    temps_s: dict[str, np.float64] = {}
                    for s in nest.body:
                        if isinstance(s, SetTemp):
                            temps_s[s.name] = _eval_at(s.expr, idx, env, scalars, temps_s)
                        elif isinstance(s, StoreStmt):
                            if s.buf in priv and not priv[s.buf].is_write:
                                raise PrivilegeViolationError(f"store to read-only param {s.buf}")
                            at = tuple(i + o for i, o in zip(idx, s.offsets))
                            arr = env[s.buf]
                            if any(a < 0 or a >= sh for a, sh in zip(at, arr.shape)):
                                raise OutOfBoundsError(f"store at {at} outside {s.buf} {arr.shape}")
                            arr[at] = _eval_at(s.expr, idx, env, scalars, temps_s)
                        else:
                            if s.buf in priv and not priv[s.buf].is_reduce and not priv[s.buf].is_write:
                                raise PrivilegeViolationError(f"reduce into read-only param {s.buf}")
                            env[s.buf][()] += _eval_at(s.expr, idx, env, scalars, temps_s)
    return {l.name: env[l.name] for l in kernel.locals}


# --- pretty printing --------------------------------------------------------


def _expr_text(e: Expr) -> str:
    if isinstance(e, Load):
        idx = ", ".join(f"i{a}{o:+d}" if o else f"i{a}" for a, o in enumerate(e.offsets))
        return f"{e.buf}[{idx}]"
    if isinstance(e, ScalarRef):
        return e.name
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, TempRef):
        return e.name
    if isinstance(e, Bin):
        if e.op in ("min", "max"):
            return f"{e.op}({_expr_text(e.lhs)}, {_expr_text(e.rhs)})"
        return f"({_expr_text(e.lhs)} {e.op} {_expr_text(e.rhs)})"
    if isinstance(e, Un):
        return f"(-{_expr_text(e.x)})"
    if isinstance(e, Select):
        return f"select({_expr_text(e.cond)}, {_expr_text(e.if_true)}, {_expr_text(e.if_false)})"
    return repr(e)


def kernel_text(kernel: Kernel) -> str:
    """Stable textual dump used by golden tests."""
    lines = []
    params = ", ".join(f"{p.name}: {p.privilege.value} rank{p.rank}" for p in kernel.buf_params)
    scalars = ", ".join(s.name for s in kernel.scalar_params)
    lines.append(f"kernel({params})" + (f" scalars({scalars})" if scalars else ""))
    for l in kernel.locals:
        lines.append(f"  local {l.name} rank{l.rank}")
    for nest in kernel.nests:
        lines.append(f"  for extents({nest.domain}):")
        for s in nest.body:
            if isinstance(s, SetTemp):
                lines.append(f"    {s.name} = {_expr_text(s.expr)}")
            elif isinstance(s, StoreStmt):
                idx = ", ".join(f"i{a}{o:+d}" if o else f"i{a}" for a, o in enumerate(s.offsets))
                lines.append(f"    {s.buf}[{idx}] = {_expr_text(s.expr)}")
            else:
                lines.append(f"    {s.buf} += sum {_expr_text(s.expr)}")
    return "\n".join(lines)
