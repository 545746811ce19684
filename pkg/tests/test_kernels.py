"""Kernel IR: generators, composition, loop fusion, scalarization, interpret."""

from __future__ import annotations

import random

import numpy as np
import pytest

from diffusekit.ir import Domain, NonePart, Privilege
from diffusekit.kernels import (
    Bin,
    BufParam,
    Kernel,
    KernelError,
    Load,
    LoopNest,
    NoGeneratorError,
    OutOfBoundsError,
    PrivilegeViolationError,
    ReduceStmt,
    StoreStmt,
    compose,
    count_memory_traffic,
    default_registry,
    fuse_loops,
    interpret,
    kernel_text,
    optimize,
    scalarize_locals,
)
from helpers import R, RD, RW, W, task, tiling

REG = default_registry()


def _p(rank=1):
    return tiling((2,) * rank)


class TestGenerators:
    def test_add_is_a_single_elementwise_nest(self):
        t = task("ADD", (2,), [(0, _p(), R), (1, _p(), R), (2, _p(), W)])
        k = REG.generate(t)
        assert len(k.nests) == 1 and k.locals == ()
        text = kernel_text(k)
        assert "a2[i0] = (a0[i0] + a1[i0])" in text

    def test_scalar_mult(self):
        t = task("MULT", (2, 2), [(0, _p(2), R), (1, _p(2), W)], [("s", 0.2)])
        k = REG.generate(t)
        assert "a1[i0, i1] = (s0 * a0[i0, i1])" in kernel_text(k)

    def test_dot_reduces_into_rank_zero(self):
        t = task("DOT", (2,), [(0, _p(), R), (1, _p(), R), (2, NonePart(), RD)])
        k = REG.generate(t)
        assert isinstance(k.nests[0].body[0], ReduceStmt)
        assert "a2 += sum (a0[i0] * a1[i0])" in kernel_text(k)

    def test_arity_mismatch_rejected(self):
        t = task("ADD", (2,), [(0, _p(), R), (1, _p(), W)])
        with pytest.raises(KernelError):
            REG.generate(t)

    def test_unknown_kind_signals_no_generator(self):
        t = task("MATVEC", (2,), [(0, NonePart(), R)])
        with pytest.raises(NoGeneratorError):
            REG.generate(t)

    def test_generated_kernels_compute_their_operation(self):
        rng = np.random.default_rng(3)
        a = rng.integers(1, 9, 8).astype(np.float64)
        b = rng.integers(1, 9, 8).astype(np.float64)
        cases = {
            "ADD": a + b,
            "SUB": a - b,
            "MIN": np.minimum(a, b),
            "MAX": np.maximum(a, b),
            "MULT": a * b,
            "DIV": a / b,
        }
        for kind, expected in cases.items():
            t = task(kind, (4,), [(0, _p(), R), (1, _p(), R), (2, _p(), W)])
            out = np.zeros(8)
            interpret(REG.generate(t), {"a0": a, "a1": b, "a2": out})
            assert (out == expected).all(), kind


def _chain_kernels(n: int):
    """c = a + b; e = c + d as two generated ADD kernels with an arg map."""
    p = _p()
    t1 = task("ADD", (2,), [(0, p, R), (1, p, R), (2, p, W)])
    t2 = task("ADD", (2,), [(2, p, R), (3, p, R), (4, p, W)])
    return [REG.generate(t1), REG.generate(t2)], [(0, 1, 2), (2, 3, 4)]


class TestComposeAndOptimize:
    def test_two_adds_with_local_temporary(self):
        kernels, amap = _chain_kernels(2)
        composed = compose(kernels, amap, frozenset({2}), {j: 0 for j in range(5)}, 5)
        assert [l.name for l in composed.locals] == ["l2"]
        assert len(composed.nests) == 2
        optimized = optimize(composed)
        assert len(optimized.nests) == 1 and optimized.locals == ()

    def test_optimized_chain_matches_reference(self):
        kernels, amap = _chain_kernels(2)
        composed = compose(kernels, amap, frozenset({2}), {j: 0 for j in range(5)}, 5)
        optimized = optimize(composed)
        rng = np.random.default_rng(0)
        a, b, d = (rng.integers(1, 9, 6).astype(np.float64) for _ in range(3))
        out = np.zeros(6)
        interpret(optimized, {"b0": a, "b1": b, "b3": d, "b4": out}, {}, {"l2": (6,)})
        assert (out == a + b + d).all()

    def test_offset_consumer_blocks_loop_fusion(self):
        nest1 = LoopNest("b0", 1, (StoreStmt("b0", (0,), Load("b1", (0,))),))
        nest2 = LoopNest("b2", 1, (StoreStmt("b2", (0,), Load("b0", (-1,))),))
        k = Kernel(
            (BufParam("b0", 1, W), BufParam("b1", 1, R), BufParam("b2", 1, W)),
            (),
            (),
            (nest1, nest2),
            {"b0": 0, "b1": 0, "b2": 0},
        )
        fused = fuse_loops(k)
        assert len(fused.nests) == 2

    def test_different_shape_classes_block_loop_fusion(self):
        kernels, amap = _chain_kernels(2)
        classes = {0: 0, 1: 0, 2: 0, 3: 1, 4: 1}
        composed = compose(kernels, amap, frozenset(), classes, 5)
        assert len(fuse_loops(composed).nests) == 2

    @pytest.mark.parametrize("k", [2, 10, 67])
    def test_elementwise_chain_collapses_to_one_nest(self, k):
        p = _p()
        tasks = [
            task("COPY", (2,), [(i, p, R), (i + 1, p, W)]) for i in range(k)
        ]
        kernels = [REG.generate(t) for t in tasks]
        amap = [(i, i + 1) for i in range(k)]
        temps = frozenset(range(1, k))
        composed = compose(kernels, amap, temps, {j: 0 for j in range(k + 1)}, k + 1)
        optimized = optimize(composed)
        assert len(optimized.nests) == 1
        assert optimized.locals == ()

    def test_reduction_target_is_never_scalarized(self):
        # Accumulate a dot product into a demoted local, then read it back.
        p = _p()
        n = NonePart()
        t1 = task("DOT", (2,), [(0, p, R), (0, p, R), (1, n, RD)])
        t2 = task("COPY", (1,), [(1, n, R), (2, n, W)])
        kernels = [REG.generate(t1), REG.generate(t2)]
        composed = compose(kernels, [(0, 0, 1), (1, 2)], frozenset({1}), {0: 0}, 3)
        optimized = optimize(composed)
        assert [l.name for l in optimized.locals] == ["l1"]
        a = np.arange(1.0, 7.0)
        out = np.zeros(())
        interpret(optimized, {"b0": a, "b2": out}, {}, {"l1": ()})
        assert out[()] == float(a @ a)

    def test_unread_reduction_temporary_is_dropped(self):
        p = _p()
        t1 = task("MULT", (2,), [(0, p, R), (1, p, W)], [("s", 2.0)])
        t2 = task("DOT", (2,), [(1, p, R), (1, p, R), (2, NonePart(), RD)])
        kernels = [REG.generate(t1), REG.generate(t2)]
        composed = compose(kernels, [(0, 1), (1, 1, 2)], frozenset({2}), {0: 0, 1: 0}, 3)
        optimized = optimize(composed)
        assert optimized.locals == ()
        assert len(optimized.nests) == 1  # only the surviving MULT remains

    def test_scalarization_preserves_semantics_on_random_chains(self):
        rng = random.Random(11)
        nprng = np.random.default_rng(11)
        p = _p()
        for _ in range(25):
            n = rng.randint(2, 6)
            tasks = []
            for i in range(n):
                kind = rng.choice(["COPY", "NEG", "MULT", "ADD"])
                if kind == "ADD":
                    src = rng.randint(0, i)
                    tasks.append(task("ADD", (2,), [(i, p, R), (src, p, R), (i + 1, p, W)]))
                elif kind == "MULT":
                    tasks.append(
                        task("MULT", (2,), [(i, p, R), (i + 1, p, W)], [("s", 2.0)])
                    )
                else:
                    tasks.append(task(kind, (2,), [(i, p, R), (i + 1, p, W)]))
            kernels = [REG.generate(t) for t in tasks]
            amap = [tuple(a.store for a in t.args) for t in tasks]
            composed = compose(kernels, amap, frozenset(), {j: 0 for j in range(n + 1)}, n + 1)
            optimized = optimize(composed)
            scalars = {
                sp.name: 2.0 for sp in composed.scalar_params
            }
            data1 = {f"b{j}": nprng.integers(1, 9, 4).astype(np.float64) for j in range(n + 1)}
            data2 = {k: v.copy() for k, v in data1.items()}
            interpret(composed, data1, scalars)
            interpret(optimized, data2, scalars)
            for name in data1:
                assert (data1[name] == data2[name]).all()


class TestTraffic:
    def test_fused_three_way_add(self):
        kernels, amap = _chain_kernels(2)
        composed = compose(kernels, amap, frozenset({2}), {j: 0 for j in range(5)}, 5)
        optimized = optimize(composed)
        shapes = {name: (8,) for name in ("b0", "b1", "b3", "b4", "l2")}
        loads, stores = count_memory_traffic(optimized, shapes)
        assert (loads, stores) == (24, 8)

    def test_unfused_pair_costs_more(self):
        p = _p()
        t1 = task("ADD", (4,), [(0, p, R), (1, p, R), (2, p, W)])
        t2 = task("ADD", (4,), [(2, p, R), (3, p, R), (4, p, W)])
        total = [0, 0]
        for t in (t1, t2):
            l, s = count_memory_traffic(REG.generate(t), {f"a{i}": (8,) for i in range(3)})
            total[0] += l
            total[1] += s
        assert total == [32, 16]

    def test_fill_loads_nothing(self):
        t = task("FILL", (2,), [(0, _p(), W)], [("s", 1.0)])
        loads, stores = count_memory_traffic(REG.generate(t), {"a0": (8,)})
        assert loads == 0 and stores == 8


class TestInterpretSafety:
    def test_store_to_read_only_param_rejected(self):
        k = Kernel(
            (BufParam("a0", 1, R),),
            (),
            (),
            (LoopNest("a0", 1, (StoreStmt("a0", (0,), Load("a0", (0,))),)),),
        )
        with pytest.raises(PrivilegeViolationError):
            interpret(k, {"a0": np.ones(4)})

    def test_out_of_bounds_offset_rejected(self):
        k = Kernel(
            (BufParam("a0", 1, R), BufParam("a1", 1, W)),
            (),
            (),
            (LoopNest("a1", 1, (StoreStmt("a1", (0,), Load("a0", (1,))),)),),
        )
        with pytest.raises(OutOfBoundsError):
            interpret(k, {"a0": np.ones(4), "a1": np.zeros(4)})

    def test_missing_buffer_binding_rejected(self):
        t = task("COPY", (2,), [(0, _p(), R), (1, _p(), W)])
        with pytest.raises(KernelError):
            interpret(REG.generate(t), {"a0": np.ones(4)})
