"""Overlap plan latency/energy rules and the three-phase timeline."""

import pytest

from llm_energy import (
    CommDescriptor,
    GemmDescriptor,
    OverlapPlan,
    RooflineBackend,
    ValidationError,
    effective_sm_tradeoff,
    overlap_energy,
    plan_overlap,
)
from llm_energy.interpreter import ALLREDUCE


def test_closed_form_substitution():
    plan = OverlapPlan(stages=4, sm_comm=16, t_first=3e-3, t_gemm_ov=3.5e-3,
                       t_comm_ov=1.2e-3, t_exposed=1e-3,
                       p_first=300.0, p_overlapped=250.0)
    assert plan.total_latency == pytest.approx(3e-3 + 1e-3 + 3.5e-3 * 3)
    assert plan.total_latency == pytest.approx(14.5e-3)


def test_hiding_bound():
    plan = OverlapPlan(stages=4, sm_comm=16, t_first=3e-3, t_gemm_ov=1.0e-3,
                       t_comm_ov=2.5e-3, t_exposed=1e-3,
                       p_first=300.0, p_overlapped=250.0)
    bound = plan.t_first + plan.t_exposed + (plan.stages - 1) * plan.t_gemm_ov
    assert plan.total_latency >= bound


def test_energy_constant_power_factorization():
    plan = OverlapPlan(stages=3, sm_comm=8, t_first=2e-3, t_gemm_ov=1e-3,
                       t_comm_ov=0.5e-3, t_exposed=0.4e-3,
                       p_first=200.0, p_overlapped=200.0)
    assert plan.total_energy == pytest.approx(200.0 * plan.total_latency)


def test_plan_overlap_stage1_degenerate(hw, comm_backend):
    backend = RooflineBackend(hw)
    g = GemmDescriptor(1, 4096, 8192, 8192, dtype_bytes=2, label="x")
    bytes_ = 4096 * 8192 * 2.0
    plan = plan_overlap(g, bytes_, world=8, stages=1, sm_comm=16,
                        overlap_dim_size=4096, compute_backend=backend,
                        comm_backend=comm_backend, total_sm=hw.total_sm)
    # Sequential lowering of the same op: full GEMM then full AllReduce.
    gemm_cost = backend.estimate_gemm(g)
    ar_cost = comm_backend.estimate(CommDescriptor(ALLREDUCE, bytes_, 8))
    assert plan.total_latency == gemm_cost.latency + ar_cost.latency
    # Power rule: the exposed collective is priced at GEMM power.
    assert plan.total_energy == pytest.approx(
        gemm_cost.energy + ar_cost.latency * gemm_cost.power)


def test_plan_overlap_multistage(hw, comm_backend):
    backend = RooflineBackend(hw)
    g = GemmDescriptor(1, 4096, 8192, 8192, dtype_bytes=2)
    plan = plan_overlap(g, 4096 * 8192 * 2.0, world=8, stages=4, sm_comm=16,
                        overlap_dim_size=4096, compute_backend=backend,
                        comm_backend=comm_backend, total_sm=hw.total_sm)
    assert plan.stages == 4
    # Phase i: full-SM 1/4 GEMM partition; phase ii uses fewer SMs, so it is
    # never faster than phase i.
    assert plan.t_gemm_ov >= plan.t_first
    cost = overlap_energy(plan)
    assert cost.latency == plan.total_latency
    assert cost.energy == plan.total_energy


def test_partition_overhead_dominated(hw, comm_backend):
    # Overhead-dominated small GEMM: a 1/stages partition costs strictly
    # more than 1/stages of the full kernel.
    backend = RooflineBackend(hw)
    g = GemmDescriptor(1, 64, 512, 512, dtype_bytes=2)
    full = backend.estimate_gemm(g).latency
    part = backend.estimate_gemm(g.partitioned(1.0 / 8)).latency
    assert part > full / 8


def test_divisibility_and_sm_validation(hw, comm_backend):
    backend = RooflineBackend(hw)
    g = GemmDescriptor(1, 100, 64, 64, dtype_bytes=2)
    with pytest.raises(ValidationError):
        plan_overlap(g, 1e6, 2, stages=3, sm_comm=8, overlap_dim_size=100,
                     compute_backend=backend, comm_backend=comm_backend,
                     total_sm=hw.total_sm)
    with pytest.raises(ValidationError):
        plan_overlap(g, 1e6, 2, stages=2, sm_comm=108, overlap_dim_size=100,
                     compute_backend=backend, comm_backend=comm_backend,
                     total_sm=108)


def test_effective_sm_tradeoff(hw, comm_backend):
    backend = RooflineBackend(hw)
    g = GemmDescriptor(1, 4096, 8192, 8192, dtype_bytes=2)
    plans = effective_sm_tradeoff(g, 4096 * 8192 * 2.0, 8, [1, 4, 16],
                                  stages=4, overlap_dim_size=4096,
                                  compute_backend=backend,
                                  comm_backend=comm_backend,
                                  total_sm=hw.total_sm)
    assert [sm for sm, _ in plans] == [1, 4, 16]
    # More communication SMs never slows the RS chunk down.
    comm_lats = [p.t_comm_ov for _, p in plans]
    assert comm_lats == sorted(comm_lats, reverse=True)
