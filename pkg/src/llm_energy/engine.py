"""End-to-end estimation: lower, price, fold imbalance/overlap, aggregate."""

from __future__ import annotations

import dataclasses
from typing import Optional

from .comm import CommBackend
from .compute import CostEstimate, HardwareProfile
from .errors import ValidationError
from .interpreter import (
    DECODE,
    PREFILL,
    CommDescriptor,
    GemmDescriptor,
    LoweredOp,
    MemoryOpDescriptor,
    PhaseContext,
    decode_positions,
    lower_model,
    _is_moe_op,
)
from .metrics import (
    CATEGORY_COMM,
    CATEGORY_COMPUTE,
    CATEGORY_EXPOSED,
    CATEGORY_MEMORY,
    MemoryModel,
    PhaseReport,
    ReportRow,
    build_memory_model,
    check_memory,
)
from .moe import DEFAULT_TILE, RoutingStats, RoutingTrace, stats_from_trace, uniform_routing
from .overlap import plan_overlap
from .spec_lang import DimensionBindings, ModelSpec, validate_bindings

DEFAULT_DECODE_STRIDE = 64


def _kernel_category(kernel) -> str:
    if isinstance(kernel, GemmDescriptor):
        return CATEGORY_COMPUTE
    if isinstance(kernel, CommDescriptor):
        return CATEGORY_COMM
    return CATEGORY_MEMORY


class Estimator:
    """Prices a model spec under given bindings, hardware, and backends."""

    def __init__(self, spec: ModelSpec, dims: DimensionBindings,
                 hw: HardwareProfile, compute_backend, comm_backend: CommBackend,
                 *, tile: int = DEFAULT_TILE,
                 decode_stride: int = DEFAULT_DECODE_STRIDE,
                 routing_trace: Optional[RoutingTrace] = None,
                 activation_headroom: float = 0.0):
        self.spec = spec
        self.dims = dims
        self.hw = hw
        self.compute_backend = compute_backend
        self.comm_backend = comm_backend
        self.tile = tile
        self.decode_stride = decode_stride
        self.routing_trace = routing_trace
        self.activation_headroom = activation_headroom
        self.has_moe = any(
            _is_moe_op(sub)
            for op in spec.ops
            for sub in ([op] if not op.is_attention else op.attn_eqs))

    # -- helpers -----------------------------------------------------------

    def layers(self) -> int:
        return self.dims.layers if self.dims.layers is not None else self.spec.layers

    def gpu_count(self, degrees: dict[str, int]) -> int:
        return max(degrees.get("tp", 1), degrees.get("ep", 1)) * degrees.get("cp", 1)

    def memory_model(self, degrees: dict[str, int]) -> MemoryModel:
        return build_memory_model(self.spec, self.dims, degrees, self.layers(),
                                  self.activation_headroom)

    def routing_stats(self, ctx: PhaseContext,
                      degrees: dict[str, int]) -> Optional[RoutingStats]:
        if not self.has_moe:
            return None
        e_total = self.dims.size("E")
        ep = degrees.get("ep", 1)
        if self.routing_trace is not None:
            return stats_from_trace(self.routing_trace, e_total, ep, self.tile)
        top_k = self.dims.size("A")
        return uniform_routing(ctx.batch, ctx.s, top_k, e_total, ep, self.tile)

    def _price(self, kernel) -> CostEstimate:
        if isinstance(kernel, GemmDescriptor):
            return self.compute_backend.estimate_gemm(kernel)
        if isinstance(kernel, CommDescriptor):
            return self.comm_backend.estimate(kernel)
        return self.compute_backend.estimate_memory_op(kernel)

    # -- per-layer costing -------------------------------------------------

    def _layer_entries(self, ctx: PhaseContext, degrees: dict[str, int],
                       stats: Optional[RoutingStats]
                       ) -> list[tuple[str, str, float, float]]:
        """(label, category, latency, energy) per kernel for one layer, one GPU.

        MoE imbalance folding happens here: latency follows the bottleneck
        GPU's effective quantities, energy follows the average GPU's plus
        idle waiting at p_idle.
        """
        avg_te = stats.avg if stats else None
        lowered = lower_model(self.spec, self.dims, ctx, degrees, moe_te=avg_te)
        lowered_max = None
        if stats is not None and not stats.balanced:
            lowered_max = lower_model(self.spec, self.dims, ctx, degrees,
                                      moe_te=stats.max)

        entries: list[tuple[str, str, float, float]] = []
        for idx, op in enumerate(lowered):
            if op.overlap is not None:
                entries.extend(self._overlap_entries(op, ctx, degrees))
                continue
            for k_idx, kernel in enumerate(op.kernels):
                cost = self._price(kernel)
                category = _kernel_category(kernel)
                if op.is_moe and lowered_max is not None:
                    cost_max = self._price(lowered_max[idx].kernels[k_idx])
                    # The bottleneck GPU need not be slower on every single
                    # kernel (its per-expert mean can be smaller); the true
                    # per-kernel maximum across GPUs bounds both, so clamp.
                    bottleneck = max(cost_max.latency, cost.latency)
                    energy = (cost.energy
                              + (bottleneck - cost.latency) * self.hw.p_idle)
                    cost = CostEstimate(bottleneck, energy)
                entries.append((op.label, category, cost.latency, cost.energy))
        return entries

    def _overlap_entries(self, op: LoweredOp, ctx: PhaseContext,
                         degrees: dict[str, int]
                         ) -> list[tuple[str, str, float, float]]:
        stages, sm_comm, dim = op.overlap
        if op.gemm is None or op.collective is None:
            raise ValidationError(f"op {op.label!r}: overlap needs a GEMM + collective")
        bound = {"b": ctx.batch, "s": ctx.s, "z": ctx.z}
        dim_size = bound.get(dim, self.dims.sizes.get(dim))
        if dim_size is None:
            raise ValidationError(f"op {op.label!r}: overlap dim {dim!r} unbound")
        plan = plan_overlap(op.gemm, op.collective.bytes, op.collective.world,
                            stages, sm_comm, int(dim_size),
                            self.compute_backend, self.comm_backend,
                            self.hw.total_sm, label=op.label)
        out = []
        # Any kernels lowered ahead of the GEMM (cp transitions) keep their
        # normal pricing.
        for kernel in op.kernels:
            if kernel is op.gemm:
                continue
            cost = self._price(kernel)
            out.append((op.label, _kernel_category(kernel), cost.latency, cost.energy))
        out.append((op.label, CATEGORY_COMPUTE, plan.compute_latency,
                    plan.compute_energy))
        out.append((op.label, CATEGORY_EXPOSED, plan.t_exposed, plan.exposed_energy))
        return out

    # -- phase estimation ----------------------------------------------------

    def estimate(self, ctx: PhaseContext, degrees: dict[str, int]) -> PhaseReport:
        info = validate_bindings(self.spec, self.dims, degrees)
        degrees = info.degrees
        layers = self.layers()
        gpus = self.gpu_count(degrees)
        report = PhaseReport(phase=ctx.phase, batch=ctx.batch, isl=ctx.isl,
                             osl=ctx.osl, gpu_count=gpus)
        report.meta = {
            "layers": layers,
            "degrees": dict(degrees),
            "tile": self.tile,
            "decode_stride": self.decode_stride,
            "hardware": self.hw.name,
            "routing": ("trace" if self.routing_trace is not None else
                        ("uniform" if self.has_moe else "dense")),
        }

        verdict = check_memory(self.memory_model(degrees), ctx, self.hw)
        report.meta["max_seq_at_batch"] = verdict.max_seq_at_batch
        if not verdict.feasible:
            report.feasible = False
            report.infeasible_reason = verdict.reason
            return report

        rows: dict[tuple[str, str], ReportRow] = {}

        def accumulate(entries, weight: float) -> None:
            for label, category, latency, energy in entries:
                scale = 1.0 if category == CATEGORY_COMM else float(gpus)
                row = rows.setdefault((label, category), ReportRow(label, category))
                row.add(latency * weight, energy * scale * weight)

        if ctx.phase == PREFILL:
            stats = self.routing_stats(ctx, degrees)
            accumulate(self._layer_entries(ctx, degrees, stats), float(layers))
        else:
            for position, width in decode_positions(ctx.osl, self.decode_stride):
                step_ctx = ctx.at_position(position)
                stats = self.routing_stats(step_ctx, degrees)
                accumulate(self._layer_entries(step_ctx, degrees, stats),
                           float(layers) * width)

        report.rows = list(rows.values())
        return report


def estimate_phase(spec: ModelSpec, dims: DimensionBindings, ctx: PhaseContext,
                   degrees: dict[str, int], hw: HardwareProfile,
                   compute_backend, comm_backend: CommBackend,
                   **kwargs) -> PhaseReport:
    """One-shot convenience wrapper around :class:`Estimator`."""
    return Estimator(spec, dims, hw, compute_backend, comm_backend,
                     **kwargs).estimate(ctx, degrees)


def apply_overlap_setting(spec: ModelSpec, stages: int, sm_comm: int,
                          overlap_dim: str = "s") -> ModelSpec:
    """Annotate every eligible op (sharded contraction containing the overlap
    dim) with the given overlap setting; others are left untouched."""
    new_ops = []
    for op in spec.ops:
        eligible = (not op.is_attention
                    and op.parallel is not None
                    and op.parallel in op.equation.summation_symbols
                    and overlap_dim in op.equation.all_symbols())
        if eligible and stages >= 1:
            op = dataclasses.replace(op, overlap_stage=stages,
                                     overlap_sm=sm_comm, overlap_dim=overlap_dim)
        new_ops.append(op)
    return ModelSpec(tuple(new_ops), spec.layers)
