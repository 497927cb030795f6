"""MoE effective routing quantities and load-imbalance aggregation.

Expert-parallel cost depends on how tokens land on experts. We reduce a
routing (uniform or traced) to two pairs: the effective tokens-per-expert
and activated-experts-per-GPU of the average GPU (energy) and of the
bottleneck GPU (latency). Per-expert token counts are quantized up to the
grouped-GEMM tile size (default 16). The imbalance equation prices the
idle time of underloaded GPUs at idle power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .compute import CostEstimate
from .errors import ValidationError

DEFAULT_TILE = 16


@dataclass(frozen=True)
class RoutingStats:
    """Effective (tokens-per-expert, experts-per-GPU) pairs."""

    t_avg: float
    t_max: float
    e_avg: float
    e_max: float
    source: str  # "uniform" or "trace"

    def __post_init__(self):
        # Only positivity is required: the bottleneck GPU (largest total
        # quantized work) can have a smaller per-expert mean than the
        # cross-GPU average when it is the bottleneck via many
        # lightly-loaded experts, so no per-field ordering holds.
        if min(self.t_avg, self.t_max, self.e_avg, self.e_max) <= 0:
            raise ValidationError("routing statistics must be positive")

    @property
    def avg(self) -> tuple[float, float]:
        return (self.t_avg, self.e_avg)

    @property
    def max(self) -> tuple[float, float]:
        return (self.t_max, self.e_max)

    @property
    def balanced(self) -> bool:
        return self.t_avg == self.t_max and self.e_avg == self.e_max


def quantize_tokens(tokens: float, tile: int) -> float:
    """Round a per-expert token count up to the next tile multiple (floor = tile)."""
    if tile < 1:
        raise ValidationError("tile must be >= 1")
    if tokens <= 0:
        return 0.0
    return float(max(tile, tile * math.ceil(tokens / tile)))


def uniform_routing(batch: int, s: int, top_k: int, total_experts: int,
                    ep_degree: int, tile: int = DEFAULT_TILE) -> RoutingStats:
    """Ideal routing: token-expert assignments spread evenly, no imbalance.

    With fewer assignments than experts (small decode batches) only
    ``batch*s*top_k`` experts activate, one token each, padded to the tile
    floor.
    """
    if total_experts % ep_degree:
        raise ValidationError(
            f"total_experts {total_experts} not divisible by ep degree {ep_degree}")
    assignments = batch * s * top_k
    if assignments < 1:
        raise ValidationError("no token-expert assignments")
    activated = min(assignments, total_experts)
    t_eff = quantize_tokens(assignments / activated, tile)
    e_per_gpu = activated / ep_degree
    return RoutingStats(t_avg=t_eff, t_max=t_eff,
                        e_avg=e_per_gpu, e_max=e_per_gpu, source="uniform")


@dataclass(frozen=True)
class RoutingTrace:
    """Per-token expert choices: one row of ``top_k`` expert indices per token."""

    choices: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.choices:
            raise ValidationError("routing trace is empty")
        k = len(self.choices[0])
        for row in self.choices:
            if len(row) != k:
                raise ValidationError("all tokens must pick the same number of experts")

    @property
    def top_k(self) -> int:
        return len(self.choices[0])

    @classmethod
    def load(cls, path) -> "RoutingTrace":
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                cols = line.split(",")
                try:
                    rows.append(tuple(int(c) for c in cols[1:]))
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: non-integer expert index") from None
                if not rows[-1]:
                    raise ValidationError(f"{path}:{lineno}: token row has no experts")
        return cls(tuple(rows))


def stats_from_trace(trace: RoutingTrace, total_experts: int, ep_degree: int,
                     tile: int = DEFAULT_TILE) -> RoutingStats:
    """Per-GPU statistics from a measured routing.

    Experts are placed contiguously by index (experts [0, E/ep) on GPU 0,
    and so on). The bottleneck GPU is the one with the largest total
    quantized work; averages are taken over all GPUs.
    """
    if total_experts % ep_degree:
        raise ValidationError(
            f"total_experts {total_experts} not divisible by ep degree {ep_degree}")
    per_gpu = total_experts // ep_degree

    tokens_per_expert = [0] * total_experts
    for row in trace.choices:
        for e in row:
            if not 0 <= e < total_experts:
                raise ValidationError(f"expert index {e} out of range")
            tokens_per_expert[e] += 1

    gpu_t: list[float] = []
    gpu_e: list[float] = []
    gpu_work: list[float] = []
    for g in range(ep_degree):
        counts = [quantize_tokens(c, tile)
                  for c in tokens_per_expert[g * per_gpu:(g + 1) * per_gpu] if c > 0]
        gpu_e.append(float(len(counts)))
        gpu_t.append(sum(counts) / len(counts) if counts else 0.0)
        gpu_work.append(sum(counts))

    bottleneck = max(range(ep_degree), key=lambda g: gpu_work[g])
    return RoutingStats(
        t_avg=sum(gpu_t) / ep_degree,
        t_max=gpu_t[bottleneck],
        e_avg=sum(gpu_e) / ep_degree,
        e_max=gpu_e[bottleneck],
        source="trace",
    )


def aggregate_moe(costs_avg: Sequence[CostEstimate],
                  costs_max: Sequence[CostEstimate],
                  p_idle: float) -> CostEstimate:
    """Imbalance aggregation: bottleneck latency, average energy plus idle waiting.

    latency = sum_i L_i(max)
    energy  = sum_i [ E_i(avg) + (L_i(max) - L_i(avg)) * p_idle ]
    """
    if len(costs_avg) != len(costs_max):
        raise ValidationError("avg/max cost lists must align one-to-one")
    latency = 0.0
    energy = 0.0
    for avg, mx in zip(costs_avg, costs_max):
        if mx.latency < avg.latency - 1e-12 * max(1.0, avg.latency):
            raise ValidationError(
                "bottleneck latency below average latency: inconsistent inputs")
        latency += mx.latency
        energy += avg.energy + (mx.latency - avg.latency) * p_idle
    return CostEstimate(latency, energy)
