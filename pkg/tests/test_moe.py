"""MoE routing statistics, tile quantization, and imbalance aggregation."""

import random

import pytest

from llm_energy import (
    CostEstimate,
    RoutingTrace,
    ValidationError,
    aggregate_moe,
    stats_from_trace,
    uniform_routing,
)
from llm_energy.moe import quantize_tokens


def test_quantize_tokens():
    assert quantize_tokens(1, 16) == 16
    assert quantize_tokens(16, 16) == 16
    assert quantize_tokens(17, 16) == 32
    assert quantize_tokens(0, 16) == 0.0
    assert quantize_tokens(5, 1) == 5
    with pytest.raises(ValidationError):
        quantize_tokens(4, 0)


def test_uniform_decode_tile_floor():
    stats = uniform_routing(batch=1, s=1, top_k=8, total_experts=128,
                            ep_degree=4, tile=16)
    assert stats.t_avg == stats.t_max == 16.0
    assert stats.e_avg == stats.e_max == 8 / 4  # 8 activated experts over EP4
    assert stats.balanced


def test_uniform_prefill():
    stats = uniform_routing(batch=4, s=1024, top_k=8, total_experts=128,
                            ep_degree=4, tile=16)
    assert stats.t_avg == 4 * 1024 * 8 / 128 == 256.0
    assert stats.e_avg == 128 / 4 == 32.0


def test_uniform_tile_1_exact():
    stats = uniform_routing(batch=4, s=100, top_k=8, total_experts=128,
                            ep_degree=2, tile=1)
    assert stats.t_avg == 4 * 100 * 8 / 128


def test_uniform_divisibility():
    with pytest.raises(ValidationError):
        uniform_routing(1, 1, 8, 100, 3)


def test_trace_all_on_gpu0():
    # 8 tokens all picking expert 0 (of 4 experts, EP2).
    trace = RoutingTrace(tuple((0,) for _ in range(8)))
    stats = stats_from_trace(trace, total_experts=4, ep_degree=2, tile=16)
    assert stats.e_max == 1.0
    assert stats.e_avg == 0.5  # GPU 1 activates nothing
    assert stats.t_max == 16.0
    assert stats.t_avg == 8.0


def test_trace_balanced():
    trace = RoutingTrace(tuple((i % 4,) for i in range(64)))
    stats = stats_from_trace(trace, total_experts=4, ep_degree=2, tile=16)
    assert stats.balanced
    assert stats.t_avg == 16.0
    assert stats.e_avg == 2.0


def test_trace_single_token():
    stats = stats_from_trace(RoutingTrace(((2,),)), 4, 2, tile=16)
    assert stats.t_max == 16.0
    assert stats.e_max == 1.0


def test_trace_index_out_of_range():
    with pytest.raises(ValidationError):
        stats_from_trace(RoutingTrace(((9,),)), 4, 2)


def test_trace_load(tmp_path):
    p = tmp_path / "trace.csv"
    p.write_text("# token,expert...\n0,1,3\n1,0,2\n2,1,1\n")
    trace = RoutingTrace.load(p)
    assert trace.top_k == 2
    assert trace.choices == ((1, 3), (0, 2), (1, 1))


def _brute_force_stats(choices, total_experts, ep_degree, tile):
    """Independent assignment simulator for stats_from_trace."""
    counts = [0] * total_experts
    for row in choices:
        for e in row:
            counts[e] += 1

    def quant(c):
        if c <= 0:
            return 0.0
        full, rem = divmod(c, tile)
        return float(tile * (full + (1 if rem else 0)))

    per = total_experts // ep_degree
    gpus = []
    for g in range(ep_degree):
        qs = [quant(c) for c in counts[g * per:(g + 1) * per] if c > 0]
        gpus.append((sum(qs), len(qs), (sum(qs) / len(qs)) if qs else 0.0))
    work = [g[0] for g in gpus]
    bn = work.index(max(work))
    t_avg = sum(g[2] for g in gpus) / ep_degree
    e_avg = sum(g[1] for g in gpus) / ep_degree
    return t_avg, gpus[bn][2], e_avg, gpus[bn][1]


def test_trace_oracle_random():
    rng = random.Random(42)
    for _ in range(200):
        n_tokens = rng.randint(1, 64)
        top_k = rng.randint(1, 4)
        ep = rng.choice([2, 4])
        total = 16
        choices = tuple(tuple(rng.randrange(total) for _ in range(top_k))
                        for _ in range(n_tokens))
        tile = rng.choice([1, 4, 16])
        stats = stats_from_trace(RoutingTrace(choices), total, ep, tile)
        t_avg, t_max, e_avg, e_max = _brute_force_stats(choices, total, ep, tile)
        assert stats.t_avg == pytest.approx(t_avg)
        assert stats.t_max == pytest.approx(t_max)
        assert stats.e_avg == pytest.approx(e_avg)
        assert stats.e_max == pytest.approx(e_max)


def test_aggregate_direct_substitution():
    cost = aggregate_moe([CostEstimate(1.0, 100.0)],
                         [CostEstimate(1.5, 180.0)], p_idle=50.0)
    assert cost.latency == 1.5
    assert cost.energy == pytest.approx(125.0)  # 100 + 0.5s idle at 50 W


def test_aggregate_balanced():
    costs = [CostEstimate(0.5, 60.0), CostEstimate(0.25, 20.0)]
    out = aggregate_moe(costs, costs, p_idle=50.0)
    assert out.latency == 0.75
    assert out.energy == 80.0


def test_aggregate_inconsistent_rejected():
    with pytest.raises(ValidationError):
        aggregate_moe([CostEstimate(2.0, 10.0)], [CostEstimate(1.0, 10.0)], 50.0)


def test_aggregate_energy_lower_bound():
    rng = random.Random(1)
    for _ in range(50):
        avg, mx = [], []
        for _ in range(rng.randint(1, 6)):
            la = rng.uniform(0.01, 1.0)
            avg.append(CostEstimate(la, la * rng.uniform(100, 400)))
            mx.append(CostEstimate(la * rng.uniform(1.0, 2.0), 0.0))
        out = aggregate_moe(avg, mx, p_idle=80.0)
        assert out.energy >= sum(c.energy for c in avg) - 1e-12
