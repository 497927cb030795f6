"""Sweep, Pareto frontier, heuristic recovery, and insight query tests."""

import random

import pytest

from llm_energy import (
    ConfigPoint,
    ValidationError,
    heuristic_compare,
    insight_queries,
    pareto_front,
    recovery_rate,
    sweep,
)
from llm_energy.explorer import max_overlap_setting, normalize_grid
from llm_energy.interpreter import PREFILL


def _pt(lat, en, phase=PREFILL, **kw):
    base = dict(phase=phase, batch=1, isl=1, osl=1, tp=1, ep=1, cp=1,
                overlap=None, feasible=True, latency=lat, energy=en)
    base.update(kw)
    return ConfigPoint(**base)


def test_frontier_example():
    pts = [_pt(1, 10, batch=1), _pt(2, 5, batch=2), _pt(3, 6, batch=3)]
    front = pareto_front(pts).frontier
    assert {(p.latency, p.energy) for p in front} == {(1, 10), (2, 5)}


def test_all_identical_kept():
    pts = [_pt(1, 1, batch=b) for b in (1, 2, 3)]
    assert len(pareto_front(pts).frontier) == 3


def test_mixed_phases_rejected():
    with pytest.raises(ValidationError):
        pareto_front([_pt(1, 1), _pt(2, 2, phase="decode")])


def test_infeasible_excluded_from_frontier():
    pts = [_pt(1, 10), ConfigPoint(PREFILL, 9, 9, 9, 1, 1, 1, None,
                                   feasible=False, infeasible_reason="oom")]
    assert len(pareto_front(pts).frontier) == 1


def test_monotone_augmentation():
    pts = [_pt(1, 10, batch=1), _pt(2, 5, batch=2)]
    base = {p.identity for p in pareto_front(pts).frontier}
    with_dominated = pts + [_pt(3, 20, batch=3)]
    assert {p.identity for p in pareto_front(with_dominated).frontier} == base
    with_dominating = pts + [_pt(0.5, 1, batch=4)]
    new_front = {p.identity for p in pareto_front(with_dominating).frontier}
    assert len(new_front & base) < len(base)


def _oracle_frontier(points):
    """O(n^2) dominance oracle."""
    feas = [p for p in points if p.feasible]
    front = []
    for p in feas:
        dominated = any(
            q.latency <= p.latency and q.energy <= p.energy
            and (q.latency < p.latency or q.energy < p.energy)
            for q in feas)
        if not dominated:
            front.append(p)
    return front


def test_frontier_matches_oracle_random():
    rng = random.Random(3)
    for _ in range(100):
        n = rng.randint(1, 200)
        pts = [_pt(rng.randint(1, 20), rng.randint(1, 20), batch=i)
               for i in range(n)]
        got = {id(p) for p in pareto_front(pts).frontier}
        want = {id(p) for p in _oracle_frontier(pts)}
        assert got == want


def test_recovery_rate_example():
    ref = [_pt(i, 10 - i, batch=i) for i in range(1, 6)]  # 5-point frontier
    candidate = [ref[0]]
    assert recovery_rate(candidate, ref) == pytest.approx(0.2)
    assert recovery_rate(ref, ref) == 1.0
    with pytest.raises(ValidationError):
        recovery_rate(candidate, [])


def test_max_overlap_setting():
    pts = [_pt(1, 1, batch=1, overlap=(2, 4)), _pt(1, 1, batch=2, overlap=(4, 16)),
           _pt(1, 1, batch=3, overlap=(8, 4)), _pt(1, 1, batch=4)]
    assert max_overlap_setting(pts) == (4, 16)
    with pytest.raises(ValidationError):
        max_overlap_setting([_pt(1, 1)])


def test_normalize_grid():
    grid = normalize_grid({"batch": [1, 2], "overlap": ["none", "4:16"]})
    assert grid["batch"] == [1, 2]
    assert grid["tp"] == [1]
    assert grid["overlap"] == [None, (4, 16)]
    with pytest.raises(ValidationError):
        normalize_grid({"bogus": [1]})
    with pytest.raises(ValidationError):
        normalize_grid({"batch": [0]})
    with pytest.raises(ValidationError):
        normalize_grid({"batch": []})


def test_sweep_single_point(dense_spec, dims_8b, hw, roofline, comm_backend):
    pts = sweep(dense_spec, dims_8b, {"batch": [2], "isl": [128], "tp": [2]},
                hw, roofline, comm_backend)
    assert len(pts) == 1
    assert pts[0].feasible and pts[0].latency > 0


def test_sweep_cardinality_and_infeasible(dense_spec, dims_70b, hw, roofline,
                                          comm_backend):
    grid = {"batch": [1, 64], "isl": [128, 131072], "tp": [2]}
    pts = sweep(dense_spec, dims_70b, grid, hw, roofline, comm_backend)
    assert len(pts) == 4
    flags = {(p.batch, p.isl): p.feasible for p in pts}
    assert flags[(1, 128)] is True
    assert flags[(64, 131072)] is False


def test_sweep_thread_determinism(dense_spec, dims_8b, hw, roofline,
                                  comm_backend):
    grid = {"batch": [1, 4], "isl": [256, 1024], "tp": [2, 4]}
    serial = sweep(dense_spec, dims_8b, grid, hw, roofline, comm_backend)
    threaded = sweep(dense_spec, dims_8b, grid, hw, roofline, comm_backend,
                     jobs=4)
    assert [p.to_dict() for p in serial] == [p.to_dict() for p in threaded]


def test_heuristic_compare_identity():
    pts = [_pt(1, 10, batch=1, overlap=(4, 16)), _pt(2, 5, batch=2, overlap=(4, 16))]
    ref = pareto_front(pts).frontier
    out = heuristic_compare(pts, ref)
    assert out["heuristic_recovery"] == 1.0
    assert out["full_recovery"] == 1.0


def test_full_recovery_bounds_heuristic():
    rng = random.Random(11)
    for _ in range(20):
        pts = [_pt(rng.randint(1, 30), rng.randint(1, 30), batch=i,
                   overlap=rng.choice([None, (2, 4), (4, 16)]))
               for i in range(40)]
        if not any(p.overlap is not None for p in pts):
            continue
        ref = pareto_front(pts).frontier
        out = heuristic_compare(pts, ref)
        assert out["full_recovery"] >= out["heuristic_recovery"]


def test_insight_queries_prefill():
    pts = [_pt(2.0, 100.0, batch=4, tp=2, isl=4096),
           _pt(1.0, 600.0, batch=16, tp=8, isl=4096)]
    out = insight_queries(pts)
    row = out["b4tp2_vs_b16tp8"][0]
    assert row["isl"] == 4096
    assert row["etft_b4_tp2"] == 25.0
    assert row["etft_b16_tp8"] == 37.5
    assert out["per_isl_winners"][0]["winner"]["batch"] == 4


def test_insight_queries_decode():
    pts = [_pt(1.0, 160.0, phase="decode", batch=1, tp=8, osl=10),
           _pt(1.5, 320.0, phase="decode", batch=16, tp=8, osl=10)]
    out = insight_queries(pts)
    row = out["epot_batch_ratio"][0]
    assert row["epot_b1"] == 16.0
    assert row["epot_b16"] == 2.0
    assert row["epot_ratio_b16_over_b1"] == pytest.approx(0.125)


def test_insight_queries_missing_configs_note():
    out = insight_queries([_pt(1.0, 1.0, batch=2, tp=2, isl=100)])
    assert out["notes"]
