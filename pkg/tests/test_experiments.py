import json
import math

import numpy as np
import pytest

import trilinear_tf.experiments as ex
from trilinear_tf.dyadic import QuadTile, ShiftedDyadicInterval as SI, Tile
from trilinear_tf.experiments import (
    ExperimentConfig,
    GridSet,
    build_exceptional_set,
    concentrated_set,
    distance_class,
    log4_trend,
    partition_by_distance,
    random_union,
    rwt_experiment,
    rwt_sweep,
    union_measure,
)
from trilinear_tf.tilenorms import random_rank10_collection


def quad_on(j, k):
    I = SI(j, k)
    return QuadTile(tuple(Tile(I, SI(-j, m)) for m in range(4)))


def test_random_union_has_exact_measure():
    rng = np.random.default_rng(0)
    for m in (1.0, 0.5, 1 / 16, 1 / 1024):
        for _ in range(20):
            ivs = random_union(rng, m, J=10)
            assert 1 <= len(ivs) <= 16
            assert union_measure(ivs) == m
            assert all(0 <= a < b <= 1 for a, b in ivs)
            assert all(b < c for (_, b), (c, _) in zip(ivs, ivs[1:]))
    with pytest.raises(ValueError):
        random_union(rng, 2.0)


def test_concentrated_set():
    rng = np.random.default_rng(1)
    (a, b), = concentrated_set(rng, 1 / 8)
    assert b - a == 1 / 8 and 0 <= a and b <= 1


def test_grid_set_operations():
    omega = GridSet(3, -2, [0, 1, 1, 1, 0, 0, 1, 1])
    assert omega.measure == 5 / 8
    assert omega.intervals() == [(-1 / 8, 2 / 8), (4 / 8, 6 / 8)]
    assert omega.subtract_from([(0, 1)]) == [(0.25, 0.5), (0.75, 1)]
    assert omega.distance_to_complement(0, 1) == 1
    assert omega.distance_to_complement(-1, 2) == 0
    assert omega.distance_to_complement(2, 3) == 0
    assert omega.distance_to_complement(5, 6) == 0


def test_full_period_sets_give_empty_omega():
    # the normalized weight makes M^0 1_[0,1) ≤ 1 < C
    E = [[(0.0, 1.0)]] * 3
    exc = build_exceptional_set(E, (0, 0, 0), C=8)
    assert exc.measure == 0 and exc.escalations == 0


def test_concentrated_sets_shrink_with_C():
    rng = np.random.default_rng(2)
    E = [concentrated_set(rng, 1 / 256) for _ in range(3)]
    sizes = [build_exceptional_set(E, (0, 3, 1), C=c, escalate=False).measure for c in (2, 4, 8)]
    assert sizes[0] > sizes[1] > sizes[2] > 0
    # weak-type accounting: |Ω| ≤ Σ_j A_j / C with A_j = C |Ω_j|
    for c, size in zip((2, 4, 8), sizes):
        exc = build_exceptional_set(E, (0, 3, 1), C=c, escalate=False)
        assert size <= sum(exc.weak_constants()) / c + 1e-15
        assert max(exc.weak_constants()) <= 8


def test_escalation_doubles_C():
    rng = np.random.default_rng(3)
    E = [random_union(rng, 1 / 16) for _ in range(3)]
    exc = build_exceptional_set(E, (0, 0, 0), C=0.5)
    assert exc.measure < 0.5
    assert exc.C == 0.5 * 2**exc.escalations and exc.escalations >= 1


def test_padding_is_wide_enough(monkeypatch):
    rng = np.random.default_rng(4)
    E = [concentrated_set(rng, 1 / 512) for _ in range(3)]
    shifts = (12, -5, 2)
    base = build_exceptional_set(E, shifts, C=2, escalate=False)
    wide = ex._padding
    monkeypatch.setattr(ex, "_padding", lambda n, t: tuple(3 * x for x in wide(n, t)))
    padded = build_exceptional_set(E, shifts, C=2, escalate=False)
    assert padded.omega.intervals() == base.omega.intervals()


def test_partition_with_empty_omega():
    rng = np.random.default_rng(5)
    quads = random_rank10_collection(rng, 40, max_scale=7, positions=8)
    omega = GridSet(10, 0, np.zeros(1024, bool))
    assert list(partition_by_distance(quads, omega)) == [0]


def test_partition_on_a_constructed_omega():
    # Ω covers [0, 1) except its last cell at scale 2^-10; left of 0 is off the grid, so in Ω^c
    mask = np.ones(1024, bool)
    mask[-1] = False
    omega = GridSet(10, 0, mask)
    assert distance_class(quad_on(-6, 0), omega) == 0
    inner = quad_on(-6, 31)  # cells [496, 512)
    dist = min(496, 1023 - 512)
    assert omega.distance_to_complement(496, 512) == dist
    assert distance_class(inner, omega) == math.ceil(math.log2(dist / 16))
    with pytest.raises(ValueError):
        distance_class(quad_on(-12, 0), omega)


def test_distance_class_boundaries():
    mask = np.zeros(64, bool)
    mask[8:56] = True
    omega = GridSet(6, 0, mask)
    # 4-cell intervals at distance 0, 4, 8, 12, 16, 20 from Ω^c; ratio 2^d goes to class d
    for start, expected in [(8, 0), (12, 1), (16, 1), (20, 2), (24, 2), (28, 3)]:
        assert distance_class(quad_on(-4, start // 4), omega) == expected


def test_partition_is_complete_and_disjoint():
    rng = np.random.default_rng(6)
    quads = random_rank10_collection(rng, 100, max_scale=8, positions=32)
    E = [concentrated_set(rng, 1 / 64) for _ in range(3)]
    omega = build_exceptional_set(E, (0, 0, 0), C=2, escalate=False).omega
    parts = partition_by_distance(quads, omega)
    flat = [q for qs in parts.values() for q in qs]
    assert len(flat) == len(set(flat)) == len(quads)
    assert len(parts) >= 2


def test_config_validation_and_digest():
    with pytest.raises(ValueError):
        ExperimentConfig(gammas=(0.95, 0.5, 0.95))
    with pytest.raises(ValueError):
        ExperimentConfig(gammas=(1.0, 0.45, 0.95))
    with pytest.raises(ValueError):
        ExperimentConfig(measures=(0.0, 0.5, 0.5))
    with pytest.raises(ValueError):
        ExperimentConfig(grid_J=6, max_scale=8)
    a, b = ExperimentConfig(seed=3), ExperimentConfig.from_dict(ExperimentConfig(seed=3).to_dict())
    assert a.digest() == b.digest() != ExperimentConfig(seed=4).digest()


def test_full_period_baseline():
    cfg = ExperimentConfig(collection_size=40, max_scale=6)
    rep = rwt_experiment(cfg, E=[[(0.0, 1.0)]] * 3)
    assert rep.exceptional["measure"] == 0 and rep.e4_prime_measure == 1
    assert np.isfinite(rep.ratio) and [d for d, _, _ in rep.strata] == [0]


def test_pipeline_invariants():
    for seed, family in [(0, "concentrated"), (1, "random")]:
        cfg = ExperimentConfig(seed=seed, case=2, set_family=family, measures=(1 / 64, 1 / 16, 1 / 64))
        rep = rwt_experiment(cfg)
        assert rep.e4_prime_measure >= 0.5
        scale = sum(abs(complex(*c)) for _, _, c in rep.strata)
        assert rep.stratum_sum_error <= 1e-10 * scale
        assert sum(n for _, n, _ in rep.strata) == cfg.collection_size
        if not math.isnan(rep.decay_slope):
            assert rep.decay_slope < 0


def test_report_is_deterministic():
    cfg = ExperimentConfig(seed=7, collection_size=30, max_scale=6, set_family="concentrated", measures=(0.05, 0.1, 0.1))
    first, second = rwt_experiment(cfg).to_json(), rwt_experiment(cfg).to_json()
    assert first == second
    report = json.loads(first)
    assert {"config", "exceptional", "strata", "ratio", "bound", "stratum_sum_error"} <= set(report)


def test_random_phases_stay_bounded():
    cfg = ExperimentConfig(seed=8, collection_size=30, max_scale=6, random_phases=True)
    rep = rwt_experiment(cfg)
    assert np.isfinite(rep.ratio)


def test_sweep_shapes_and_trends():
    base = ExperimentConfig(seed=3, case=2, set_family="concentrated", measures=(0.25, 1 / 16, 1 / 16))
    rows = rwt_sweep(base, measure_grid=(1.0, 0.25, 1 / 16), shift_grid=(0, 4, 16))
    sizes = [r.ratio for r in rows if r.label == "size"]
    assert max(sizes) / min(sizes) < 4
    assert log4_trend(rows) <= 1
    assert all(r.e4_prime >= 0.5 for r in rows)
