import csv
import io
import json
import math
import statistics

import numpy as np
import pytest

from symnlf.evaluation import (
    DataCaseSpec,
    _pair_from_index,
    generate_synthetic,
    planted_model,
    rmse,
    run_data_case,
)
from symnlf.model import Model, ModelConfig, predict_edges
from symnlf.network import SymmetricSparseNetwork, WeightMap

from oracles import random_network


def _fixed_model(n=4, d=2):
    x = np.random.default_rng(0).normal(size=n * d)
    return Model(x, ModelConfig(d=d), n)


def _with_errors(model, pairs, errors):
    u = np.array([p[0] for p in pairs])
    i = np.array([p[1] for p in pairs])
    w = model.predict(u, i) + np.asarray(errors)
    return SymmetricSparseNetwork(model.node_count, u, i, w)


def test_rmse_zero_error():
    m = _fixed_model()
    assert rmse(m, _with_errors(m, [(0, 1), (1, 2), (2, 3)], [0.0, 0.0, 0.0])) == 0.0


def test_rmse_two_errors():
    m = _fixed_model()
    test = _with_errors(m, [(0, 1), (2, 3)], [0.3, -0.4])
    assert rmse(m, test) == pytest.approx(math.sqrt(0.125), abs=1e-12)


def test_rmse_single_edge():
    m = _fixed_model()
    assert rmse(m, _with_errors(m, [(1, 3)], [-0.7])) == pytest.approx(0.7, abs=1e-12)


def test_rmse_empty_rejected():
    with pytest.raises(ValueError):
        rmse(_fixed_model(), SymmetricSparseNetwork(4, [], [], []))


def test_rmse_permutation_invariant():
    net = random_network(12, 0.5, seed=3)
    m = Model(np.random.default_rng(3).normal(size=12 * 3), ModelConfig(d=3), 12)
    perm = np.random.default_rng(4).permutation(net.edge_count)
    # constructor sorts edges, so build the permuted copy by hand
    shuffled = SymmetricSparseNetwork(12, net.u[perm], net.i[perm], net.w[perm])
    assert rmse(m, shuffled) == pytest.approx(rmse(m, net), rel=1e-14)


def test_rmse_in_original_scale():
    x = np.zeros(2 * 2)
    wm = WeightMap(0.5, 0.0)
    m = Model(x, ModelConfig(d=2), 2, wm)
    # internal prediction 1.25 maps back to 2.5; stored internal weight 1.5 maps to 3.0
    test = SymmetricSparseNetwork(2, [0], [1], [1.5], wm)
    assert rmse(m, test) == pytest.approx(0.5, abs=1e-15)


# -- synthetic networks -------------------------------------------------------

def test_pair_decoder_matches_triu():
    for n in (2, 3, 7, 50, 301):
        a, b = np.triu_indices(n, 1)
        u, i = _pair_from_index(np.arange(len(a)), n)
        assert np.array_equal(u, a) and np.array_equal(i, b)


def test_synthetic_noise_free_weights():
    s = generate_synthetic(30, 3, 0.3, 0.0, seed=1)
    assert s.network.edge_count == 131  # 130.5 rounds half up
    assert np.all((s.network.w > 0) & (s.network.w < 3 + 1))
    assert rmse(planted_model(s), s.network) <= 1e-12


def test_synthetic_full_density():
    s = generate_synthetic(10, 2, 1.0, 0.0, seed=2)
    assert s.network.edge_count == 45


def test_synthetic_deterministic_and_noisy():
    a = generate_synthetic(20, 2, 0.5, 0.1, seed=5)
    b = generate_synthetic(20, 2, 0.5, 0.1, seed=5)
    assert np.array_equal(a.network.w, b.network.w)
    assert np.array_equal(a.planted, b.planted)
    clean = predict_edges(a.planted, a.network.u, a.network.i, 2)
    assert 0.05 < np.std(a.network.w - clean) < 0.2


@pytest.mark.parametrize("kwargs", [
    {"node_count": 5, "known_density": 0.01},
    {"node_count": 5, "known_density": 0.0},
    {"node_count": 1},
    {"node_count": 5, "d_true": 1},
    {"node_count": 5, "noise_std": -1.0},
])
def test_synthetic_errors(kwargs):
    with pytest.raises(ValueError):
        generate_synthetic(**kwargs)


# -- repeated data cases ------------------------------------------------------

@pytest.fixture(scope="module")
def small_case():
    return generate_synthetic(40, 3, 0.4, 0.0, seed=7).network


def test_single_repeat_has_zero_std(small_case):
    spec = DataCaseSpec("one", 0.5, repeats=1)
    rep = run_data_case(small_case, spec, ModelConfig(d=3, outer_max_iters=10))
    assert rep.second_order.rmse_std == 0.0
    assert len(rep.second_order.per_repeat) == 1


def test_aggregates_match_by_hand(small_case):
    spec = DataCaseSpec("agg", 0.5, repeats=4)
    rep = run_data_case(small_case, spec, ModelConfig(d=3, outer_max_iters=10), base_seed=3)
    vals = [r.rmse for r in rep.second_order.per_repeat]
    assert abs(rep.second_order.rmse_mean - sum(vals) / 4) <= 1e-12
    assert abs(rep.second_order.rmse_std - statistics.stdev(vals)) <= 1e-12
    assert len(set(vals)) > 1


def test_data_case_deterministic(small_case):
    spec = DataCaseSpec("det", 0.3, repeats=3)
    cfg = ModelConfig(d=3, outer_max_iters=15)
    a = run_data_case(small_case, spec, cfg, base_seed=11, compare=True)
    b = run_data_case(small_case, spec, cfg, base_seed=11, compare=True)
    assert a.to_csv() == b.to_csv()
    assert a.summary() == b.summary()


def test_data_case_parallel_matches_serial(small_case):
    spec = DataCaseSpec("par", 0.3, repeats=2)
    cfg = ModelConfig(d=3, outer_max_iters=8)
    serial = run_data_case(small_case, spec, cfg, base_seed=1)
    para = run_data_case(small_case, spec, cfg, base_seed=1, parallel=2)
    assert serial.to_csv() == para.to_csv()


def test_csv_layout(small_case):
    spec = DataCaseSpec("csv", 0.3, repeats=2)
    rep = run_data_case(small_case, spec, ModelConfig(d=3, outer_max_iters=5), compare=True)
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert len(rows) == 2 * (2 + 1)
    assert {r["optimizer"] for r in rows} == {"second-order", "first-order"}
    assert [r["repeat"] for r in rows[:3]] == ["0", "1", "mean"]
    assert "time_ms" not in rows[0]
    timed = list(csv.DictReader(io.StringIO(rep.to_csv(include_timing=True))))
    assert "time_ms" in timed[0]
    doc = json.loads(rep.summary())
    assert doc["repeats"] == 2 and set(doc["optimizers"]) == {"second-order", "first-order"}


def test_planted_noise_free_case_mean_rmse():
    net = generate_synthetic(120, 3, 0.3, 0.0, seed=8).network
    spec = DataCaseSpec("planted", 0.5, repeats=2)
    rep = run_data_case(net, spec, ModelConfig(d=3, lam=0.0), base_seed=0)
    assert rep.second_order.rmse_mean <= 0.05


def test_spec_validation():
    with pytest.raises(ValueError):
        DataCaseSpec("x", 0.2, repeats=0)
    with pytest.raises(ValueError):
        DataCaseSpec("x", 1.2)
