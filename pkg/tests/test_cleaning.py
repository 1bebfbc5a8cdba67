import json
import math

import numpy as np
import pytest

from conftest import make_space, random_cleaning_instance
from oracles import (
    oracle_conditional_entropy,
    oracle_entropy_bits,
    oracle_enumerate,
    oracle_knn_predict,
)

from dqops.cleaning import (
    CleaningSession,
    IncompleteDataset,
    WorldCapError,
    candidates_to_json,
    checking_query,
    completed_dataset,
    counting_query,
    generate_candidates,
    incomplete_dataset_to_csv,
    load_incomplete_dataset,
    simulate_cleaning,
    tallies_for,
    world_count,
)
from dqops.core import DataError
from dqops.knn import KnnConfig, knn_predict


def build(features, labels, candidates, class_count=2):
    return IncompleteDataset(features, labels, make_space(class_count), candidates)


def decisive_fixture():
    """One decisive cell near the query, nine irrelevant far cells."""
    features = [[np.nan], [1.0]] + [[np.nan]] * 9
    labels = [0, 1] + [i % 2 for i in range(9)]
    candidates = {(0, 0): (0.1, 5.0)}
    for i in range(9):
        candidates[(2 + i, 0)] = (100.0, 101.0)
    data = build(features, labels, candidates)
    truth = {(0, 0): 0.1}
    truth.update({(2 + i, 0): 100.0 for i in range(9)})
    return data, np.array([[0.0]]), truth


# ---------------------------------------------------------------- invariants


def test_world_count():
    data = build([[np.nan, 1.0], [2.0, 3.0]], [0, 1], {(0, 0): (1.0, 2.0, 3.0, 4.0)})
    assert world_count(data) == 4
    clean = build([[1.0], [2.0]], [0, 1], {})
    assert world_count(clean) == 1
    two = build(
        [[np.nan, np.nan], [2.0, 3.0]],
        [0, 1],
        {(0, 0): (1.0, 2.0), (0, 1): (1.0, 2.0, 3.0, 4.0, 5.0)},
    )
    assert world_count(two) == 10


def test_incomplete_dataset_validation():
    with pytest.raises(DataError, match="without candidates"):
        build([[np.nan]], [0], {})
    with pytest.raises(DataError, match="empty candidate"):
        build([[np.nan]], [0], {(0, 0): ()})
    with pytest.raises(DataError, match="non-missing"):
        build([[1.0]], [0], {(0, 0): (1.0,)})


def test_counting_query_no_missing_matches_knn(tiny_train):
    data = build(tiny_train.features, tiny_train.labels, {})
    tally = counting_query(data, [1.0, 1.0])
    assert tally.world_total == 1
    predicted = knn_predict(tiny_train, [1.0, 1.0])
    assert tally.counts[predicted] == 1 and sum(tally.counts) == 1


def test_counting_query_certain_by_construction():
    # both candidate values keep record 0 nearest to the query
    data = build([[np.nan], [9.0]], [0, 1], {(0, 0): (1.0, 2.0)})
    tally = counting_query(data, [0.0])
    assert tally.counts == (2, 0)
    assert checking_query(data, [0.0]) == 0


def test_checking_query_uncertain():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (0.1, 5.0)})
    assert checking_query(data, [0.0]) is None
    tally = counting_query(data, [0.0])
    assert tally.certain_label() is None and tally.counts == (1, 1)


def test_cap_exceeded():
    candidates = {(0, i): (1.0, 2.0) for i in range(4)}
    features = [[np.nan] * 4, [1.0] * 4]
    data = build(features, [0, 1], candidates)
    with pytest.raises(WorldCapError) as err:
        counting_query(data, [0.0] * 4, cap=8)
    assert err.value.world_count == 16 and err.value.cap == 8


def test_counting_matches_enumeration_randomized():
    rng = np.random.default_rng(2024)
    for _ in range(40):
        data, queries, cfg = random_cleaning_instance(rng)
        got = tallies_for(data, queries, cfg)
        counts, total = oracle_enumerate(
            data.features,
            data.labels,
            data.class_count,
            data.candidates,
            queries,
            cfg.k,
            cfg.normalization,
        )
        assert total == world_count(data)
        for tally, expected in zip(got, counts):
            assert list(tally.counts) == expected
            assert tally.world_total == total


def test_checking_agrees_with_counting_everywhere():
    rng = np.random.default_rng(99)
    for _ in range(15):
        data, queries, cfg = random_cleaning_instance(rng)
        for q in queries:
            tally = counting_query(data, q, cfg)
            certain = checking_query(data, q, cfg)
            if certain is None:
                assert max(tally.counts) < tally.world_total
            else:
                assert tally.counts[certain] == tally.world_total


def test_oracles_agree_with_each_other():
    # sanity for the test harness itself: per-world numpy oracle vs pure python
    rng = np.random.default_rng(55)
    for _ in range(10):
        data, queries, cfg = random_cleaning_instance(rng)
        counts, total = oracle_enumerate(
            data.features, data.labels, data.class_count, data.candidates,
            queries, cfg.k, cfg.normalization,
        )
        assert total == world_count(data)
        if not data.cells():
            world = data.features
            for p, q in enumerate(queries):
                y = oracle_knn_predict(world, data.labels, q, cfg.k, data.class_count, cfg.normalization)
                assert counts[p][y] == total


# ------------------------------------------------------------------ entropy


def test_entropy_all_certain_is_zero():
    data = build([[0.0], [9.0]], [0, 1], {})
    session = CleaningSession(data, [[0.0], [9.0]])
    assert session.prediction_entropy() == 0.0
    assert session.is_all_certain()


def test_entropy_fair_coin_is_one_bit():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (0.1, 5.0)})
    session = CleaningSession(data, [[0.0]])
    assert session.prediction_entropy() == pytest.approx(1.0, abs=1e-12)


def test_entropy_matches_enumeration_randomized():
    rng = np.random.default_rng(31337)
    for _ in range(25):
        data, queries, cfg = random_cleaning_instance(rng)
        session = CleaningSession(data, queries, cfg)
        counts, total = oracle_enumerate(
            data.features, data.labels, data.class_count, data.candidates,
            queries, cfg.k, cfg.normalization,
        )
        assert session.prediction_entropy() == pytest.approx(
            oracle_entropy_bits(counts, total), abs=1e-9
        )


def test_empty_validation_rejected():
    data = build([[1.0], [2.0]], [0, 1], {})
    with pytest.raises(DataError, match="empty"):
        CleaningSession(data, np.zeros((0, 1)))


# ------------------------------------------------------- conditional entropy


def test_conditional_entropy_of_irrelevant_cell_keeps_entropy():
    # the far cell never enters the neighborhood: conditioning on it changes nothing
    data = build(
        [[np.nan], [1.0], [np.nan]],
        [0, 1, 0],
        {(0, 0): (0.1, 5.0), (2, 0): (100.0, 101.0)},
        class_count=2,
    )
    session = CleaningSession(data, [[0.0]], KnnConfig(normalization="none"))
    base = session.prediction_entropy()
    assert session.conditional_entropy((2, 0)) == pytest.approx(base, abs=1e-12)
    assert session.conditional_entropy((0, 0)) == pytest.approx(0.0, abs=1e-12)


def test_conditional_entropy_matches_oracle_randomized():
    rng = np.random.default_rng(777)
    checked = 0
    while checked < 12:
        data, queries, cfg = random_cleaning_instance(rng)
        if not data.dirty_cells():
            continue
        checked += 1
        session = CleaningSession(data, queries, cfg)
        for cell in data.dirty_cells():
            expected = oracle_conditional_entropy(
                data.features, data.labels, data.class_count, data.candidates,
                queries, cfg.k, cfg.normalization, cell,
            )
            assert session.conditional_entropy(cell) == pytest.approx(expected, abs=1e-9)


def test_information_never_hurts():
    rng = np.random.default_rng(4242)
    for _ in range(20):
        data, queries, cfg = random_cleaning_instance(rng)
        if not data.dirty_cells():
            continue
        session = CleaningSession(data, queries, cfg)
        base = session.prediction_entropy()
        for cell, cond in session.conditional_entropies().items():
            assert cond <= base + 1e-9


def test_conditional_entropy_requires_dirty_cell():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (3.0,)})
    session = CleaningSession(data, [[0.0]])
    with pytest.raises(DataError, match="already clean"):
        session.conditional_entropy((0, 0))
    with pytest.raises(DataError, match="unknown cell"):
        session.conditional_entropy((1, 0))


# --------------------------------------------------------------- suggestion


def test_suggest_single_dirty_cell():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (0.1, 5.0)})
    session = CleaningSession(data, [[0.0]])
    assert session.suggest_next() == (0, 0)


def test_suggest_prefers_decisive_cell():
    data, validation, _ = decisive_fixture()
    session = CleaningSession(data, validation)
    assert session.suggest_next() == (0, 0)


def test_suggest_tie_breaks_by_record_then_feature():
    # two symmetric irrelevant cells produce exactly equal conditionals
    data = build(
        [[0.0, 0.0, np.nan], [np.nan, 1.0, 1.0], [5.0, 5.0, 5.0]],
        [0, 1, 0],
        {(0, 2): (100.0, 101.0), (1, 0): (100.0, 101.0)},
    )
    session = CleaningSession(data, [[0.0, 0.0, 0.0]], KnnConfig(normalization="none"))
    scores = session.conditional_entropies()
    assert scores[(0, 2)] == scores[(1, 0)]
    assert session.suggest_next() == (0, 2)


def test_suggest_requires_dirty_cells():
    data = build([[1.0], [2.0]], [0, 1], {})
    session = CleaningSession(data, [[0.0]])
    with pytest.raises(DataError, match="no dirty cells"):
        session.suggest_next()


# ------------------------------------------------------------------ repairs


def test_repair_all_cells_reaches_certainty():
    rng = np.random.default_rng(321)
    data, queries, cfg = random_cleaning_instance(rng)
    session = CleaningSession(data, queries, cfg)
    for cell in list(data.cells()):
        session.apply_repair(cell, data.candidates[cell][0])
    assert session.world_count() == 1
    assert session.prediction_entropy() == 0.0
    assert session.is_all_certain()
    assert len(session.entropy_trace) == len(data.cells()) + 1


def test_repair_with_sole_candidate_only_logs():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (3.0,)})
    session = CleaningSession(data, [[0.0]])
    before = session.prediction_entropy()
    session.apply_repair((0, 0), 3.0)
    assert session.cleaned_log == [((0, 0), 3.0)]
    assert session.prediction_entropy() == before


def test_repair_outside_candidates_is_allowed():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (0.1, 5.0)})
    session = CleaningSession(data, [[0.0]])
    session.apply_repair((0, 0), 77.0)  # human knows better
    assert session.data.candidates[(0, 0)] == (77.0,)
    assert session.world_count() == 1


def test_repair_unknown_cell_rejected():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (0.1, 5.0)})
    session = CleaningSession(data, [[0.0]])
    with pytest.raises(DataError, match="unknown cell"):
        session.apply_repair((1, 0), 1.0)


def test_expected_entropy_over_candidates_equals_conditional():
    # fixing the cell to each candidate and averaging reproduces the conditional
    rng = np.random.default_rng(888)
    found = 0
    while found < 8:
        data, queries, cfg = random_cleaning_instance(rng)
        dirty = data.dirty_cells()
        if not dirty:
            continue
        found += 1
        session = CleaningSession(data, queries, cfg)
        cell = dirty[0]
        conditional = session.conditional_entropy(cell)
        entropies = []
        for value in data.candidates[cell]:
            branch = CleaningSession(data, queries, cfg)
            branch.apply_repair(cell, value)
            entropies.append(branch.prediction_entropy())
        assert np.mean(entropies) == pytest.approx(conditional, abs=1e-9)


# --------------------------------------------------------------- simulation


def test_simulate_all_clean_visits_every_dirty_cell():
    data, validation, truth = decisive_fixture()
    session = CleaningSession(data, validation)
    trace = simulate_cleaning(session, truth, policy="random", seed=3, stop="all_clean")
    assert len(trace) == 10
    assert session.is_all_clean()


def test_simulate_already_certain_is_empty():
    data = build([[0.0], [9.0]], [0, 1], {})
    session = CleaningSession(data, [[0.0]])
    assert simulate_cleaning(session, {}, stop="all_certain") == []


def test_simulate_cpclean_beats_random_on_decisive_fixture():
    cp_steps = []
    rand_steps = []
    for seed in range(30):
        data, validation, truth = decisive_fixture()
        session = CleaningSession(data, validation)
        cp_steps.append(len(simulate_cleaning(session, truth, "cpclean", seed)))
        data, validation, truth = decisive_fixture()
        session = CleaningSession(data, validation)
        rand_steps.append(len(simulate_cleaning(session, truth, "random", seed)))
    assert all(s == 1 for s in cp_steps)
    assert np.mean(cp_steps) <= np.mean(rand_steps)


def test_simulate_is_deterministic():
    data, validation, truth = decisive_fixture()
    s1 = CleaningSession(data, validation)
    t1 = simulate_cleaning(s1, truth, "random", seed=11)
    data, validation, truth = decisive_fixture()
    s2 = CleaningSession(data, validation)
    t2 = simulate_cleaning(s2, truth, "random", seed=11)
    assert [(s.cell, s.value, s.entropy_bits, s.certain) for s in t1] == [
        (s.cell, s.value, s.entropy_bits, s.certain) for s in t2
    ]


def test_simulate_requires_truth_for_dirty_cells():
    data, validation, truth = decisive_fixture()
    session = CleaningSession(data, validation)
    del truth[(0, 0)]
    with pytest.raises(DataError, match="ground truth"):
        simulate_cleaning(session, truth)


# ------------------------------------------------------- generators and files


def test_generate_candidates_rules():
    features = np.array(
        [[1.0, np.nan], [3.0, 4.0], [5.0, 4.0], [np.nan, 8.0]], dtype=float
    )
    labels = np.array([0, 0, 1, 1])
    cands = generate_candidates(features, labels, top_k=2)
    # column 0 observed: 1, 3, 5 -> mean 3, median 3, class-1 mean 5, top2 {1, 3}
    assert cands[(3, 0)] == (1.0, 3.0, 5.0)
    # column 1 observed: 4, 4, 8 -> mean 16/3, median 4, class-0 mean 4, top2 {4, 8}
    assert cands[(0, 1)] == (4.0, 16.0 / 3.0, 8.0)


def test_generate_candidates_empty_column_rejected():
    features = np.array([[np.nan], [np.nan]])
    with pytest.raises(DataError, match="no observed values"):
        generate_candidates(features, np.array([0, 1]))


def test_incomplete_csv_round_trip(tmp_path):
    data = build(
        [[np.nan, 2.0], [3.0, np.nan], [5.0, 6.0]],
        [0, 1, 0],
        {(0, 0): (1.0, 7.0), (1, 1): (2.0, 4.0, 6.0)},
    )
    csv_path = tmp_path / "dirty.csv"
    sidecar_path = tmp_path / "cands.json"
    csv_path.write_text(incomplete_dataset_to_csv(data))
    sidecar_path.write_text(candidates_to_json(data))
    back = load_incomplete_dataset(csv_path, sidecar_path)
    assert back.candidates == data.candidates
    assert np.array_equal(np.isnan(back.features), np.isnan(data.features))
    assert back.labels.tolist() == data.labels.tolist()


def test_incomplete_csv_missing_label_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,label\n1.0,?\n")
    with pytest.raises(DataError, match="labels are never missing"):
        load_incomplete_dataset(path)


def test_sidecar_for_non_missing_cell_rejected(tmp_path):
    path = tmp_path / "ok.csv"
    path.write_text("f0,label\n1.0,a\n2.0,b\n")
    sidecar = tmp_path / "cands.json"
    sidecar.write_text(json.dumps({"candidates": {"0,0": [1.0]}}))
    with pytest.raises(DataError, match="not missing"):
        load_incomplete_dataset(path, sidecar)


def test_loader_generates_when_sidecar_absent(tmp_path):
    path = tmp_path / "dirty.csv"
    path.write_text("f0,label\n?,a\n2.0,b\n4.0,a\n")
    data = load_incomplete_dataset(path)
    assert (0, 0) in data.candidates
    assert len(data.candidates[(0, 0)]) >= 1


def test_completed_dataset():
    data = build([[np.nan], [1.0]], [0, 1], {(0, 0): (3.0,)})
    done = completed_dataset(data)
    assert done.features[0, 0] == 3.0
    dirty = build([[np.nan], [1.0]], [0, 1], {(0, 0): (3.0, 4.0)})
    with pytest.raises(DataError, match="dirty"):
        completed_dataset(dirty)
