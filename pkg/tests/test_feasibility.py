import numpy as np
import pytest

from conftest import make_space, separable_blobs

from dqops.core import DataError, LabeledDataset, feature_table_to_csv
from dqops.feasibility import (
    BEREstimate,
    EmbeddingSpec,
    NoiseConfig,
    ber_bounds_from_knn_error,
    feasibility,
    full_report_dict,
    inject_label_noise,
    noise_sweep,
)
from dqops.knn import KnnConfig, holdout_error


# ------------------------------------------------------------------- bounds


def test_bounds_zero_error():
    for c in (2, 3, 10):
        assert ber_bounds_from_knn_error(0.0, c) == (0.0, 0.0)


def test_bounds_half_error_two_classes():
    lower, upper = ber_bounds_from_knn_error(0.5, 2)
    assert lower == pytest.approx(0.5, abs=1e-12)
    assert upper == 0.5


def test_bounds_closed_form_point():
    lower, upper = ber_bounds_from_knn_error(0.18, 2)
    assert lower == pytest.approx(0.1, abs=1e-12)
    assert upper == 0.18


def test_bounds_ordering_and_monotonicity():
    for c in (2, 3, 5):
        prev_lower, prev_upper = -1.0, -1.0
        limit = (c - 1) / c
        for err in np.linspace(0.0, limit, 40):
            lower, upper = ber_bounds_from_knn_error(float(err), c)
            assert 0.0 <= lower <= upper <= 1.0
            assert lower >= prev_lower - 1e-12 and upper >= prev_upper
            prev_lower, prev_upper = lower, upper


def test_bounds_input_validation():
    with pytest.raises(DataError):
        ber_bounds_from_knn_error(1.5, 2)
    with pytest.raises(DataError):
        ber_bounds_from_knn_error(0.1, 1)


# -------------------------------------------------------------- feasibility


def test_feasibility_separable_two_clusters():
    train = separable_blobs(100, seed=1)
    validation = separable_blobs(100, seed=2)
    report = feasibility(train, validation, [EmbeddingSpec.identity()])
    assert report.overall.lower == 0.0
    assert report.overall.upper == 0.0
    assert report.overall.max_accuracy == 1.0
    assert report.train_size == 200 and report.validation_size == 200


def test_feasibility_prefers_informative_embedding(tmp_path):
    train = separable_blobs(80, seed=3)
    validation = separable_blobs(80, seed=4)
    # a collapsed embedding maps every sample to the same vector
    collapsed_train = tmp_path / "collapsed_train.csv"
    collapsed_validation = tmp_path / "collapsed_val.csv"
    collapsed_train.write_text(feature_table_to_csv(np.zeros((160, 2)), prefix="e"))
    collapsed_validation.write_text(feature_table_to_csv(np.zeros((160, 2)), prefix="e"))
    specs = [
        EmbeddingSpec.identity(),
        EmbeddingSpec("collapsed", str(collapsed_train), str(collapsed_validation)),
    ]
    report = feasibility(train, validation, specs)
    by_name = {e.embedding: e for e in report.estimates}
    # collapsing destroys the signal: error ~= share of labels disagreeing with record 0
    assert by_name["collapsed"].knn_error > 0.3
    assert report.overall.embedding == "identity"
    assert report.overall.lower == 0.0


def test_feasibility_duplicated_points_give_half():
    space = make_space(2)
    rng = np.random.default_rng(8)
    base = rng.normal(size=(50, 2))
    features = np.vstack([base, base])
    labels = np.array([0] * 50 + [1] * 50)
    train = LabeledDataset(features, labels, space)
    validation = LabeledDataset(features, labels, space)
    report = feasibility(train, validation, [EmbeddingSpec.identity()])
    assert report.overall.upper == pytest.approx(0.5)
    assert report.overall.lower == pytest.approx(0.5, abs=1e-9)


def test_feasibility_k_pinned_to_one():
    train = separable_blobs(30, seed=5)
    validation = separable_blobs(30, seed=6)
    wide = feasibility(train, validation, [EmbeddingSpec.identity()], KnnConfig(k=5))
    narrow = feasibility(train, validation, [EmbeddingSpec.identity()], KnnConfig(k=1))
    assert wide.overall.knn_error == narrow.overall.knn_error


def test_feasibility_row_count_mismatch(tmp_path):
    train = separable_blobs(10, seed=7)
    validation = separable_blobs(10, seed=8)
    emb = tmp_path / "emb.csv"
    emb.write_text(feature_table_to_csv(np.zeros((3, 2)), prefix="e"))
    spec = EmbeddingSpec("short", str(emb), str(emb))
    with pytest.raises(DataError, match="rows"):
        feasibility(train, validation, [spec])


def test_embedding_spec_parsing():
    spec = EmbeddingSpec.parse_cli_spec("resnet=train.csv:val.csv")
    assert spec.name == "resnet"
    assert spec.train_source == "train.csv" and spec.validation_source == "val.csv"
    assert EmbeddingSpec.parse_cli_spec("identity").name == "identity"
    with pytest.raises(DataError):
        EmbeddingSpec.parse_cli_spec("broken")
    with pytest.raises(DataError):
        EmbeddingSpec.parse_cli_spec("name=onlytrain")


# ------------------------------------------------------------------- noise


def test_noise_rho_zero_is_identity():
    data = separable_blobs(50, seed=9)
    noisy = inject_label_noise(data, NoiseConfig(0.0, seed=1))
    assert noisy == data


def test_noise_rho_one_flips_everything():
    data = separable_blobs(50, seed=10)
    noisy = inject_label_noise(data, NoiseConfig(1.0, seed=1))
    assert np.all(noisy.labels != data.labels)


def test_noise_preserves_features_and_is_deterministic():
    data = separable_blobs(50, seed=11)
    a = inject_label_noise(data, NoiseConfig(0.3, seed=5))
    b = inject_label_noise(data, NoiseConfig(0.3, seed=5))
    c = inject_label_noise(data, NoiseConfig(0.3, seed=6))
    assert np.array_equal(a.features, data.features)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.labels, c.labels)


def test_noise_flip_fraction_concentrates():
    space = make_space(2)
    data = LabeledDataset(np.arange(10000.0)[:, None], np.zeros(10000, dtype=int), space)
    noisy = inject_label_noise(data, NoiseConfig(0.1, seed=2))
    flipped = float(np.mean(noisy.labels != data.labels))
    assert abs(flipped - 0.1) <= 0.01


def test_noise_multiclass_never_keeps_label_on_flip():
    space = make_space(3)
    data = LabeledDataset(np.arange(3000.0)[:, None], np.tile([0, 1, 2], 1000), space)
    noisy = inject_label_noise(data, NoiseConfig(1.0, seed=3))
    assert np.all(noisy.labels != data.labels)
    assert set(np.unique(noisy.labels)) <= {0, 1, 2}


# ------------------------------------------------------------------- sweep


def test_sweep_recovers_noise_level():
    train = separable_blobs(500, seed=12)
    validation = separable_blobs(500, seed=13)
    sweep = noise_sweep(train, validation, EmbeddingSpec.identity(), [0.0, 0.1, 0.2], seed=7)
    for rho, estimate in sweep:
        assert estimate.lower == pytest.approx(rho, abs=0.05)
    lowers = [e.lower for _, e in sweep]
    assert all(b >= a - 0.02 for a, b in zip(lowers, lowers[1:]))


def test_sweep_rho_zero_equals_plain_feasibility():
    train = separable_blobs(60, seed=14)
    validation = separable_blobs(60, seed=15)
    sweep = noise_sweep(train, validation, EmbeddingSpec.identity(), [0.0], seed=1)
    plain = feasibility(train, validation, [EmbeddingSpec.identity()])
    assert sweep[0][1] == plain.overall


def test_sweep_validates_rhos():
    train = separable_blobs(10, seed=16)
    validation = separable_blobs(10, seed=17)
    with pytest.raises(DataError, match="sorted"):
        noise_sweep(train, validation, EmbeddingSpec.identity(), [0.2, 0.1])
    with pytest.raises(DataError, match="0.5"):
        noise_sweep(train, validation, EmbeddingSpec.identity(), [0.6])


def test_full_report_dict_shape():
    train = separable_blobs(40, seed=18)
    validation = separable_blobs(40, seed=19)
    doc = full_report_dict(train, validation, [EmbeddingSpec.identity()], rhos=[0.0, 0.1], seed=3)
    assert doc["overall"]["embedding"] == "identity"
    assert doc["k"] == 1 and "inversion" in doc
    assert doc["noise_placement"] == "train+validation"
    assert [entry["rho"] for entry in doc["noise_sweep"]] == [0.0, 0.1]
    assert doc["estimates"][0]["max_accuracy"] == 1 - doc["estimates"][0]["ber_lower"]


def test_permuting_samples_leaves_estimates_unchanged():
    train = separable_blobs(60, seed=20)
    validation = separable_blobs(60, seed=21)
    rng = np.random.default_rng(0)
    perm = rng.permutation(train.n_samples)
    shuffled = LabeledDataset(train.features[perm], train.labels[perm], train.classes)
    a = feasibility(train, validation, [EmbeddingSpec.identity()]).overall
    b = feasibility(shuffled, validation, [EmbeddingSpec.identity()]).overall
    assert a == b
