"""Ingest tests: normalization against sklearn's StandardScaler, the
synthetic generator against a linear-probe oracle, CSV loading against
hand-written files."""

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from cpsda.datamodel import DomainTag, FlowTable, make_sequences
from cpsda.errors import (DegenerateSplit, DimensionMismatch, EmptyFile,
                          InvalidConfig, MissingColumn, ParseError)
from cpsda.ingest import (AUTO_FEATURES, DatasetSchema, SynthConfig,
                          apply_normalizer, fit_normalizer, load_csv,
                          load_schema_preset, preset_path,
                          read_label_sidecar, split, synth_generate,
                          write_label_sidecar, write_table_csv)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


SIMPLE = DatasetSchema(feature_columns=("a", "b"), label_column="y",
                       timestamp_column="t")


# --- normalization (oracle: sklearn StandardScaler) ---

def test_normalizer_matches_standard_scaler():
    rng = np.random.default_rng(81)
    feats = rng.normal(loc=3.0, scale=2.5, size=(200, 6))
    table = FlowTable(features=feats, domain_tag=DomainTag.SOURCE,
                      feature_names=tuple(f"f{i}" for i in range(6)))
    norm = fit_normalizer(table)
    ours = apply_normalizer(norm, table).features
    ref = StandardScaler().fit_transform(feats)  # population std, same as ours
    np.testing.assert_allclose(ours, ref, atol=1e-10)


def test_normalizer_closed_form_single_feature():
    table = FlowTable(features=np.array([[1.0], [2.0], [3.0]]),
                      domain_tag=DomainTag.SOURCE, feature_names=("x",))
    norm = fit_normalizer(table)
    assert norm.mean[0] == pytest.approx(2.0)
    assert norm.std[0] == pytest.approx(np.sqrt(2.0 / 3.0))
    assert norm.std[0] == pytest.approx(0.8165, abs=5e-5)


def test_constant_feature_guard():
    table = FlowTable(features=np.full((5, 1), 5.0),
                      domain_tag=DomainTag.SOURCE, feature_names=("x",))
    norm = fit_normalizer(table)
    out = apply_normalizer(norm, table).features
    assert np.array_equal(out, np.zeros((5, 1)))


def test_apply_to_fit_data_centers_it():
    rng = np.random.default_rng(82)
    feats = rng.uniform(-50, 50, size=(300, 4))
    table = FlowTable(features=feats, domain_tag=DomainTag.TARGET,
                      feature_names=("a", "b", "c", "d"))
    out = apply_normalizer(fit_normalizer(table), table).features
    assert np.abs(out.mean(axis=0)).max() < 1e-5
    assert np.abs(out.std(axis=0) - 1.0).max() < 1e-5


def test_identity_normalizer_is_noop():
    rng = np.random.default_rng(83)
    feats = rng.normal(size=(20, 3))
    table = FlowTable(features=feats, domain_tag=DomainTag.SOURCE,
                      feature_names=("a", "b", "c"))
    from cpsda.ingest import Normalizer
    ident = Normalizer(mean=np.zeros(3), std=np.ones(3))
    np.testing.assert_array_equal(apply_normalizer(ident, table).features, feats)


def test_normalization_round_trip():
    rng = np.random.default_rng(84)
    feats = rng.normal(loc=10, scale=7, size=(100, 5))
    table = FlowTable(features=feats, domain_tag=DomainTag.SOURCE,
                      feature_names=tuple("abcde"))
    norm = fit_normalizer(table)
    back = norm.invert(apply_normalizer(norm, table).features)
    np.testing.assert_allclose(back, feats, rtol=1e-6)


def test_apply_normalizer_width_mismatch():
    table = FlowTable(features=np.ones((4, 2)), domain_tag=DomainTag.SOURCE,
                      feature_names=("a", "b"))
    norm = fit_normalizer(table)
    other = FlowTable(features=np.ones((4, 3)), domain_tag=DomainTag.SOURCE,
                      feature_names=("a", "b", "c"))
    with pytest.raises(DimensionMismatch):
        apply_normalizer(norm, other)


# --- CSV loading ---

def test_load_csv_hand_written(tmp_path):
    p = _write(tmp_path, "d.csv",
               "t,a,b,y\n0.0,1.0,2.0,0\n1.0,3.0,4.0,1\n2.0,5.0,6.0,1\n")
    table = load_csv(p, SIMPLE, DomainTag.SOURCE)
    np.testing.assert_array_equal(table.labels, [0, 1, 1])
    np.testing.assert_array_equal(table.features, [[1, 2], [3, 4], [5, 6]])
    assert table.feature_names == ("a", "b")


def test_load_csv_sorts_by_timestamp(tmp_path):
    p = _write(tmp_path, "d.csv",
               "t,a,b,y\n5.0,9.0,9.0,1\n1.0,1.0,1.0,0\n3.0,2.0,2.0,0\n")
    table = load_csv(p, SIMPLE, DomainTag.SOURCE)
    np.testing.assert_array_equal(table.timestamps, [1.0, 3.0, 5.0])
    np.testing.assert_array_equal(table.features[:, 0], [1.0, 2.0, 9.0])
    np.testing.assert_array_equal(table.labels, [0, 0, 1])


def test_load_csv_positive_label_values(tmp_path):
    p = _write(tmp_path, "d.csv", "a,b,y\n1,2,Attack\n3,4,Benign\n5,6,attack\n")
    schema = DatasetSchema(feature_columns=("a", "b"), label_column="y",
                           positive_label_values=frozenset({"Attack", "attack"}))
    table = load_csv(p, schema, DomainTag.SOURCE)
    np.testing.assert_array_equal(table.labels, [1, 0, 1])


def test_load_csv_auto_features(tmp_path):
    p = _write(tmp_path, "d.csv", "t,x1,x2,y\n0,1,2,0\n1,3,4,1\n")
    schema = DatasetSchema(feature_columns=AUTO_FEATURES, label_column="y",
                           timestamp_column="t")
    table = load_csv(p, schema, DomainTag.TARGET)
    assert table.feature_names == ("x1", "x2")


def test_load_csv_missing_column(tmp_path):
    p = _write(tmp_path, "d.csv", "a,y\n1,0\n")
    with pytest.raises(MissingColumn):
        load_csv(p, SIMPLE, DomainTag.SOURCE)


def test_load_csv_empty_file(tmp_path):
    with pytest.raises(EmptyFile):
        load_csv(_write(tmp_path, "e.csv", ""), SIMPLE, DomainTag.SOURCE)
    with pytest.raises(EmptyFile):
        load_csv(_write(tmp_path, "h.csv", "t,a,b,y\n"), SIMPLE, DomainTag.SOURCE)


def test_load_csv_parse_error_localized(tmp_path):
    p = _write(tmp_path, "d.csv",
               "t,a,b,y\n0,1,2,0\n1,oops,4,1\n2,5,6,0\n")
    with pytest.raises(ParseError) as err:
        load_csv(p, SIMPLE, DomainTag.SOURCE)
    assert err.value.row == 1
    assert "'oops'" in str(err.value)


def test_load_csv_short_row(tmp_path):
    p = _write(tmp_path, "d.csv", "t,a,b,y\n0,1,2,0\n1,3\n")
    with pytest.raises(ParseError) as err:
        load_csv(p, SIMPLE, DomainTag.SOURCE)
    assert err.value.row == 1


def test_load_csv_is_stable(tmp_path):
    p = _write(tmp_path, "d.csv",
               "t,a,b,y\n1.0,1,2,0\n1.0,3,4,1\n0.5,5,6,0\n")
    t1 = load_csv(p, SIMPLE, DomainTag.SOURCE)
    t2 = load_csv(p, SIMPLE, DomainTag.SOURCE)
    np.testing.assert_array_equal(t1.features, t2.features)
    np.testing.assert_array_equal(t1.labels, t2.labels)


# --- schema presets ---

def test_bundled_presets_load():
    wustl = load_schema_preset(preset_path("wustl2021"))
    assert len(wustl.feature_columns) == 23
    assert wustl.label_column == "Label"
    ros = load_schema_preset(preset_path("rospace_lightweight"))
    assert ros.feature_columns == AUTO_FEATURES


def test_schema_rejects_duplicates_and_overlap():
    with pytest.raises(InvalidConfig):
        DatasetSchema(feature_columns=("a", "a"))
    with pytest.raises(InvalidConfig):
        DatasetSchema(feature_columns=("a", "b"), label_column="a")
    with pytest.raises(InvalidConfig):
        DatasetSchema(feature_columns=())


def test_schema_preset_parse_errors(tmp_path):
    with pytest.raises(InvalidConfig):
        load_schema_preset(_write(tmp_path, "s.schema", "nonsense line\n"))
    with pytest.raises(InvalidConfig):
        load_schema_preset(_write(tmp_path, "s.schema", "unknown_key = 3\n"))
    with pytest.raises(InvalidConfig):
        load_schema_preset(_write(tmp_path, "s.schema", "label_column = y\n"))


# --- splitting ---

def _seqs(n_rows=124, length=25):
    rng = np.random.default_rng(85)
    table = FlowTable(features=rng.normal(size=(n_rows, 3)),
                      domain_tag=DomainTag.SOURCE,
                      feature_names=("a", "b", "c"),
                      labels=rng.integers(0, 2, size=n_rows))
    return make_sequences(table, length, 1)


def test_temporal_split_takes_leading_fraction():
    seqs = _seqs()  # 100 windows
    train, test = split(seqs, 0.8)
    assert len(train) == 80 and len(test) == 20
    np.testing.assert_array_equal(train.starts, seqs.starts[:80])


def test_split_floor_rounding():
    seqs = _seqs(n_rows=34)  # 10 windows
    train, test = split(seqs, 0.99)
    assert len(train) == 9 and len(test) == 1


def test_random_split_deterministic_per_seed():
    seqs = _seqs()
    a_train, a_test = split(seqs, 0.7, seed=3, mode="random")
    b_train, b_test = split(seqs, 0.7, seed=3, mode="random")
    np.testing.assert_array_equal(a_train.starts, b_train.starts)
    np.testing.assert_array_equal(a_test.starts, b_test.starts)
    c_train, _ = split(seqs, 0.7, seed=4, mode="random")
    assert not np.array_equal(a_train.starts, c_train.starts)


def test_purged_split_has_no_overlap_leakage():
    seqs = _seqs()
    train, test = split(seqs, 0.8, purge=True)
    first_test = test.starts[0]
    assert (train.starts + seqs.length <= first_test).all()


def test_split_validation():
    seqs = _seqs()
    with pytest.raises(InvalidConfig):
        split(seqs, 0.0)
    with pytest.raises(InvalidConfig):
        split(seqs, 1.0)
    with pytest.raises(InvalidConfig):
        split(seqs, 0.5, mode="stratified")
    with pytest.raises(DegenerateSplit):
        split(_seqs(n_rows=26), 0.2)  # 2 windows, fraction 0.2 -> 0 train


# --- synthetic generator ---

def test_synth_label_mean_near_attack_fraction():
    cfg = SynthConfig(n_source=10_000, n_target=10_000, seed=7)
    res = synth_generate(cfg)
    assert abs(res.source.labels.mean() - 0.3) < 0.05
    assert abs(res.target_labels.mean() - 0.3) < 0.05


def test_synth_target_table_exposes_no_labels():
    res = synth_generate(SynthConfig(n_source=500, n_target=500))
    assert res.target.labels is None
    assert len(res.target_labels) == 500


def test_synth_is_deterministic():
    a = synth_generate(SynthConfig(n_source=300, n_target=300, seed=11))
    b = synth_generate(SynthConfig(n_source=300, n_target=300, seed=11))
    np.testing.assert_array_equal(a.source.features, b.source.features)
    np.testing.assert_array_equal(a.target.features, b.target.features)
    np.testing.assert_array_equal(a.target_labels, b.target_labels)


def test_synth_noiseless_separated_classes_are_linearly_separable():
    cfg = SynthConfig(n_source=2000, n_target=100, latent_separation=12.0,
                      noise_std=0.0, seed=7)
    res = synth_generate(cfg)
    probe = LogisticRegression(max_iter=1000)
    probe.fit(res.source.features, res.source.labels)
    assert probe.score(res.source.features, res.source.labels) == 1.0


def test_synth_labels_arrive_in_bursts():
    res = synth_generate(SynthConfig(n_source=20_000, n_target=100, seed=7))
    flips = int(np.abs(np.diff(res.source.labels)).sum())
    # ~20000/average run length transitions, far fewer than i.i.d. labeling
    assert flips < 800


def test_synth_dimensions_and_tags():
    res = synth_generate(SynthConfig(n_source=100, n_target=120))
    assert res.source.features.shape == (100, 23)
    assert res.target.features.shape == (120, 60)
    assert res.source.domain_tag is DomainTag.SOURCE
    assert res.target.domain_tag is DomainTag.TARGET


def test_synth_config_validation():
    with pytest.raises(InvalidConfig):
        SynthConfig(attack_fraction=0.0)
    with pytest.raises(InvalidConfig):
        SynthConfig(source_dim=1)
    with pytest.raises(InvalidConfig):
        SynthConfig(noise_std=-1.0)


# --- CSV round trip and sidecars ---

def test_table_csv_round_trip(tmp_path):
    res = synth_generate(SynthConfig(n_source=50, n_target=40, seed=3))
    p = tmp_path / "source.csv"
    write_table_csv(res.source, p)
    schema = DatasetSchema(feature_columns=AUTO_FEATURES, label_column="label",
                           timestamp_column="time")
    back = load_csv(p, schema, DomainTag.SOURCE)
    np.testing.assert_array_equal(back.features, res.source.features)
    np.testing.assert_array_equal(back.labels, res.source.labels)


def test_label_sidecar_round_trip(tmp_path):
    labels = np.array([0, 1, 1, 0, 1])
    p = tmp_path / "t.labels.csv"
    write_label_sidecar(labels, p)
    np.testing.assert_array_equal(read_label_sidecar(p), labels)


def test_label_sidecar_rejects_bad_files(tmp_path):
    with pytest.raises(EmptyFile):
        read_label_sidecar(_write(tmp_path, "a.csv", ""))
    with pytest.raises(ParseError):
        read_label_sidecar(_write(tmp_path, "b.csv", "wrong\n1\n"))
    with pytest.raises(EmptyFile):
        read_label_sidecar(_write(tmp_path, "c.csv", "label\n"))
    with pytest.raises(ParseError):
        read_label_sidecar(_write(tmp_path, "d.csv", "label\nx\n"))
