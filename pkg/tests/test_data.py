import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gbtaccel.data import (CATEGORICAL, NUMERIC, BinMap, DatasetFormatError, FieldSchema,
                           IngestError, RawTable, SynthSpec, analog_spec, build_bin_map,
                           build_schema, checksum, deserialize, fit_bin_maps, make_dataset,
                           one_hot_features, prepare, quantize_dataset, read_csv,
                           rebuild_columns, record_stride, replicate, serialize, synth_dataset,
                           write_csv)
from gbtaccel.engine import TrainConfig, train


def _raw(n=200, seed=0, missing=0.1):
    return synth_dataset(SynthSpec(n, 4, (3, 5), seed=seed, missing_rate=missing))


# ------------------------------------------------------------------ binning

def test_constant_field_single_value_bin():
    bm = build_bin_map([1.0, 1.0, 1.0], max_bins=4)
    assert bm.n_value_bins == 1 and bm.missing_bin == 1
    assert list(bm.transform([1.0, 1.0, 1.0])) == [0, 0, 0]


def test_uniform_quantile_populations_match_sort_oracle():
    rng = np.random.default_rng(3)
    x = rng.random(1000)
    bm = build_bin_map(x, max_bins=5)
    assert bm.n_value_bins == 4
    counts = np.bincount(bm.transform(x), minlength=5)[:4]
    # oracle: sort and cut at exact quartiles
    s = np.sort(x)
    cuts = [s[k * 1000 // 4 - 1] for k in (1, 2, 3)]
    oracle = np.bincount(np.searchsorted(cuts, x, side="left"), minlength=4)
    assert np.array_equal(counts, oracle)
    assert np.all(np.abs(counts - 250) <= 25)


def test_default_max_bins_is_256():
    fs = FieldSchema(0, NUMERIC)
    assert fs.max_bins == 256 and fs.n_bins == 256 and fs.missing_bin == 255


def test_all_missing_field_warns_and_keeps_only_missing_bin():
    with pytest.warns(UserWarning):
        bm = build_bin_map([np.nan, np.nan])
    assert bm.n_value_bins == 0 and list(bm.transform([np.nan, 3.0])) == [0, 0]


def test_max_bins_bounds():
    with pytest.raises(ValueError):
        build_bin_map([1.0], max_bins=1)
    with pytest.raises(ValueError):
        build_bin_map([1.0], max_bins=257)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=300),
       st.integers(2, 64))
def test_quantizer_monotone_and_total(values, max_bins):
    bm = build_bin_map(values, max_bins)
    x = np.sort(np.asarray(values))
    b = bm.transform(x)
    assert np.all(np.diff(b.astype(int)) >= 0)
    assert b.max() < bm.missing_bin or bm.n_value_bins == 0
    assert bm.n_value_bins <= max_bins - 1
    assert all(a < c for a, c in zip(bm.upper_boundaries, bm.upper_boundaries[1:]))


# ------------------------------------------------------------- quantization

def test_categorical_direct_map_and_absent_bin():
    raw = RawTable(["tier"], [CATEGORICAL], [np.array([2, -1, 0])], np.zeros(3), [3])
    ds = prepare(raw)
    assert ds.schema[0].n_bins == 4
    assert list(ds.columns[0]) == [2, 3, 0]


def test_category_out_of_range_names_coordinates():
    raw = RawTable(["a", "b"], [NUMERIC, CATEGORICAL],
                   [np.zeros(4), np.array([0, 1, 7, 0])], np.zeros(4), [0, 3])
    maps = fit_bin_maps(raw)
    with pytest.raises(IngestError) as e:
        quantize_dataset(raw, build_schema(raw, maps), maps)
    assert e.value.field_id == 1 and e.value.record == 2


def test_higgs_shape_record_bytes():
    ds = prepare(synth_dataset(analog_spec("higgs", 500)), pack_small_records=False)
    assert ds.n_fields == 28 and ds.record_stride == 64
    # packed mode puts two 28-byte records in each 64-byte block
    assert record_stride(28) == 32
    assert record_stride(46) == 64 and record_stride(115) == 128


def test_layout_duality_and_roundtrip():
    ds = prepare(_raw())
    assert np.array_equal(rebuild_columns(ds.row_blocks, ds.n_fields), ds.columns)
    for f, fs in enumerate(ds.schema):
        assert ds.columns[f].max() < fs.n_bins
        assert np.bincount(ds.columns[f], minlength=fs.n_bins).sum() == ds.n_records


def test_start_features_contiguous():
    ds = prepare(_raw())
    s = ds.schema
    for a, b in zip(s, s[1:]):
        assert b.start_feature == a.start_feature + a.n_features
    assert one_hot_features(s) == 4 + 3 + 5


def test_dataset_is_immutable():
    ds = prepare(_raw())
    with pytest.raises(ValueError):
        ds.columns[0, 0] = 1


def test_replicate_is_pure_repetition():
    ds = prepare(_raw(50))
    big = replicate(ds, 3)
    assert big.n_records == 150
    assert np.array_equal(big.columns[:, 50:100], ds.columns)
    assert np.array_equal(big.labels[100:], ds.labels)


# ------------------------------------------------------------ serialization

def test_serialize_roundtrip_with_checksum(tmp_path):
    ds = prepare(synth_dataset(analog_spec("higgs", 2000)))
    p = tmp_path / "h.bstr"
    crc = serialize(ds, p)
    assert checksum(p) == crc
    assert deserialize(p) == ds


def test_empty_dataset_roundtrips(tmp_path):
    ds = make_dataset([FieldSchema(0, NUMERIC, max_bins=2)], np.zeros((1, 0), np.uint8), np.zeros(0))
    serialize(ds, tmp_path / "e")
    assert deserialize(tmp_path / "e") == ds


@pytest.mark.parametrize("offset,kind", [(0, "magic"), (7, "version")])
def test_corrupt_header(tmp_path, offset, kind):
    ds = prepare(_raw(20))
    p = tmp_path / "d"
    serialize(ds, p)
    buf = bytearray(p.read_bytes())
    buf[offset] ^= 0xFF
    p.write_bytes(bytes(buf))
    with pytest.raises(DatasetFormatError) as e:
        deserialize(p)
    assert e.value.kind == kind


def test_truncated_and_bitflip(tmp_path):
    ds = prepare(_raw(20))
    p = tmp_path / "d"
    serialize(ds, p)
    buf = p.read_bytes()
    p.write_bytes(buf[:40])
    with pytest.raises(DatasetFormatError):
        deserialize(p)
    flipped = bytearray(buf)
    flipped[len(buf) // 2] ^= 1
    p.write_bytes(bytes(flipped))
    with pytest.raises(DatasetFormatError) as e:
        deserialize(p)
    assert e.value.kind == "checksum"


def test_csv_roundtrip(tmp_path):
    raw = _raw(60)
    write_csv(raw, tmp_path / "r.csv")
    assert read_csv(tmp_path / "r.csv") == raw


def test_csv_na_cells(tmp_path):
    (tmp_path / "x.csv").write_text("a,c:cat:2,label\n1.5,1,0\nNA,,1\n")
    raw = read_csv(tmp_path / "x.csv")
    assert np.isnan(raw.columns[0][1]) and raw.columns[1][1] == -1
    assert raw.n_categories == [0, 2]


# ---------------------------------------------------------------- synthetic

def test_synth_deterministic():
    s = SynthSpec(300, 3, (4,), seed=7)
    assert synth_dataset(s) == synth_dataset(s)
    assert synth_dataset(s) != synth_dataset(SynthSpec(300, 3, (4,), seed=8))


def test_flight_analog_shape():
    ds = prepare(synth_dataset(analog_spec("flight", 2000)))
    assert ds.n_fields == 8
    assert sum(fs.kind == CATEGORICAL for fs in ds.schema) == 7
    assert abs(one_hot_features(ds.schema) - 666) <= 1


def test_lopsided_root_split():
    spec = SynthSpec(20_000, 4, (), "noisy_tree", 0.99, seed=1)
    ds = prepare(synth_dataset(spec))
    ens, _ = train(ds, TrainConfig(n_trees=1, max_depth=1, learning_rate=1.0))
    t = ens.trees[0]
    frac = t.count[t.left[0]] / t.count[0]
    assert min(frac, 1 - frac) == pytest.approx(0.01, abs=0.01)


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(10, 1, label_model="nope")
    with pytest.raises(ValueError):
        SynthSpec(10, 1, skew=1.5)
    with pytest.raises(ValueError):
        SynthSpec(10, 0)


def test_binmap_roundtrip_types():
    bm = BinMap(0, (0.5, 1.5), 3)
    assert list(bm.transform([0.1, 0.5, 1.0, 9.0, np.nan])) == [0, 0, 1, 2, 3]
