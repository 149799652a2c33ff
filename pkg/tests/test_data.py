import numpy as np
import pytest

from edgeret.data import (
    FeatureSet, SyntheticSpec, generate_synthetic, load_dataset, load_features, save_dataset, save_features,
)
from edgeret.errors import BadSpec, DimInconsistent, ParseError


def nearest_centroid_top1(ds):
    ids = np.unique(ds.train.labels)
    cents = np.stack([ds.train.x[ds.train.labels == i].mean(0) for i in ids])
    d = ((ds.query.x[:, None, :] - cents[None]) ** 2).sum(-1)
    return float(np.mean(ids[d.argmin(1)] == ds.query.labels))


def test_default_benchmark_is_separable_for_nearest_centroid():
    assert nearest_centroid_top1(generate_synthetic(SyntheticSpec())) >= 0.9


def test_split_sizes_and_determinism():
    spec = SyntheticSpec(num_ids=5, samples_per_id=6, input_dim=3, seed=4)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert len(a.query) == 10 and len(a.gallery) == 10 and len(a.train) == 10
    np.testing.assert_array_equal(a.train.x, b.train.x)
    np.testing.assert_array_equal(a.query.labels, b.query.labels)
    c = generate_synthetic(SyntheticSpec(num_ids=5, samples_per_id=6, input_dim=3, seed=5))
    assert not np.array_equal(a.train.x, c.train.x)


def test_zero_spread_puts_samples_on_centroids():
    ds = generate_synthetic(SyntheticSpec(num_ids=4, samples_per_id=4, input_dim=8, cluster_spread=0.0))
    np.testing.assert_allclose(np.linalg.norm(ds.query.x, axis=1), np.sqrt(8))
    for lab in range(4):
        rows = ds.train.x[ds.train.labels == lab]
        np.testing.assert_array_equal(rows, rows[:1].repeat(len(rows), 0))


@pytest.mark.parametrize("kw", [dict(num_ids=1), dict(samples_per_id=1), dict(query_per_id=5, gallery_per_id=6),
                                dict(cluster_spread=-1.0)])
def test_bad_spec(kw):
    with pytest.raises(BadSpec):
        generate_synthetic(SyntheticSpec(**kw))


def test_feature_file_roundtrip(tmp_path):
    fs = FeatureSet(np.random.default_rng(0).standard_normal((7, 5)) * 1e3, np.arange(7) % 3)
    path = tmp_path / "f.txt"
    save_features(path, fs)
    back = load_features(path)
    np.testing.assert_array_equal(back.x, fs.x)
    np.testing.assert_array_equal(back.labels, fs.labels)
    assert path.read_text().startswith("dim=5\n")


def test_dataset_roundtrip(tmp_path):
    ds = generate_synthetic(SyntheticSpec(num_ids=3, samples_per_id=5, input_dim=2))
    save_dataset(tmp_path, ds)
    back = load_dataset(tmp_path)
    assert back.num_ids == 3
    np.testing.assert_array_equal(back.gallery.x, ds.gallery.x)


def test_malformed_row_names_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("dim=2\n0,1.0,2.0\n1,abc,3.0\n")
    with pytest.raises(ParseError) as err:
        load_features(path)
    assert err.value.line == 3


def test_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0,1.0\n")
    with pytest.raises(ParseError):
        load_features(path)


def test_dim_inconsistent(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("dim=3\n0,1.0,2.0\n")
    with pytest.raises(DimInconsistent):
        load_features(path)
