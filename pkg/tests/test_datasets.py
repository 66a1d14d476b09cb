import json
from pathlib import Path

import numpy as np
import pytest

from graphssl.datasets import (
    DatasetError,
    features_from_csv_embedding,
    load_csv,
    sample_labels,
    two_circles,
    two_moons,
)
from graphssl.graph import build_knn_graph

KEEL_DIR = Path(__file__).parent / "data" / "keel"


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- generators --------------------------------------------------------------

def test_two_moons_noiseless_points_lie_on_arcs():
    data = two_moons(4, 4, noise=0.0, seed=0)
    X = data.cloud.points
    upper, lower = X[data.truth == 0], X[data.truth == 1]
    np.testing.assert_allclose(np.hypot(*upper.T), 1.0, atol=1e-15)
    assert np.all(upper[:, 1] >= 0)
    np.testing.assert_allclose(np.hypot(lower[:, 0] - 1.0, lower[:, 1] - 0.5), 1.0, atol=1e-15)
    assert np.all(lower[:, 1] <= 0.5)


def test_two_moons_counts_and_ir():
    data = two_moons(950, 50, noise=0.15, seed=3)
    assert data.n == 1000 and data.p == 2
    assert data.class_counts.tolist() == [950, 50]
    assert data.ir == 19.0
    assert data.minority_class == 1


def test_generators_are_deterministic():
    a, b = two_moons(30, 20, 0.15, seed=5), two_moons(30, 20, 0.15, seed=5)
    assert a.cloud.points.tobytes() == b.cloud.points.tobytes()
    c, d = two_circles(30, 20, 0.1, seed=5), two_circles(30, 20, 0.1, seed=5)
    assert c.cloud.points.tobytes() == d.cloud.points.tobytes()
    assert not np.array_equal(a.cloud.points, two_moons(30, 20, 0.15, seed=6).cloud.points)


def test_two_circles_noiseless_radii():
    data = two_circles(12, 7, noise=0.0, radius_ratio=0.3, seed=0)
    r = np.hypot(*data.cloud.points.T)
    np.testing.assert_allclose(r[data.truth == 0], 1.0, atol=1e-15)
    np.testing.assert_allclose(r[data.truth == 1], 0.3, atol=1e-15)


def test_two_circles_ir():
    assert two_circles(1000, 100, 0.1, seed=0).ir == 10.0


@pytest.mark.parametrize("args", [(0, 5, 0.1), (5, 0, 0.1), (5, 5, -1.0)])
def test_generator_argument_errors(args):
    with pytest.raises(DatasetError):
        two_moons(*args)
    with pytest.raises(DatasetError):
        two_circles(*args)


def test_two_circles_radius_ratio_range():
    for r in (0.0, 1.0, 1.5):
        with pytest.raises(DatasetError):
            two_circles(5, 5, radius_ratio=r)


# -- CSV ---------------------------------------------------------------------

def test_load_csv_small_fixture(tmp_path):
    data = load_csv(write(tmp_path, "1.0,2.0,A\n3.0,4.0,A\n5.0,6.0,B\n"), standardize=False)
    assert (data.n, data.p, data.k, data.ir) == (3, 2, 2, 2.0)
    assert data.class_names == ("A", "B")
    np.testing.assert_array_equal(data.cloud.points, [[1, 2], [3, 4], [5, 6]])
    assert data.manifest() == {
        "n": 3, "p": 2, "k": 2, "ir": 2.0, "class_counts": [2, 1],
        "class_names": ["A", "B"], "standardized": False,
    }
    json.dumps(data.manifest())


def test_load_csv_header_and_named_column(tmp_path):
    p = write(tmp_path, "cls;x;y\nneg;1;2\npos;3;5\nneg;2;2\n")
    data = load_csv(p, label_column="cls", delimiter=";", standardize=False)
    assert data.class_names == ("neg", "pos")
    np.testing.assert_array_equal(data.truth, [0, 1, 0])
    auto = load_csv(p, label_column=0, delimiter=";", standardize=False)
    np.testing.assert_array_equal(auto.cloud.points, data.cloud.points)


def test_load_csv_keel_metadata_is_skipped(tmp_path):
    text = "@relation toy\n@attribute a real\n@attribute b real\n@data\n1, 2, positive\n3, 4, negative\n5, 6, negative\n"
    data = load_csv(write(tmp_path, text, "toy.dat"), standardize=False)
    assert data.n == 3 and data.class_names == ("positive", "negative")
    assert data.minority_class == 0


def test_load_csv_standardizes_by_default(tmp_path):
    data = load_csv(write(tmp_path, "1,10,a\n2,10,a\n3,10,b\n"))
    np.testing.assert_allclose(data.cloud.points.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(data.cloud.points[:, 0].std(), 1.0)
    np.testing.assert_array_equal(data.cloud.points[:, 1], 0.0)
    assert data.standardized


@pytest.mark.parametrize("text, line", [
    ("1,2,a\n3,4,a\n5,6,b\n7,b\n", 4),
    ("1,2,a\n3,x,b\n", 2),
    ("1,2,a\n3,?,b\n", 2),
])
def test_load_csv_errors_cite_line(tmp_path, text, line):
    with pytest.raises(DatasetError, match=f"line {line}"):
        load_csv(write(tmp_path, text))


def test_load_csv_empty_file(tmp_path):
    with pytest.raises(DatasetError, match="no data rows"):
        load_csv(write(tmp_path, ""))


def test_embedding_fixture(tmp_path):
    rows = "0.1,0.2,cat\n0.1,0.2,dog\n0.5,0.1,cat\n0.9,0.4,bird\n0.3,0.3,dog\n0.7,0.2,bird\n"
    data = features_from_csv_embedding(write(tmp_path, rows))
    assert (data.n, data.k, data.p) == (6, 3, 2)
    assert not data.standardized
    # duplicated rows across classes still give a valid graph
    g = build_knn_graph(data.cloud, 2)
    assert g.n == 6 and np.all(g.degrees > 0)


def test_embedding_ragged_line(tmp_path):
    with pytest.raises(DatasetError, match="line 4"):
        features_from_csv_embedding(write(tmp_path, "1,2,a\n1,2,b\n1,2,c\n1,c\n"))


@pytest.mark.skipif(not KEEL_DIR.exists(), reason="KEEL benchmark files are not bundled")
@pytest.mark.parametrize("name, n, p, ir", [("new-thyroid1", 215, 5, 5.14), ("yeast3", 1484, 8, 8.10)])
def test_keel_table_rows(name, n, p, ir):
    data = load_csv(KEEL_DIR / f"{name}.dat")
    assert (data.n, data.p) == (n, p)
    assert data.ir == pytest.approx(ir, abs=0.01)


# -- sampling ----------------------------------------------------------------

def test_per_class_sampling_on_imbalanced_moons():
    data = two_moons(950, 50, 0.15, seed=0)
    split = sample_labels(data, per_class=2, seed=1)
    assert split.labeled.counts.tolist() == [2, 2]
    np.testing.assert_array_equal(data.truth[split.labeled.indices], split.labeled.classes)


def test_fraction_sampling_rounds_half_up_with_floor():
    data = two_moons(950, 50, 0.15, seed=0)
    split = sample_labels(data, fraction=0.01, ir_proportional=True, seed=1)
    assert split.labeled.counts.tolist() == [10, 1]
    flat = sample_labels(data, fraction=0.01, ir_proportional=False, seed=1)
    assert flat.labeled.counts.tolist() == [5, 5]


def test_sampling_is_deterministic():
    data = two_moons(100, 40, 0.15, seed=0)
    a = sample_labels(data, per_class=3, seed=9).labeled
    b = sample_labels(data, per_class=3, seed=9).labeled
    np.testing.assert_array_equal(a.indices, b.indices)


def test_sampling_errors_name_the_class():
    data = two_moons(20, 3, 0.1, seed=0)
    with pytest.raises(DatasetError, match="minor"):
        sample_labels(data, per_class=4, seed=0)
    with pytest.raises(DatasetError):
        sample_labels(data, seed=0)
    with pytest.raises(DatasetError):
        sample_labels(data, per_class=1, fraction=0.1, seed=0)


def test_sampling_marginals_are_uniform():
    data = two_moons(10, 10, 0.1, seed=0)
    hits = np.zeros(10)
    for seed in range(10_000):
        idx = sample_labels(data, per_class=1, seed=seed).labeled.indices
        hits[idx[0]] += 1
    np.testing.assert_allclose(hits / 10_000, 0.1, atol=0.01)
