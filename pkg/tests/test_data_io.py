"""Manifest parsing, CSV ingestion with its error contract, and the exact
export/reload round trip."""

import json

import numpy as np
import pytest

from multiscreen import ManifestError, SimSetting, gen_instance, load_multistudy
from multiscreen.data_io import load_manifest, write_multistudy


def write(path, text):
    path.write_text(text)
    return path


def make_manifest(tmp_path, entries, feature_columns=None):
    doc = {"entries": entries}
    if feature_columns is not None:
        doc["feature_columns"] = feature_columns
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


class TestLoad:
    def test_two_studies_shared_columns(self, tmp_path):
        write(tmp_path / "a.csv", "g1,g2,g3,y\n1,2,3,1.5\n4,5,6,2.5\n7,8,9,3.5\n")
        write(tmp_path / "b.csv", "g1,g2,g3,y\n9,8,7,0.5\n6,5,4,1.0\n3,2,1,2.0\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"},
            {"study_id": "B", "data_path": "b.csv", "response_column": "y"},
        ])
        data = load_multistudy(manifest)
        assert data.p == 3 and data.k == 2
        assert data.feature_names == ("g1", "g2", "g3")
        assert np.array_equal(data.studies[0].y, [1.5, 2.5, 3.5])
        assert np.array_equal(data.studies[1].x[:, 2], [7.0, 4.0, 1.0])

    def test_intersection_with_warning(self, tmp_path):
        write(tmp_path / "a.csv", "a,b,c,y\n1,2,3,0\n4,5,6,1\n7,8,9,0\n")
        write(tmp_path / "b.csv", "b,c,d,y\n1,2,3,0\n4,5,6,1\n7,8,9,0\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"},
            {"study_id": "B", "data_path": "b.csv", "response_column": "y"},
        ])
        with pytest.warns(UserWarning, match="'a'.*'d'"):
            data = load_multistudy(manifest)
        assert data.feature_names == ("b", "c")
        assert data.p == 2

    def test_malformed_numeric_cites_row_and_column(self, tmp_path):
        rows = ["g1,g2,y"] + ["1,2,3"] * 6 + ["1,1.2.3,4", "5,6,7"]
        write(tmp_path / "a.csv", "\n".join(rows) + "\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"}])
        with pytest.raises(ManifestError, match="row 7, column g2"):
            load_multistudy(manifest)

    def test_missing_file(self, tmp_path):
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "nope.csv", "response_column": "y"}])
        with pytest.raises(ManifestError, match="not found"):
            load_multistudy(manifest)

    def test_duplicate_columns(self, tmp_path):
        write(tmp_path / "a.csv", "g1,g1,y\n1,2,3\n4,5,6\n7,8,9\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"}])
        with pytest.raises(ManifestError, match="duplicate column"):
            load_multistudy(manifest)

    def test_empty_intersection(self, tmp_path):
        write(tmp_path / "a.csv", "a,y\n1,0\n2,1\n3,0\n")
        write(tmp_path / "b.csv", "b,y\n1,0\n2,1\n3,0\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"},
            {"study_id": "B", "data_path": "b.csv", "response_column": "y"},
        ])
        with pytest.raises(ManifestError, match="share no feature columns"):
            load_multistudy(manifest)

    def test_missing_value_rejected(self, tmp_path):
        write(tmp_path / "a.csv", "g1,y\n1,2\n,3\n4,5\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"}])
        with pytest.raises(ManifestError, match="row 2, column g1"):
            load_multistudy(manifest)

    def test_explicit_feature_columns(self, tmp_path):
        write(tmp_path / "a.csv", "a,b,c,y\n1,2,3,0\n4,5,6,1\n7,8,9,0\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"}],
            feature_columns=["c", "a"])
        data = load_multistudy(manifest)
        assert data.feature_names == ("c", "a")
        assert np.array_equal(data.studies[0].x[:, 0], [3.0, 6.0, 9.0])

    def test_explicit_feature_column_missing(self, tmp_path):
        write(tmp_path / "a.csv", "a,b,y\n1,2,0\n3,4,1\n5,6,0\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"}],
            feature_columns=["a", "zz"])
        with pytest.raises(ManifestError, match="zz"):
            load_multistudy(manifest)

    def test_response_column_missing(self, tmp_path):
        write(tmp_path / "a.csv", "a,b\n1,2\n3,4\n5,6\n")
        manifest = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"}])
        with pytest.raises(ManifestError, match="response column"):
            load_multistudy(manifest)

    def test_manifest_validation(self, tmp_path):
        bad = tmp_path / "m.json"
        bad.write_text("{not json")
        with pytest.raises(ManifestError, match="JSON"):
            load_manifest(bad)
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "missing.json")
        dup = make_manifest(tmp_path, [
            {"study_id": "A", "data_path": "a.csv", "response_column": "y"},
            {"study_id": "A", "data_path": "b.csv", "response_column": "y"}])
        with pytest.raises(ManifestError, match="duplicate study ids"):
            load_manifest(dup)


class TestRoundTrip:
    def test_export_reload_exact(self, tmp_path):
        setting = SimSetting(n=17, p=9, K=3, s0=2, beta_low=0.4,
                             beta_high=0.8, B=1, seed=99)
        data, _, _ = gen_instance(setting, 0)
        manifest_path = write_multistudy(data, tmp_path / "exported")
        reloaded = load_multistudy(manifest_path)
        assert reloaded.feature_names == data.feature_names
        assert [s.id for s in reloaded.studies] == [s.id for s in data.studies]
        for a, b in zip(data.studies, reloaded.studies):
            assert np.array_equal(a.x, b.x)
            assert np.array_equal(a.y, b.y)

    def test_unequal_sample_sizes_round_trip(self, tmp_path, rng):
        from conftest import make_multistudy
        data, _ = make_multistudy(rng, n=12, p=4, k=3, unequal_n=True)
        manifest_path = write_multistudy(data, tmp_path / "exported")
        reloaded = load_multistudy(manifest_path)
        for a, b in zip(data.studies, reloaded.studies):
            assert a.n == b.n
            assert np.array_equal(a.x, b.x)
            assert np.array_equal(a.y, b.y)
