import csv
import json

import numpy as np
import pytest

from adaf.analysis import (RoutingProfile, compare_runs,
                           clip_routing_profiles, distance_matrix,
                           export_filters, patch_routing_weights,
                           read_metrics_log, routing_profiles,
                           write_compare_csv, write_profiles)
from adaf.errors import (AlignmentError, UnsupportedAnalysisError,
                         ValidationError)
from adaf.model import AudioClassifier
from conftest import tiny_bb_cfg, tiny_fe_cfg
from oracles import distance_matrix_oracle


def profile(name, weights):
    return RoutingProfile(class_name=name,
                          mean_weights=np.asarray(weights, dtype=np.float64),
                          n_patches=10)


def make_model(kind="bank-of-filterbanks", seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    return AudioClassifier(tiny_fe_cfg(kind), tiny_bb_cfg(), rng)


class TestDistanceMatrix:
    def test_identical_profiles_zero(self):
        dm = distance_matrix([profile("a", [0.5, 0.5]),
                              profile("b", [0.5, 0.5])])
        np.testing.assert_array_equal(dm.values, np.zeros((2, 2)))

    def test_orthogonal_one_hot_is_sqrt2(self):
        dm = distance_matrix([profile("a", [1.0, 0.0]),
                              profile("b", [0.0, 1.0])])
        assert dm.values[0, 1] == pytest.approx(np.sqrt(2))
        assert dm.labels == ["a", "b"]

    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(0)
        profs = [profile(f"c{i}", rng.dirichlet(np.ones(4))) for i in range(5)]
        dm = distance_matrix(profs)
        np.testing.assert_allclose(dm.values, dm.values.T, atol=1e-15)
        np.testing.assert_array_equal(np.diag(dm.values), np.zeros(5))

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed)
        vecs = rng.random((4, 3))
        profs = [profile(f"c{i}", v) for i, v in enumerate(vecs)]
        np.testing.assert_allclose(distance_matrix(profs).values,
                                   distance_matrix_oracle(list(vecs)),
                                   atol=1e-12)

    def test_needs_two_profiles(self):
        with pytest.raises(ValidationError):
            distance_matrix([profile("a", [1.0])])


class TestRoutingProfiles:
    def test_baseline_model_unsupported(self, tiny_dataset):
        model = make_model("baseline")
        with pytest.raises(UnsupportedAnalysisError, match="baseline"):
            routing_profiles(model, tiny_dataset["valid"])

    def test_patch_weights_shape_and_simplex(self, tiny_dataset):
        model = make_model()
        ds = tiny_dataset["valid"]
        w = patch_routing_weights(model, ds)
        n, t, _ = ds.patches.shape
        assert w.shape == (n, t, 2)
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-5)

    def test_profiles_average_patch_weights(self, tiny_dataset):
        model = make_model(seed=1)
        ds = tiny_dataset["valid"]
        weights = patch_routing_weights(model, ds)
        profiles = routing_profiles(model, ds)
        assert [p.class_name for p in profiles] == ds.manifest.classes
        for ci, p in enumerate(profiles):
            mask = ds.labels[:, ci] == 1
            expect = weights[mask].reshape(-1, 2).mean(axis=0)
            np.testing.assert_allclose(p.mean_weights, expect, atol=1e-7)
            assert p.n_patches == int(mask.sum()) * weights.shape[1]

    def test_batch_size_invariant(self, tiny_dataset):
        model = make_model(seed=2)
        ds = tiny_dataset["valid"]
        a = patch_routing_weights(model, ds, batch_size=1)
        b = patch_routing_weights(model, ds, batch_size=64)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_clip_profiles_shape(self, tiny_dataset):
        model = make_model(seed=3)
        ds = tiny_dataset["valid"]
        per_clip, labels = clip_routing_profiles(model, ds)
        assert per_clip.shape == (len(ds), 2)
        assert labels.shape == ds.labels.shape


class TestExportFilters:
    def _tensors(self, w):
        return {"frontend.bank0.conv_w": w}

    def test_row_count_and_values(self, tmp_path):
        rng = np.random.default_rng(0)
        w = rng.standard_normal((3, 16)).astype(np.float32)
        tp, sp = export_filters(self._tensors(w), 0, str(tmp_path / "run"))
        with open(tp, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["filter", "tap", "value"]
        assert len(rows) == 1 + 3 * 16
        got = np.array([float(r[2]) for r in rows[1:]]).reshape(3, 16)
        np.testing.assert_allclose(got, w, rtol=1e-6)

    def test_zero_filter_flat_spectrum(self, tmp_path):
        w = np.zeros((1, 8), dtype=np.float32)
        _, sp = export_filters(self._tensors(w), 0, str(tmp_path / "z"))
        with open(sp, newline="") as f:
            rows = list(csv.reader(f))[1:]
        assert len(rows) == 8 // 2 + 1
        assert all(float(r[2]) == 0.0 for r in rows)

    def test_cosine_filter_peaks_at_its_bin(self, tmp_path):
        k = 16
        taps = np.cos(2 * np.pi * 3 * np.arange(k) / k)
        _, sp = export_filters(self._tensors(taps[None, :].astype(np.float32)),
                               0, str(tmp_path / "c"))
        with open(sp, newline="") as f:
            mags = [float(r[2]) for r in list(csv.reader(f))[1:]]
        assert int(np.argmax(mags)) == 3

    def test_bad_bank_index_lists_available(self, tmp_path):
        with pytest.raises(ValidationError, match="bank0"):
            export_filters(self._tensors(np.zeros((1, 4))), 5,
                           str(tmp_path / "x"))

    def test_bankless_checkpoint_unsupported(self, tmp_path):
        with pytest.raises(UnsupportedAnalysisError):
            export_filters({"frontend.w1": np.zeros((4, 4))}, 0,
                           str(tmp_path / "x"))


class TestWriteProfiles:
    def test_files_and_summary(self, tmp_path):
        profs = [profile("a", [0.7, 0.3]), profile("b", [0.2, 0.8])]
        dm = distance_matrix(profs)
        pp, dp = write_profiles(profs, dm, str(tmp_path / "run"), "valid")
        with open(pp, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["class", "n_patches", "w0", "w1"]
        assert rows[1][0] == "a" and float(rows[1][2]) == pytest.approx(0.7)
        with open(tmp_path / "run-routing-summary.json") as f:
            summary = json.load(f)
        assert summary["split"] == "valid"
        assert summary["classes"] == ["a", "b"]


def write_log(path, rows):
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")
    return str(path)


class TestCompareRuns:
    def rows(self, values):
        return [{"epoch": e, "top_k_patch": v, "map": v / 2}
                for e, v in enumerate(values)]

    def test_join_passthrough(self, tmp_path):
        # compare_runs labels runs by their parent directory
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        a = write_log(tmp_path / "a" / "metrics.ndjson", self.rows([0.1, 0.2]))
        b = write_log(tmp_path / "b" / "metrics.ndjson", self.rows([0.3, 0.4]))
        header, rows = compare_runs([a, b])
        assert header == ["epoch", "a", "b"]
        assert rows == [[0, 0.1, 0.3], [1, 0.2, 0.4]]

    def test_metric_selection(self, tmp_path):
        (tmp_path / "a").mkdir()
        a = write_log(tmp_path / "a" / "m.ndjson", self.rows([0.2, 0.4]))
        _, rows = compare_runs([a], metric="map")
        assert rows == [[0, 0.1], [1, 0.2]]

    def test_shuffled_lines_resorted(self, tmp_path):
        rows_in = self.rows([0.1, 0.2, 0.3])
        p = write_log(tmp_path / "m.ndjson", rows_in[::-1])
        assert [r["epoch"] for r in read_metrics_log(p)] == [0, 1, 2]

    def test_mismatched_epoch_axes(self, tmp_path):
        a = write_log(tmp_path / "a.ndjson", self.rows([0.1, 0.2]))
        b = write_log(tmp_path / "b.ndjson", self.rows([0.1, 0.2, 0.3]))
        with pytest.raises(AlignmentError, match=r"\[2, 3\]"):
            compare_runs([a, b])

    def test_csv_roundtrip(self, tmp_path):
        header = ["epoch", "x", "y"]
        rows = [[0, 0.125, 0.5], [1, 0.25, 0.75]]
        out = tmp_path / "cmp.csv"
        write_compare_csv(header, rows, str(out))
        with open(out, newline="") as f:
            got = list(csv.reader(f))
        assert got[0] == header
        assert [float(v) for v in got[1][1:]] == [0.125, 0.5]

    def test_blank_lines_skipped(self, tmp_path):
        p = tmp_path / "m.ndjson"
        p.write_text('{"epoch": 0, "map": 0.5}\n\n{"epoch": 1, "map": 0.6}\n')
        assert len(read_metrics_log(str(p))) == 2
