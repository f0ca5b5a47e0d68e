import numpy as np
import pytest

from diffimpute.data import (
    Dataset,
    chrono_split,
    compute_stats,
    denormalize,
    flatten_windows,
    load_csv,
    make_synthetic,
    normalize,
    save_csv,
)
from diffimpute.errors import DataError


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + rows) + "\n")


class TestLoadCsv:
    def test_exact_windowing(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a", "b"], [f"{i},{i + 0.5}" for i in range(48)])
        ds = load_csv(path, 24)
        assert ds.windows.shape == (2, 24, 2)
        assert ds.native_mask.all()

    def test_trailing_rows_dropped(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a"], [str(i) for i in range(50)])
        ds = load_csv(path, 24)
        assert ds.n_windows == 2
        assert ds.windows[-1, -1, 0] == 47.0

    def test_empty_cell_marks_native_missing(self, tmp_path):
        path = tmp_path / "d.csv"
        rows = ["1.0,2.0"] * 6
        rows[3] = "1.0,"
        write_csv(path, ["x", "temp"], rows)
        ds = load_csv(path, 3)
        assert ds.native_mask[1, 0, 1] == 0.0  # window 1, step 0, column temp
        assert ds.windows[1, 0, 1] == 0.0
        assert ds.native_mask.sum() == 11

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataError):
            load_csv(path, 1)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(DataError):
            load_csv(path, 1)

    def test_too_few_rows_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a"], ["1", "2", "3"])
        with pytest.raises(DataError):
            load_csv(path, 4)

    def test_round_trip_with_save(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = make_synthetic(4, 6, 3, rng)
        path = tmp_path / "rt.csv"
        save_csv(path, flatten_windows(ds.windows), ds.channel_names)
        back = load_csv(path, 6)
        np.testing.assert_array_equal(back.windows, ds.windows)


class TestChronoSplit:
    def make(self, n):
        w = np.arange(n * 2 * 1, dtype=float).reshape(n, 2, 1)
        return Dataset(windows=w, native_mask=np.ones_like(w), channel_names=("a",))

    def test_counts(self):
        train, val, test = chrono_split(self.make(10), 0.6, 0.2)
        assert (train.n_windows, val.n_windows, test.n_windows) == (6, 2, 2)

    def test_empty_val_after_flooring_rejected(self):
        with pytest.raises(DataError):
            chrono_split(self.make(5), 0.8, 0.1)

    def test_order_preserved(self):
        train, val, test = chrono_split(self.make(10), 0.5, 0.2)
        assert train.windows.max() < val.windows.min() < test.windows.min()

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            chrono_split(self.make(10), 0.7, 0.4)


class TestNormalization:
    def test_constant_shift_removed(self):
        w = np.zeros((3, 4, 2))
        w[..., 0] = 5.0
        w[..., 1] = np.arange(12).reshape(3, 4)
        ds = Dataset(windows=w, native_mask=np.ones_like(w), channel_names=("a", "b"))
        with pytest.raises(DataError):  # constant channel rejected
            compute_stats(ds)

    def test_round_trip_identity(self):
        rng = np.random.default_rng(1)
        ds = make_synthetic(5, 8, 3, rng)
        stats = compute_stats(ds)
        back = denormalize(normalize(ds, stats).windows, stats)
        np.testing.assert_allclose(back, ds.windows, atol=1e-10)

    def test_stats_exclude_native_missing(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((4, 5, 2))
        native = np.ones_like(w)
        native[0, 0, 0] = 0.0
        native[2, 3, 1] = 0.0
        ds = Dataset(windows=w * native, native_mask=native, channel_names=("a", "b"))
        stats = compute_stats(ds)
        # double-loop masked statistics oracle
        for c in range(2):
            vals = [
                w[i, t, c]
                for i in range(4)
                for t in range(5)
                if native[i, t, c] == 1.0
            ]
            assert stats.mean[c] == pytest.approx(np.mean(vals), rel=1e-12)
            assert stats.std[c] == pytest.approx(np.std(vals), rel=1e-12)

    def test_normalized_native_missing_stays_zero(self):
        w = np.ones((2, 3, 1))
        native = np.ones_like(w)
        native[0, 1, 0] = 0.0
        w = w * native
        w[1, 2, 0] = 3.0
        ds = Dataset(windows=w, native_mask=native, channel_names=("a",))
        normed = normalize(ds, compute_stats(ds))
        assert normed.windows[0, 1, 0] == 0.0


class TestSynthetic:
    def test_pure_sinusoid_is_periodic(self):
        rng = np.random.default_rng(3)
        ds = make_synthetic(10, 48, 1, rng, noise_std=0.0, mix=False)
        series = flatten_windows(ds.windows)[:, 0]
        # recover the integer period by scanning candidates
        best = min(
            range(24, 97),
            key=lambda p: np.abs(series[p:] - series[:-p]).max(),
        )
        assert np.abs(series[best:] - series[:-best]).max() < 1e-9

    def test_noise_lag1_autocorrelation(self):
        rng = np.random.default_rng(4)
        ds = make_synthetic(2100, 48, 1, rng, amplitude=0.0, mix=False)
        noise = flatten_windows(ds.windows)[:100_000, 0]
        noise = noise - noise.mean()
        rho = (noise[1:] @ noise[:-1]) / (noise @ noise)
        assert abs(rho - 0.7) < 0.02

    def test_cross_channel_correlation_nonzero_when_mixed(self):
        rng = np.random.default_rng(5)
        ds = make_synthetic(200, 48, 4, rng, mix=True)
        series = flatten_windows(ds.windows)
        corr = np.corrcoef(series.T)
        off_diag = np.abs(corr[~np.eye(4, dtype=bool)])
        assert off_diag.max() > 0.05

    def test_all_native_present(self):
        ds = make_synthetic(3, 8, 2, np.random.default_rng(6))
        assert ds.native_mask.all()

    def test_seed_determinism(self):
        a = make_synthetic(4, 12, 3, np.random.default_rng(7)).windows
        b = make_synthetic(4, 12, 3, np.random.default_rng(7)).windows
        np.testing.assert_array_equal(a, b)


class TestDatasetValidation:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dataset(
                windows=np.zeros((2, 3, 1)),
                native_mask=np.zeros((2, 3, 2)),
                channel_names=("a",),
            )

    def test_channel_names_length_checked(self):
        with pytest.raises(ValueError):
            Dataset(
                windows=np.zeros((2, 3, 2)),
                native_mask=np.zeros((2, 3, 2)),
                channel_names=("a",),
            )
