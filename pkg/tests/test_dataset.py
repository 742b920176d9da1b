"""Tests for CSV loading, chronological splits and window extraction."""

import numpy as np
import pytest

from jtft.core.errors import ConfigError, DataError
from jtft.data.dataset import (
    Dataset,
    SplitSpec,
    Standardizer,
    load_csv_dataset,
    make_windows,
    split_dataset,
)
from tests.conftest import ETT_COLUMNS


def _dataset(values: np.ndarray, name: str = "toy") -> Dataset:
    values = np.array(values, dtype=np.float64)
    channels = tuple(f"c{i}" for i in range(values.shape[1]))
    return Dataset(name=name, values=values, channels=channels)


class TestLoadCsv:
    def test_small_file(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("date,a,b\nt0,1,2\nt1,3,4\nt2,5,6\n")
        ds = load_csv_dataset(path)
        assert ds.name == "small"
        assert (ds.rows, ds.num_channels) == (3, 2)
        np.testing.assert_array_equal(ds.values, [[1, 2], [3, 4], [5, 6]])
        assert ds.timestamps == ("t0", "t1", "t2")

    def test_ett_header(self, ett_csv):
        ds = load_csv_dataset(ett_csv)
        assert ds.num_channels == 7
        assert ds.channels == tuple(ETT_COLUMNS)
        assert not ds.values.flags.writeable

    def test_max_rows(self, csv_factory):
        assert load_csv_dataset(csv_factory(50, 2), max_rows=20).rows == 20

    def test_non_numeric_cell_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("date,a\nt0,1\nt1,oops\nt2,3\n")
        with pytest.raises(DataError, match="line\\(s\\) 3"):
            load_csv_dataset(path)

    def test_missing_cell(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("date,a,b\nt0,1,2\nt1,,4\n")
        with pytest.raises(DataError, match="3"):
            load_csv_dataset(path)

    def test_non_finite_cells_name_lines(self, tmp_path):
        path = tmp_path / "inf.csv"
        path.write_text("date,a,b\n2020,1,2\n2021,inf,3\n2022,4,-Infinity\n")
        with pytest.raises(DataError, match="line\\(s\\) 3, 4"):
            load_csv_dataset(path)

    def test_blank_line_keeps_file_line_numbers(self, tmp_path):
        path = tmp_path / "blank.csv"
        path.write_text("date,a\nt0,1\n\nt1,2\nt2,oops\n")
        with pytest.raises(DataError, match="line\\(s\\) 3, 5"):
            load_csv_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_csv_dataset(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("date,a\n")
        with pytest.raises(DataError, match="no rows"):
            load_csv_dataset(path)

    def test_timestamp_only(self, tmp_path):
        path = tmp_path / "dates.csv"
        path.write_text("date\nt0\nt1\n")
        with pytest.raises(DataError):
            load_csv_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv_dataset(tmp_path / "missing.csv")


class TestSplits:
    def test_boundaries(self):
        assert SplitSpec().boundaries(1000) == (700, 800)
        assert SplitSpec((0.6, 0.2, 0.2)).boundaries(1000) == (600, 800)

    def test_dataset_defaults(self):
        assert SplitSpec.for_dataset("ETTm2").ratios == (0.6, 0.2, 0.2)
        assert SplitSpec.for_dataset("weather").ratios == (0.7, 0.1, 0.2)

    @pytest.mark.parametrize("ratios", [(0.5, 0.5), (0.8, 0.3, -0.1), (0.5, 0.2, 0.2)])
    def test_invalid_ratios(self, ratios):
        with pytest.raises(ConfigError):
            SplitSpec(ratios)

    def test_train_statistics_only(self):
        values = np.random.default_rng(0).normal(5.0, 2.0, size=(1000, 3))
        splits = split_dataset(_dataset(values), SplitSpec(), lookback=50)
        np.testing.assert_allclose(splits.standardizer.mean, values[:700].mean(axis=0))
        np.testing.assert_allclose(splits.standardizer.std, values[:700].std(axis=0))
        train = values[:700]
        np.testing.assert_allclose(splits.train.values, (train - train.mean(0)) / train.std(0))

    def test_test_rows_do_not_change_statistics(self):
        values = np.random.default_rng(1).normal(size=(1000, 2))
        changed = values.copy()
        changed[800:] *= 100.0
        first = split_dataset(_dataset(values), SplitSpec(), lookback=50).standardizer
        second = split_dataset(_dataset(changed), SplitSpec(), lookback=50).standardizer
        np.testing.assert_array_equal(first.mean, second.mean)
        np.testing.assert_array_equal(first.std, second.std)

    def test_look_back_context(self):
        splits = split_dataset(_dataset(np.arange(1000.0)[:, None]), SplitSpec(), lookback=96)
        assert (splits.val.offset, len(splits.val), splits.val.context) == (604, 196, 96)
        assert (splits.test.offset, len(splits.test)) == (704, 296)
        assert splits.boundaries == (700, 800)

    def test_too_short_for_horizon(self):
        with pytest.raises(DataError, match="val"):
            split_dataset(_dataset(np.ones((200, 1))), SplitSpec(), lookback=24, horizon=48)

    def test_too_short_for_lookback(self):
        with pytest.raises(DataError):
            split_dataset(_dataset(np.ones((100, 1))), SplitSpec(), lookback=96)

    def test_unknown_view(self):
        splits = split_dataset(_dataset(np.ones((100, 1))), SplitSpec(), lookback=10)
        with pytest.raises(ConfigError):
            splits.view("holdout")

    def test_constant_channel_is_floored(self):
        scaler = Standardizer.fit(np.full((10, 1), 3.0))
        assert scaler.std[0] == 1e-5
        np.testing.assert_array_equal(scaler.transform(np.full((2, 1), 3.0)), 0.0)

    def test_inverse_along_channel_axis(self):
        scaler = Standardizer.from_stats(np.array([1.0, 2.0]), np.array([2.0, 4.0]))
        out = scaler.inverse(np.ones((3, 2, 5)), channel_axis=1)
        np.testing.assert_array_equal(out[:, 0], 3.0)
        np.testing.assert_array_equal(out[:, 1], 6.0)


class TestWindows:
    def _view(self, rows: int):
        values = np.arange(rows * 2.0).reshape(rows, 2)
        return split_dataset(_dataset(values), SplitSpec((1.0, 0.0, 0.0)), 4).train

    def test_exact_fit_gives_one_window(self):
        assert len(make_windows(self._view(12), 8, 4)) == 1

    def test_extra_rows_add_windows(self):
        assert len(make_windows(self._view(21), 8, 4)) == 10

    def test_stride(self):
        assert len(make_windows(self._view(21), 8, 4, stride=3)) == 4

    def test_contiguous_and_aligned(self):
        view = self._view(30)
        windows = make_windows(view, 8, 4)
        raw = np.arange(60.0).reshape(30, 2)
        scaled = (raw - raw.mean(0)) / raw.std(0)
        sample = windows[5]
        assert sample.origin == 5
        np.testing.assert_allclose(sample.x, scaled[5:13].T)
        np.testing.assert_allclose(sample.y, scaled[13:17].T)

    def test_batch_shapes(self):
        x, y = make_windows(self._view(30), 8, 4).batch([0, 3, 7])
        assert x.shape == (3, 2, 8) and y.shape == (3, 2, 4)

    def test_slices(self):
        windows = make_windows(self._view(30), 8, 4)
        assert [w.origin for w in windows[2:5]] == [2, 3, 4]

    def test_too_short(self):
        with pytest.raises(DataError):
            make_windows(self._view(11), 8, 4)

    def test_invalid_stride(self):
        with pytest.raises(ConfigError):
            make_windows(self._view(20), 8, 4, stride=0)
