import math

import numpy as np
import pytest

from textcredit.corpus import FeatureSpec
from textcredit.tabular import (
    BinningSpec,
    EncodedMatrix,
    encode,
    fit_binning,
    fit_woe,
    impute,
    information_value,
    select_by_iv,
    vif_filter,
    woe_table_to_json,
)

from conftest import make_dataset, make_record


def dataset_from_columns(income, region, labels):
    schema = (FeatureSpec("income", "continuous"), FeatureSpec("region", "categorical"))
    recs = [
        make_record(f"L{i:03d}", lab, features={"income": inc, "region": reg})
        for i, (inc, reg, lab) in enumerate(zip(income, region, labels))
    ]
    return make_dataset(recs, schema)


class TestImpute:
    def test_identity_when_complete(self):
        ds = dataset_from_columns([1.0, 2.0], ["a", "b"], [0, 1])
        assert impute(ds, [0, 1]) == ds

    def test_train_mean_fills_everywhere(self):
        ds = dataset_from_columns(
            [1.0, None, 3.0, None], ["a", "a", "a", "a"], [0, 1, 0, 1]
        )
        out = impute(ds, [0, 1, 2])  # train mean over {1.0, 3.0} = 2.0
        assert out.records[1].features["income"] == 2.0
        assert out.records[3].features["income"] == 2.0  # test row filled too

    def test_categorical_missing_becomes_category(self):
        ds = dataset_from_columns([1.0, 2.0], [None, "b"], [0, 1])
        out = impute(ds, [0, 1])
        assert out.records[0].features["region"] == "MISSING"
        binning = fit_binning(out, [0, 1])
        assert "MISSING" in binning.categorical_levels["region"]

    def test_all_missing_feature_errors(self):
        ds = dataset_from_columns([None, None], ["a", "b"], [0, 1])
        with pytest.raises(ValueError, match="income"):
            impute(ds, [0, 1])


def brute_force_woe(good, bad, total_good, total_bad):
    pg = np.asarray(good) / total_good
    pb = np.asarray(bad) / total_bad
    return np.log(pg / pb)


class TestWoe:
    def test_equal_proportions_zero(self):
        # 2 bins, identical class mix in each
        ds = dataset_from_columns(
            [0.0, 0.0, 10.0, 10.0], ["a", "a", "a", "a"], [0, 1, 0, 1]
        )
        binning = fit_binning(ds, range(4), n_bins=2)
        table = fit_woe(ds, range(4), binning, smoothing=0.0)
        assert np.allclose(table.features["income"].woe, 0.0)

    def test_hand_computed_ln4(self):
        # bin shares: goods (0.4, 0.6), bads (0.1, 0.9) -> woe[0] = ln 4
        income = [0.0] * 5 + [10.0] * 15
        labels = [0, 0, 0, 0, 1] + [0] * 6 + [1] * 9
        ds = dataset_from_columns(income, ["a"] * 20, labels)
        binning = fit_binning(ds, range(20), n_bins=2)
        table = fit_woe(ds, range(20), binning, smoothing=0.0)
        woe = table.features["income"].woe
        assert woe[0] == pytest.approx(math.log(4.0), abs=1e-12)
        assert woe[1] == pytest.approx(math.log(0.6 / 0.9), abs=1e-12)
        iv = information_value(table, "income")
        expected = 0.3 * math.log(4.0) + (-0.3) * math.log(2.0 / 3.0)
        assert iv == pytest.approx(expected, abs=1e-12)
        assert iv == pytest.approx(0.5375, abs=5e-4)

    def test_zero_count_bin_smoothed_finite(self):
        income = [0.0, 0.0, 10.0, 10.0]
        labels = [0, 0, 0, 1]  # bad count 0 in bin 0
        ds = dataset_from_columns(income, ["a"] * 4, labels)
        binning = fit_binning(ds, range(4), n_bins=2)
        table = fit_woe(ds, range(4), binning, smoothing=0.5)
        woe = table.features["income"].woe
        assert np.all(np.isfinite(woe))
        # spreadsheet-style recomputation of the smoothed formula
        g, b = table.features["income"].bin_good, table.features["income"].bin_bad
        pg = (g + 0.5) / (3 + 0.5 * 2)
        pb = (b + 0.5) / (1 + 0.5 * 2)
        assert np.allclose(woe, np.log(pg / pb), atol=1e-12)

    def test_single_bin_iv_zero(self):
        ds = dataset_from_columns([1.0, 1.0, 1.0], ["a"] * 3, [0, 1, 0])
        binning = fit_binning(ds, range(3), n_bins=1)
        table = fit_woe(ds, range(3), binning, smoothing=0.0)
        assert information_value(table, "income") == pytest.approx(0.0, abs=1e-12)

    def test_unsmoothed_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(20, 60))
            income = rng.normal(size=n).tolist()
            labels = rng.integers(0, 2, n).tolist()
            if sum(labels) in (0, n):
                continue
            ds = dataset_from_columns(income, ["a"] * n, labels)
            binning = fit_binning(ds, range(n), n_bins=3)
            table = fit_woe(ds, range(n), binning, smoothing=0.0)
            fw = table.features["income"]
            if np.any(fw.bin_good == 0) or np.any(fw.bin_bad == 0):
                continue
            expected = brute_force_woe(
                fw.bin_good, fw.bin_bad, table.total_good, table.total_bad
            )
            assert np.allclose(fw.woe, expected, atol=1e-12)

    def test_iv_nonnegative_property(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            nb = int(rng.integers(1, 6))
            good = rng.integers(0, 30, nb)
            bad = rng.integers(0, 30, nb)
            if good.sum() == 0 or bad.sum() == 0:
                continue
            s = float(rng.choice([0.25, 0.5, 1.0]))
            pg = (good + s) / (good.sum() + s * nb)
            pb = (bad + s) / (bad.sum() + s * nb)
            iv = float(np.sum((pg - pb) * np.log(pg / pb)))
            assert iv >= -1e-12

    def test_single_class_train_rejected(self):
        ds = dataset_from_columns([1.0, 2.0], ["a", "b"], [0, 0])
        binning = fit_binning(ds, range(2))
        with pytest.raises(ValueError, match="both labels"):
            fit_woe(ds, range(2), binning)

    def test_unknown_feature(self):
        ds = dataset_from_columns([1.0, 2.0], ["a", "b"], [0, 1])
        binning = fit_binning(ds, range(2))
        table = fit_woe(ds, range(2), binning)
        with pytest.raises(ValueError, match="bogus"):
            information_value(table, "bogus")

    def test_serialization_total(self):
        ds = dataset_from_columns([1.0, 2.0, 3.0], ["a", "b", "a"], [0, 1, 0])
        binning = fit_binning(ds, range(3))
        table = fit_woe(ds, range(3), binning)
        blob = woe_table_to_json(table)
        assert '"income"' in blob and '"iv"' in blob


class TestSelectByIv:
    def make_table(self, ivs):
        # minimal fake: IV thresholds only need the iv numbers and order
        from textcredit.tabular import FeatureWoe, WoeTable

        features = {
            name: FeatureWoe(
                bin_good=np.array([1.0]), bin_bad=np.array([1.0]),
                woe=np.array([0.0]), iv=iv,
            )
            for name, iv in ivs.items()
        }
        binning = BinningSpec(continuous_edges={}, categorical_levels={})
        return WoeTable(
            features=features, binning=binning, total_good=1, total_bad=1, smoothing=0.5
        )

    def test_thresholds(self):
        table = self.make_table({"a": 0.005, "b": 0.2, "c": 0.7})
        assert select_by_iv(table, ["a", "b", "c"]) == ["b"]

    def test_boundary_strict(self):
        table = self.make_table({"a": 0.01, "b": 0.50})
        assert select_by_iv(table, ["a", "b"]) == []

    def test_order_preserved(self):
        table = self.make_table({"z": 0.2, "m": 0.3, "a": 0.4})
        assert select_by_iv(table, ["z", "m", "a"]) == ["z", "m", "a"]


def matrix(cols, values):
    values = np.asarray(values, dtype=np.float64)
    return EncodedMatrix(
        ids=tuple(f"r{i}" for i in range(values.shape[0])),
        columns=tuple(cols),
        values=values,
    )


class TestVif:
    def test_orthogonal_all_retained(self):
        rng = np.random.default_rng(0)
        q, _ = np.linalg.qr(rng.standard_normal((40, 3)))
        m = matrix(["a", "b", "c"], q - q.mean(axis=0))
        assert vif_filter(m) == ["a", "b", "c"]

    def test_duplicate_column_dropped(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(30)
        y = rng.standard_normal(30)
        m = matrix(["a", "b", "c"], np.column_stack([x, x, y]))
        kept = vif_filter(m)
        assert kept in (["a", "c"], ["b", "c"])
        assert len(kept) == 2

    def test_correlation_09_vif_5_26(self):
        # exact correlation 0.9 via unit-variance construction
        rng = np.random.default_rng(2)
        n = 500
        a = rng.standard_normal(n)
        a = (a - a.mean()) / a.std()
        b0 = rng.standard_normal(n)
        b0 = b0 - b0.mean()
        b0 -= a * (a @ b0) / (a @ a)  # orthogonalize
        b0 /= b0.std()
        b = 0.9 * a + np.sqrt(1 - 0.81) * b0
        from textcredit.tabular import _vif

        m = np.column_stack([a, b])
        v = _vif(m, 0)
        assert v == pytest.approx(1.0 / (1.0 - 0.81), rel=1e-9)
        kept = vif_filter(matrix(["a", "b"], m))
        assert kept == ["a", "b"]

    def test_too_few_rows(self):
        m = matrix(["a", "b", "c"], np.ones((2, 3)))
        with pytest.raises(ValueError, match="rows"):
            vif_filter(m)

    def test_column_order_invariance(self):
        rng = np.random.default_rng(5)
        base = rng.standard_normal((60, 4))
        base[:, 3] = base[:, 0] * 0.95 + rng.standard_normal(60) * 0.05
        cols = ["a", "b", "c", "d"]
        kept1 = set(vif_filter(matrix(cols, base)))
        perm = [2, 0, 3, 1]
        kept2 = set(vif_filter(matrix([cols[j] for j in perm], base[:, perm])))
        assert kept1 == kept2


class TestEncode:
    def fitted(self):
        income = [0.0] * 5 + [10.0] * 15
        labels = [0, 0, 0, 0, 1] + [0] * 6 + [1] * 9
        region = ["a"] * 10 + ["b"] * 10
        ds = dataset_from_columns(income, region, labels)
        binning = fit_binning(ds, range(20), n_bins=2)
        table = fit_woe(ds, range(20), binning, smoothing=0.0)
        return ds, table

    def test_cell_is_bin_woe(self):
        ds, table = self.fitted()
        enc = encode(ds, table, ["income"])
        assert enc.values[0, 0] == pytest.approx(math.log(4.0), abs=1e-12)

    def test_unseen_category_zero(self):
        ds, table = self.fitted()
        recs = list(ds.records)
        recs[0] = make_record(
            "Lzzz", 0, features={"income": 1.0, "region": "ZZZ"}
        )
        ds2 = make_dataset(recs, ds.schema)
        enc = encode(ds2, table, ["region"])
        assert enc.values[0, 0] == 0.0

    def test_empty_selection(self):
        ds, table = self.fitted()
        enc = encode(ds, table, [])
        assert enc.values.shape == (20, 0)
        assert enc.ids == tuple(ds.ids())

    def test_unfitted_feature(self):
        ds, table = self.fitted()
        with pytest.raises(ValueError, match="mystery"):
            encode(ds, table, ["mystery"])

    def test_row_shuffle_equivariance(self):
        ds, table = self.fitted()
        enc = encode(ds, table, ["income", "region"])
        perm = np.random.default_rng(0).permutation(len(ds))
        shuffled = make_dataset([ds.records[i] for i in perm], ds.schema)
        enc2 = encode(shuffled, table, ["income", "region"])
        assert np.array_equal(enc.values[perm], enc2.values)
