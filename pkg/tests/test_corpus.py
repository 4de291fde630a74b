import json

import numpy as np
import pytest

from textcredit.corpus import (
    DegenerateSplit,
    DuplicateId,
    InvalidLabel,
    MissingText,
    SchemaMismatch,
    load_dataset,
    load_schema,
    save_dataset,
    save_schema,
    stratified_split,
    text_length_stats,
)
from textcredit.textfeat import Tokenizer

from conftest import make_dataset, make_record


def write_jsonl(path, rows):
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def row(rid="L001", label=0, income=1.5, region="north", **over):
    base = {
        "id": rid,
        "label": label,
        "loan_amount": 100.0,
        "interest_rate": 0.1,
        "term_months": 3,
        "features": {"income": income, "region": region},
        "human_text": "steady trade.",
        "refined_texts": {},
    }
    base.update(over)
    return base


class TestLoadDataset:
    def test_empty_file_preserves_schema(self, tmp_path, tiny_schema):
        path = tmp_path / "corpus.jsonl"
        path.write_text("")
        ds = load_dataset(path, tiny_schema)
        assert len(ds) == 0
        assert ds.schema == tiny_schema

    def test_null_continuous_becomes_missing(self, tmp_path, tiny_schema):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(
            path,
            [
                row("L001", income=None),
                row("L002", label=1),
                row("L003", income=2.0),
            ],
        )
        ds = load_dataset(path, tiny_schema)
        assert len(ds) == 3
        assert ds.records[0].features["income"] is None
        assert ds.records[2].features["income"] == 2.0

    def test_duplicate_id_names_offender(self, tmp_path, tiny_schema):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [row("L001"), row("L001", label=1)])
        with pytest.raises(DuplicateId, match="L001"):
            load_dataset(path, tiny_schema)

    def test_schema_mismatch_reports_line(self, tmp_path, tiny_schema):
        bad = row("L002")
        bad["features"] = {"income": 1.0}
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [row("L001"), bad])
        with pytest.raises(SchemaMismatch, match="line 2"):
            load_dataset(path, tiny_schema)

    def test_extra_feature_rejected(self, tmp_path, tiny_schema):
        bad = row("L001")
        bad["features"]["bogus"] = 1.0
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [bad])
        with pytest.raises(SchemaMismatch, match="bogus"):
            load_dataset(path, tiny_schema)

    def test_invalid_label(self, tmp_path, tiny_schema):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [row("L001", label=2)])
        with pytest.raises(InvalidLabel):
            load_dataset(path, tiny_schema)

    def test_non_numeric_continuous_errors(self, tmp_path, tiny_schema):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [row("L001", income="abc")])
        with pytest.raises(ValueError, match="income"):
            load_dataset(path, tiny_schema)

    def test_unknown_refined_tag_rejected(self, tmp_path, tiny_schema):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [row("L001", refined_texts={"mystery": "x"})])
        with pytest.raises(ValueError, match="mystery"):
            load_dataset(path, tiny_schema)

    def test_missing_file(self, tiny_schema, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope.jsonl", tiny_schema)

    def test_roundtrip(self, tmp_path, tiny_schema):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(
            path,
            [row("L001", refined_texts={"full": "1. ... 2. ..."}), row("L002", label=1)],
        )
        ds = load_dataset(path, tiny_schema)
        out = tmp_path / "copy.jsonl"
        save_dataset(out, ds)
        again = load_dataset(out, tiny_schema)
        assert again == ds

    def test_schema_file_roundtrip(self, tmp_path, tiny_schema):
        path = tmp_path / "schema.json"
        save_schema(path, tiny_schema)
        assert load_schema(path) == tiny_schema


def label_dataset(n_pos, n_neg):
    recs = [make_record(f"P{i}", 1) for i in range(n_pos)]
    recs += [make_record(f"N{i}", 0) for i in range(n_neg)]
    return make_dataset(recs)


class TestStratifiedSplit:
    def test_reference_sizes(self):
        # 2460 loans with 60 defaulters at 0.7 / 0.2 must give 1377/345/738
        ds = label_dataset(60, 2400)
        sp = stratified_split(ds, 0.7, 0.2, seed=11)
        assert (len(sp.train), len(sp.val), len(sp.test)) == (1377, 345, 738)
        test_pos = sum(ds.records[i].label for i in sp.test)
        assert test_pos == 18
        val_pos = sum(ds.records[i].label for i in sp.val)
        assert val_pos >= 1

    def test_small_no_val(self):
        ds = label_dataset(5, 5)
        sp = stratified_split(ds, 0.7, 0.0, seed=0)
        assert (len(sp.train), len(sp.val), len(sp.test)) == (7, 0, 3)

    def test_deterministic(self):
        ds = label_dataset(30, 70)
        a = stratified_split(ds, 0.7, 0.2, seed=5)
        b = stratified_split(ds, 0.7, 0.2, seed=5)
        assert a == b
        c = stratified_split(ds, 0.7, 0.2, seed=6)
        assert set(a.test) != set(c.test)  # overwhelmingly likely

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n_pos = int(rng.integers(2, 40))
            n_neg = int(rng.integers(2, 120))
            ds = label_dataset(n_pos, n_neg)
            frac = float(rng.uniform(0.4, 0.9))
            vfrac = float(rng.uniform(0.0, 0.4))
            try:
                sp = stratified_split(ds, frac, vfrac, seed=int(rng.integers(1 << 30)))
            except DegenerateSplit:
                continue
            union = set(sp.train) | set(sp.val) | set(sp.test)
            assert union == set(range(len(ds)))
            assert len(sp.train) + len(sp.val) + len(sp.test) == len(ds)
            assert not (set(sp.train) & set(sp.test))
            assert not (set(sp.train) & set(sp.val))
            assert not (set(sp.val) & set(sp.test))

    def test_per_label_test_fraction(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n_pos = int(rng.integers(4, 50))
            n_neg = int(rng.integers(4, 200))
            frac = float(rng.uniform(0.5, 0.9))
            ds = label_dataset(n_pos, n_neg)
            try:
                sp = stratified_split(ds, frac, 0.0, seed=int(rng.integers(1 << 30)))
            except DegenerateSplit:
                continue
            labels = ds.labels()
            for lab, size in ((1, n_pos), (0, n_neg)):
                got = sum(1 for i in sp.test if labels[i] == lab) / size
                assert abs(got - (1 - frac)) <= 1.0 / size + 1e-9

    def test_single_class_rejected(self):
        ds = make_dataset([make_record(f"X{i}", 1) for i in range(10)])
        with pytest.raises(DegenerateSplit):
            stratified_split(ds, 0.7, 0.2, seed=0)


class TestTextLengthStats:
    def test_single_record_sd_zero(self):
        ds = make_dataset([make_record("A", 0, human_text="one two three four five")])
        stats = text_length_stats(ds, "human", Tokenizer())
        assert stats[0].count == 1
        assert stats[0].mean == 5.0
        assert stats[0].sd == 0.0

    def test_sample_sd(self):
        ds = make_dataset(
            [
                make_record("A", 0, human_text="a b c d"),
                make_record("B", 0, human_text="a b c d e f"),
            ]
        )
        stats = text_length_stats(ds, "human", Tokenizer())
        assert stats[0].mean == 5.0
        assert stats[0].sd == pytest.approx(np.sqrt(2.0), abs=1e-12)

    def test_constant_groups(self):
        ds = make_dataset(
            [
                make_record("A", 0, human_text=" ".join("x" * 1 for _ in range(10))),
                make_record("B", 0, human_text=" ".join("y" for _ in range(10))),
                make_record("C", 1, human_text=" ".join("z" for _ in range(20))),
            ]
        )
        stats = text_length_stats(ds, "human", Tokenizer())
        assert stats[0].mean == 10.0 and stats[0].sd == 0.0
        assert stats[1].mean == 20.0 and stats[1].sd == 0.0

    def test_reorder_invariant(self):
        recs = [
            make_record("A", 0, human_text="a b"),
            make_record("B", 1, human_text="c d e"),
            make_record("C", 0, human_text="f"),
        ]
        s1 = text_length_stats(make_dataset(recs), "human", Tokenizer())
        s2 = text_length_stats(make_dataset(recs[::-1]), "human", Tokenizer())
        assert s1 == s2

    def test_missing_text_names_record(self):
        ds = make_dataset([make_record("A", 0, human_text="")])
        with pytest.raises(MissingText, match="A"):
            text_length_stats(ds, "human", Tokenizer())
