import numpy as np
import pytest

from textcredit.textfeat import (
    Tokenizer,
    avg_embed,
    fit_lda,
    fit_tfidf,
    infer_topics,
    load_doc_vectors,
    load_word_vectors,
    save_doc_vectors,
    tfidf_transform,
    tokenize,
)


class TestTokenize:
    def test_word_mode(self):
        assert tokenize(Tokenizer(), "Good repayment history.") == [
            "good",
            "repayment",
            "history",
        ]

    def test_empty(self):
        assert tokenize(Tokenizer(), "") == []

    def test_char_mode_cjk(self):
        tok = Tokenizer(mode="char")
        assert tokenize(tok, "还款良好") == ["还", "款", "良", "好"]

    def test_cjk_punctuation_is_delimiter(self):
        tok = Tokenizer(mode="char")
        assert tokenize(tok, "还款，良好。") == ["还", "款", "良", "好"]

    def test_no_lowercase(self):
        assert tokenize(Tokenizer(lowercase=False), "Good DAY") == ["Good", "DAY"]


class TestTfidf:
    def test_single_doc_idf_one(self):
        model = fit_tfidf([["a", "b", "a"]])
        assert np.allclose(model.idf, 1.0)  # ln(2/2) + 1
        vec = tfidf_transform(model, ["a", "b", "a"])
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)
        ia, ib = model.vocabulary["a"], model.vocabulary["b"]
        assert vec[ia] / vec[ib] == pytest.approx(2.0, abs=1e-12)

    def test_oov_doc_zero_vector(self):
        model = fit_tfidf([["a", "b"]])
        assert np.allclose(tfidf_transform(model, ["zzz"]), 0.0)

    def test_identical_docs_cosine_one(self):
        model = fit_tfidf([["x", "y"], ["x", "y"]])
        v1 = tfidf_transform(model, ["x", "y"])
        v2 = tfidf_transform(model, ["x", "y"])
        assert np.dot(v1, v2) == pytest.approx(1.0, abs=1e-12)

    def test_self_cosine_one_property(self):
        rng = np.random.default_rng(0)
        vocab = [f"w{i}" for i in range(30)]
        docs = [list(rng.choice(vocab, size=rng.integers(3, 15))) for _ in range(20)]
        model = fit_tfidf(docs)
        for doc in docs:
            v = tfidf_transform(model, doc)
            assert np.dot(v, v) == pytest.approx(1.0, abs=1e-9)

    def test_empty_corpus(self):
        with pytest.raises(ValueError, match="empty corpus"):
            fit_tfidf([])


def disjoint_corpus(n_docs=200, doc_len=60, seed=42):
    rng = np.random.default_rng(seed)
    vocab_a = [f"alpha{i}" for i in range(50)]
    vocab_b = [f"beta{i}" for i in range(50)]
    docs, truth = [], []
    for d in range(n_docs):
        vocab = vocab_a if d % 2 == 0 else vocab_b
        docs.append([str(w) for w in rng.choice(vocab, size=doc_len)])
        truth.append(d % 2)
    return docs, truth, vocab_a, vocab_b


class TestLda:
    def test_single_topic_theta_is_one(self):
        docs = [["a", "b"], ["b", "c"]]
        model = fit_lda(docs, n_topics=1, iterations=20, seed=0)
        assert infer_topics(model, docs[0], iterations=10, seed=0).tolist() == [1.0]

    def test_empty_doc_uniform_prior(self):
        docs = [["a", "b"], ["b", "c"]]
        model = fit_lda(docs, n_topics=4, iterations=20, seed=0)
        assert np.allclose(infer_topics(model, [], seed=0), 0.25)

    def test_disjoint_vocabulary_recovery(self):
        docs, truth, vocab_a, _ = disjoint_corpus()
        model = fit_lda(docs, n_topics=2, alpha=0.5, iterations=300, seed=1)
        thetas = [
            infer_topics(model, doc, iterations=100, seed=i)
            for i, doc in enumerate(docs)
        ]
        confident = sum(th.max() > 0.9 for th in thetas) / len(thetas)
        assert confident >= 0.9
        assignments = [int(np.argmax(th)) for th in thetas]
        # topic <-> vocabulary mapping must be a bijection
        topic_of = {}
        for a, t in zip(assignments, truth):
            topic_of.setdefault(t, set()).add(a)
        assert topic_of[0] != topic_of[1]
        assert len(topic_of[0]) == 1 and len(topic_of[1]) == 1

    def test_doc_from_one_vocabulary_concentrates(self):
        docs, _, vocab_a, _ = disjoint_corpus(n_docs=100)
        model = fit_lda(docs, n_topics=2, alpha=0.5, iterations=200, seed=2)
        theta = infer_topics(model, vocab_a[:40], iterations=100, seed=0)
        assert theta.max() > 0.9

    def test_seed_determinism_bitwise(self):
        docs, _, _, _ = disjoint_corpus(n_docs=40, doc_len=20)
        m1 = fit_lda(docs, n_topics=3, iterations=50, seed=7)
        m2 = fit_lda(docs, n_topics=3, iterations=50, seed=7)
        assert np.array_equal(m1.topic_word, m2.topic_word)
        assert np.array_equal(m1.topic_total, m2.topic_total)

    def test_counts_consistent_with_corpus(self):
        docs, _, _, _ = disjoint_corpus(n_docs=30, doc_len=15)
        model = fit_lda(docs, n_topics=3, iterations=20, seed=0)
        assert model.topic_word.sum() == 30 * 15
        assert np.array_equal(model.topic_word.sum(axis=1), model.topic_total)

    def test_topic_word_distributions_sum_to_one(self):
        docs, _, _, _ = disjoint_corpus(n_docs=30, doc_len=15)
        model = fit_lda(docs, n_topics=5, iterations=20, seed=0)
        phi = model.topic_word_distributions()
        assert np.allclose(phi.sum(axis=1), 1.0, atol=1e-9)

    def test_theta_sums_to_one_property(self):
        docs, _, _, _ = disjoint_corpus(n_docs=30, doc_len=15)
        model = fit_lda(docs, n_topics=4, iterations=30, seed=0)
        rng = np.random.default_rng(1)
        vocab = list(model.vocabulary)
        for i in range(1000):
            doc = list(rng.choice(vocab, size=rng.integers(0, 25)))
            theta = infer_topics(model, doc, iterations=5, seed=i)
            assert abs(theta.sum() - 1.0) <= 1e-9
            assert np.all(theta >= 0)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError, match="n_topics"):
            fit_lda([["a"]], n_topics=0)
        with pytest.raises(ValueError, match="empty corpus"):
            fit_lda([], n_topics=2)


class TestWordVectors:
    def write_vectors(self, path, rows, dim=2):
        lines = [f"{len(rows)} {dim}"]
        lines += [f"{w} " + " ".join(str(x) for x in vec) for w, vec in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def test_mean_of_two(self, tmp_path):
        p = tmp_path / "vec.txt"
        self.write_vectors(p, [("a", [1, 0]), ("b", [0, 1])])
        table = load_word_vectors(p)
        assert np.allclose(avg_embed(table, ["a", "b"]), [0.5, 0.5])

    def test_repeated_token_mean(self, tmp_path):
        p = tmp_path / "vec.txt"
        self.write_vectors(p, [("a", [1, 0]), ("b", [0, 1])])
        table = load_word_vectors(p)
        assert np.allclose(avg_embed(table, ["a", "a", "b"]), [2 / 3, 1 / 3])

    def test_oov_zero(self, tmp_path):
        p = tmp_path / "vec.txt"
        self.write_vectors(p, [("a", [1, 0])])
        table = load_word_vectors(p)
        assert np.allclose(avg_embed(table, ["zzz"]), [0.0, 0.0])

    def test_permutation_invariant(self, tmp_path):
        p = tmp_path / "vec.txt"
        self.write_vectors(p, [("a", [1, 2]), ("b", [3, 4]), ("c", [5, 6])])
        table = load_word_vectors(p)
        t1 = avg_embed(table, ["a", "b", "c"])
        t2 = avg_embed(table, ["c", "a", "b"])
        assert np.allclose(t1, t2)

    def test_dim_mismatch_line_number(self, tmp_path):
        p = tmp_path / "vec.txt"
        p.write_text("2 2\na 1 0\nb 1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 3"):
            load_word_vectors(p)

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "vec.txt"
        p.write_text("hello\n", encoding="utf-8")
        with pytest.raises(ValueError, match="header"):
            load_word_vectors(p)


class TestDocVectors:
    def test_roundtrip_and_require(self, tmp_path):
        p = tmp_path / "docs.tsv"
        vecs = {"L1": np.array([1.0, 2.0, 3.0, 4.0]), "L2": np.array([0.0, 0.5, 1.0, 1.5])}
        save_doc_vectors(p, vecs)
        out = load_doc_vectors(p, 4, require_ids=["L1", "L2"])
        assert set(out) == {"L1", "L2"}
        assert np.allclose(out["L1"], vecs["L1"])

    def test_missing_id_listed(self, tmp_path):
        p = tmp_path / "docs.tsv"
        save_doc_vectors(p, {"L1": np.zeros(4), "L2": np.zeros(4)})
        with pytest.raises(ValueError, match="L3"):
            load_doc_vectors(p, 4, require_ids=["L1", "L3"])

    def test_dim_mismatch_names_doc(self, tmp_path):
        p = tmp_path / "docs.tsv"
        p.write_text("L1\t1 2 3\n", encoding="utf-8")
        with pytest.raises(ValueError, match="L1"):
            load_doc_vectors(p, 4)

    def test_non_finite_rejected(self, tmp_path):
        p = tmp_path / "docs.tsv"
        p.write_text("L1\t1 2 nan 4\n", encoding="utf-8")
        with pytest.raises(ValueError, match="non-finite"):
            load_doc_vectors(p, 4)
