"""Pipeline stages behind the command-line interface.

Stages are pure functions of (config, output directory): they read the
corpus named in the config, fit everything on the training split only, and
write deterministic artifacts (JSON reports sorted by key, CSV tables) so
that identical configs and seeds give byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import corpus as corpus_mod
from . import explain as explain_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import profit as profit_mod
from . import refine as refine_mod
from . import synthgen
from . import textstats
from .config import ConfigInvalid
from .corpus import Dataset, SplitIndices
from .tabular import (
    EncodedMatrix,
    encode,
    fit_binning,
    fit_woe,
    impute,
    select_by_iv,
    vif_filter,
    woe_table_to_json,
)
from .textfeat import (
    DocFeatures,
    LdaModel,
    TfidfModel,
    Tokenizer,
    WordVectors,
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

REFERENCE_REJECTION_COUNTS = (70, 100, 120, 150, 165)
REFERENCE_TEST_SIZE = 738


def config_hash(cfg: dict) -> str:
    """Experiment identity: the config minus execution machinery (worker
    count), so reports from identical experiments hash identically."""
    reduced = json.loads(json.dumps(cfg, default=str))
    reduced.get("bootstrap", {}).pop("workers", None)
    reduced.pop("output_dir", None)
    return hashlib.sha256(
        json.dumps(reduced, sort_keys=True).encode("utf-8")
    ).hexdigest()


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _write_manifest(out: Path, cfg: dict, subcommand: str) -> None:
    from . import __version__

    _write_json(
        out / "manifest.json",
        {
            "subcommand": subcommand,
            "config_hash": config_hash(cfg),
            "package_version": __version__,
            "seeds": {
                "split": cfg["split"]["seed"],
                "eval": cfg["model"]["eval_seeds"],
                "bootstrap_master": cfg["bootstrap"]["master_seed"],
            },
        },
    )


def _tokenizer(cfg: dict) -> Tokenizer:
    return Tokenizer(mode=cfg["tokenizer"]["mode"], lowercase=cfg["tokenizer"]["lowercase"])


def scaled_topk(ks: Sequence[int], n_test: int, reference: int = REFERENCE_TEST_SIZE) -> list[int]:
    """Scale the reference rejection counts to this corpus's test size."""
    out = []
    for k in ks:
        scaled = int(math.floor(k * n_test / reference + 0.5))
        out.append(min(max(1, scaled), n_test))
    return out


# ---------------------------------------------------------------------------
# Data loading and featurization


@dataclass
class FittedFeaturizer:
    """A text featurizer fitted on the training split of one text source."""

    name: str
    kind: str
    source_tag: str
    text_source: str
    transform: Callable[[str, int], np.ndarray]  # (text, seed) -> vector
    selection: dict | None = None  # grid-selection report (lda)

    def features(self, dataset: Dataset, base_seed: int = 0) -> list[DocFeatures]:
        docs = []
        for i, rec in enumerate(dataset.records):
            seed = _derive_seed(base_seed, i)
            docs.append(
                DocFeatures(
                    id=rec.id,
                    source=self.source_tag,
                    values=self.transform(rec.text(self.text_source), seed),
                )
            )
        return docs


def _derive_seed(base: int, index: int) -> int:
    return int(
        np.random.SeedSequence(entropy=base, spawn_key=(index,)).generate_state(
            1, dtype=np.uint64
        )[0]
    )


def load_corpus(cfg: dict) -> tuple[Dataset, SplitIndices]:
    if not cfg["dataset"]["path"] or not cfg["dataset"]["schema"]:
        raise ConfigInvalid("dataset.path", "dataset path and schema are required")
    schema = corpus_mod.load_schema(cfg["dataset"]["schema"])
    dataset = corpus_mod.load_dataset(cfg["dataset"]["path"], schema)
    split = corpus_mod.stratified_split(
        dataset,
        train_frac=cfg["split"]["train_frac"],
        val_frac_of_train=cfg["split"]["val_frac_of_train"],
        seed=cfg["split"]["seed"],
    )
    return dataset, split


def build_structured(cfg: dict, dataset: Dataset, split: SplitIndices):
    """Impute, bin, WoE-encode, and IV/VIF-select the structured block."""
    tab = cfg["tabular"]
    filled = impute(dataset, split.train)
    binning = fit_binning(filled, split.train, n_bins=tab["n_bins"])
    table = fit_woe(filled, split.train, binning, smoothing=tab["smoothing"])
    by_iv = select_by_iv(
        table, [s.name for s in dataset.schema], lo=tab["iv_low"], hi=tab["iv_high"]
    )
    matrix_all = encode(filled, table, by_iv)
    if len(by_iv) >= 2 and len(split.train) >= len(by_iv):
        train_matrix = EncodedMatrix(
            ids=tuple(matrix_all.ids[i] for i in split.train),
            columns=matrix_all.columns,
            values=matrix_all.values[list(split.train), :],
        )
        kept = vif_filter(train_matrix, threshold=tab["vif_threshold"])
    else:
        kept = list(by_iv)
    matrix = encode(filled, table, kept)
    return filled, table, matrix, {"iv_selected": by_iv, "vif_selected": kept}


def _token_lists(dataset: Dataset, tokenizer: Tokenizer, source: str) -> list[list[str]]:
    return [tokenize(tokenizer, rec.text(source)) for rec in dataset.records]


def _select_n_topics(
    cfg: dict,
    grid: Sequence[int],
    feat: dict,
    train_tokens: list[list[str]],
    val_tokens: list[list[str]],
    y_train,
    y_val,
) -> tuple[int, dict]:
    """Pick the topic count whose text-only model has the lowest validation
    BCE, using the first model config of the grid."""
    base = _model_configs(cfg)[0]
    results = []
    best = None
    for n in grid:
        lda = fit_lda(
            train_tokens,
            n_topics=n,
            alpha=feat["alpha"],
            beta=feat["beta"],
            iterations=feat["train_iterations"],
            seed=feat["seed"],
        )
        Xtr = np.vstack(
            [
                infer_topics(lda, toks, iterations=feat["infer_iterations"], seed=_derive_seed(feat["seed"], i))
                for i, toks in enumerate(train_tokens)
            ]
        )
        Xv = np.vstack(
            [
                infer_topics(
                    lda,
                    toks,
                    iterations=feat["infer_iterations"],
                    seed=_derive_seed(feat["seed"], len(train_tokens) + i),
                )
                for i, toks in enumerate(val_tokens)
            ]
        )
        _, report = model_mod.train(Xtr, y_train, Xv, y_val, base)
        results.append({"n_topics": n, "val_loss": report.final_val_loss})
        if best is None or report.final_val_loss < best[1]:
            best = (n, report.final_val_loss)
    return best[0], {"grid": results, "chosen": best[0]}


def fit_featurizer(
    cfg: dict,
    dataset: Dataset,
    split: SplitIndices,
    feat: dict,
    text_source: str,
) -> FittedFeaturizer:
    tokzr = _tokenizer(cfg)
    kind = feat["kind"]
    name = feat["name"]
    source_tag = f"docvec:{name}" if kind == "docvec" else kind

    if kind in ("lda", "tfidf", "wordvec"):
        train_tokens = [
            tokenize(tokzr, dataset.records[i].text(text_source)) for i in split.train
        ]

    selection = None
    if kind == "lda":
        n_topics = feat["n_topics"]
        if feat["topic_grid"]:
            val_tokens = [
                tokenize(tokzr, dataset.records[i].text(text_source)) for i in split.val
            ]
            n_topics, selection = _select_n_topics(
                cfg,
                feat["topic_grid"],
                feat,
                train_tokens,
                val_tokens,
                dataset.labels(split.train),
                dataset.labels(split.val),
            )
        lda = fit_lda(
            train_tokens,
            n_topics=n_topics,
            alpha=feat["alpha"],
            beta=feat["beta"],
            iterations=feat["train_iterations"],
            seed=feat["seed"],
        )
        infer_iters = feat["infer_iterations"]

        def transform(text: str, seed: int, _lda: LdaModel = lda) -> np.ndarray:
            return infer_topics(_lda, tokenize(tokzr, text), iterations=infer_iters, seed=seed)

    elif kind == "tfidf":
        tfidf = fit_tfidf(train_tokens)

        def transform(text: str, seed: int, _m: TfidfModel = tfidf) -> np.ndarray:
            return tfidf_transform(_m, tokenize(tokzr, text))

    elif kind == "wordvec":
        table = load_word_vectors(feat["path"])

        def transform(text: str, seed: int, _t: WordVectors = table) -> np.ndarray:
            return avg_embed(_t, tokenize(tokzr, text))

    elif kind == "docvec":
        paths = feat["paths"]
        if text_source not in paths:
            raise ConfigInvalid(
                f"featurizers.{name}.paths",
                f"no document-vector sidecar for text source {text_source!r}",
            )
        vectors = load_doc_vectors(
            paths[text_source], feat["dim"], require_ids=dataset.ids()
        )

        def transform(text: str, seed: int) -> np.ndarray:  # noqa: ARG001
            raise RuntimeError(
                "precomputed document vectors cannot embed perturbed text"
            )

        fitted = FittedFeaturizer(
            name=name,
            kind=kind,
            source_tag=source_tag,
            text_source=text_source,
            transform=transform,
        )
        fitted.features = lambda ds, base_seed=0: [  # type: ignore[method-assign]
            DocFeatures(id=rec.id, source=source_tag, values=vectors[rec.id])
            for rec in ds.records
        ]
        return fitted
    else:
        raise ConfigInvalid("featurizers", f"unknown kind {kind!r}")

    return FittedFeaturizer(
        name=name,
        kind=kind,
        source_tag=source_tag,
        text_source=text_source,
        transform=transform,
        selection=selection,
    )


def _model_configs(cfg: dict) -> list[model_mod.MlpConfig]:
    configs = []
    for i, entry in enumerate(cfg["model"]["grid"]):
        entry = dict(entry)
        hidden = tuple(entry.pop("hidden", (64,)))
        try:
            configs.append(model_mod.MlpConfig(hidden=hidden, **entry))
        except TypeError as err:
            raise ConfigInvalid(f"model.grid[{i}]", str(err)) from err
    return configs


def _matrix_rows(matrix: EncodedMatrix, indices: Sequence[int]) -> EncodedMatrix:
    return EncodedMatrix(
        ids=tuple(matrix.ids[i] for i in indices),
        columns=matrix.columns,
        values=matrix.values[list(indices), :],
    )


def _sources_of(compound: str) -> list[str]:
    return compound.split("+")


# ---------------------------------------------------------------------------
# Stages


def run_synth(cfg: dict, out: Path) -> dict:
    presets = {
        "planted": synthgen.planted_config,
        "null": synthgen.null_config,
        "text_only": synthgen.text_only_config,
    }
    preset = cfg["synth"]["preset"]
    if preset not in presets:
        raise ConfigInvalid("synth.preset", f"unknown preset {preset!r}")
    synth_cfg = presets[preset](
        n=cfg["synth"]["n"],
        default_rate=cfg["synth"]["default_rate"],
        seed=cfg["synth"]["seed"],
    )
    dataset, sidecar = synthgen.generate(synth_cfg)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.save_dataset(out / "corpus.jsonl", dataset)
    corpus_mod.save_schema(out / "schema.json", dataset.schema)
    synthgen.save_sidecar(out / "sidecar.json", sidecar)
    _write_manifest(out, cfg, "synth")
    return {
        "n": len(dataset),
        "realized_default_rate": sidecar["realized_default_rate"],
        "corpus": str(out / "corpus.jsonl"),
    }


def run_featurize(cfg: dict, out: Path) -> dict:
    dataset, split = load_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    feat_dir = out / "features"
    feat_dir.mkdir(exist_ok=True)
    manifest = {}
    _, table, matrix, selection = build_structured(cfg, dataset, split)
    (out / "woe_table.json").write_text(woe_table_to_json(table), encoding="utf-8")
    save_doc_vectors(
        feat_dir / "structured.tsv", {rid: matrix.values[i] for i, rid in enumerate(matrix.ids)}
    )
    manifest["structured"] = {
        "columns": list(matrix.columns),
        "selection": selection,
        "path": "features/structured.tsv",
    }
    for feat in cfg["featurizers"]:
        for source in {s for compound in cfg["text_sources"] for s in _sources_of(compound)}:
            fitted = fit_featurizer(cfg, dataset, split, feat, source)
            docs = fitted.features(dataset, base_seed=feat["seed"])
            path = feat_dir / f"{feat['name']}__{source}.tsv"
            save_doc_vectors(path, {d.id: d.values for d in docs})
            manifest[f"{feat['name']}__{source}"] = {
                "kind": feat["kind"],
                "dim": docs[0].dim,
                "path": f"features/{feat['name']}__{source}.tsv",
                "selection": fitted.selection,
            }
    _write_json(out / "features_manifest.json", manifest)
    _write_manifest(out, cfg, "featurize")
    return {"featurizers": sorted(manifest)}


def _assemble_variant(
    variant: str,
    structured: EncodedMatrix,
    text_docs: list[list[DocFeatures]],
) -> EncodedMatrix:
    return model_mod.assemble(
        variant,
        structured=structured if variant in ("structured", "combined") else None,
        texts=text_docs if variant in ("text", "combined") else (),
    )


@dataclass
class VariantRuns:
    """Per-seed test scores for one (featurizer, source, variant) cell."""

    best_config: model_mod.MlpConfig
    runs: list[metrics_mod.ScoredSet]
    val_loss: float


def _train_variant(
    cfg: dict,
    dataset: Dataset,
    split: SplitIndices,
    full_matrix: EncodedMatrix,
) -> VariantRuns:
    X_train = _matrix_rows(full_matrix, split.train)
    X_val = _matrix_rows(full_matrix, split.val)
    X_test = _matrix_rows(full_matrix, split.test)
    y_train = dataset.labels(split.train)
    y_val = dataset.labels(split.val)
    y_test = dataset.labels(split.test)

    best_cfg, _, _ = model_mod.grid_search(
        _model_configs(cfg), X_train, y_train, X_val, y_val
    )
    runs = []
    val_loss = math.inf
    for seed in cfg["model"]["eval_seeds"]:
        seeded = replace(best_cfg, seed=seed)
        mdl, report = model_mod.train(X_train, y_train, X_val, y_val, seeded)
        val_loss = min(val_loss, report.final_val_loss)
        probs = model_mod.predict_proba(mdl, X_test)
        runs.append(
            metrics_mod.ScoredSet(scores=probs, labels=y_test, ids=X_test.ids)
        )
    return VariantRuns(best_config=best_cfg, runs=runs, val_loss=val_loss)


def _estimate_cells(
    cfg: dict, runs: list[metrics_mod.ScoredSet]
) -> dict[str, dict]:
    cells = {}
    for metric in cfg["metrics"]:
        est = metrics_mod.bootstrap(
            metric,
            runs,
            n_resamples=cfg["bootstrap"]["n_resamples"],
            master_seed=cfg["bootstrap"]["master_seed"],
            workers=cfg["bootstrap"]["workers"],
        )
        cells[metric] = {
            "mean": est.mean,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
            "n_estimates": est.n_estimates,
            "skipped_resamples": est.skipped_resamples,
        }
    return cells


def _topk_rows(cfg: dict, runs: list[metrics_mod.ScoredSet]) -> list[dict]:
    n_test = len(runs[0])
    reference = cfg["topk"]["reference_test_size"]
    ks = (
        scaled_topk(cfg["topk"]["ks"], n_test, reference)
        if cfg["topk"]["scale_to_corpus"]
        else [k for k in cfg["topk"]["ks"] if k <= n_test]
    )
    table = metrics_mod.topk_bootstrap(
        runs,
        ks,
        n_resamples=cfg["bootstrap"]["n_resamples"],
        master_seed=cfg["bootstrap"]["master_seed"],
        workers=cfg["bootstrap"]["workers"],
    )
    rows = []
    for k_cfg, k in zip(cfg["topk"]["ks"], ks):
        row = {"k_reference": k_cfg, "k": k}
        for field in ("recall", "precision", "f1"):
            est = table[k][field]
            row[field] = {"mean": est.mean, "ci_low": est.ci_low, "ci_high": est.ci_high}
        rows.append(row)
    return rows


def _export_points(path: Path, header: tuple[str, str], points) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for a, b in points:
            writer.writerow([repr(float(a)), repr(float(b))])


def run_evaluate(cfg: dict, out: Path, variant_filter: str | None = None) -> dict:
    dataset, split = load_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _, _, structured, selection = build_structured(cfg, dataset, split)
    variants = (
        [variant_filter] if variant_filter else ["structured", "text", "combined"]
    )

    structured_cells = structured_topk = None
    structured_runs = None
    if "structured" in variants:
        structured_runs = _train_variant(
            cfg, dataset, split, _assemble_variant("structured", structured, [])
        )
        structured_cells = _estimate_cells(cfg, structured_runs.runs)
        structured_topk = _topk_rows(cfg, structured_runs.runs)

    cells: list[dict] = []
    topk_table: list[dict] = []
    curve_dir = out / "curves"
    curve_dir.mkdir(exist_ok=True)

    for feat in cfg["featurizers"]:
        for compound in cfg["text_sources"]:
            row_key = {"featurizer": feat["name"], "category": compound}
            try:
                fitted = [
                    fit_featurizer(cfg, dataset, split, feat, source)
                    for source in _sources_of(compound)
                ]
                text_docs = [f.features(dataset, base_seed=feat["seed"]) for f in fitted]
            except (ValueError, corpus_mod.MissingText) as err:
                for metric in cfg["metrics"]:
                    for variant in variants:
                        cells.append(
                            {**row_key, "variant": variant, "metric": metric,
                             "estimate": None, "error": str(err)}
                        )
                continue
            for variant in variants:
                if variant == "structured":
                    variant_cells = structured_cells
                    variant_topk = structured_topk
                    runs = structured_runs.runs
                else:
                    matrix = _assemble_variant(variant, structured, text_docs)
                    vr = _train_variant(cfg, dataset, split, matrix)
                    variant_cells = _estimate_cells(cfg, vr.runs)
                    variant_topk = _topk_rows(cfg, vr.runs)
                    runs = vr.runs
                for metric in cfg["metrics"]:
                    cells.append(
                        {**row_key, "variant": variant, "metric": metric,
                         "estimate": variant_cells[metric]}
                    )
                for row in variant_topk:
                    topk_table.append({**row_key, "variant": variant, **row})
                tag = f"{feat['name']}__{compound.replace('+', '-')}__{variant}"
                _export_points(
                    curve_dir / f"roc_{tag}.csv", ("fpr", "tpr"),
                    metrics_mod.roc_points(runs[0]),
                )
                _export_points(
                    curve_dir / f"pr_{tag}.csv", ("recall", "precision"),
                    metrics_mod.pr_points(runs[0]),
                )

    report = {
        "config_hash": config_hash(cfg),
        "structured_selection": selection,
        "split_sizes": {
            "train": len(split.train), "val": len(split.val), "test": len(split.test)
        },
        "metrics": cfg["metrics"],
        "cells": cells,
    }
    _write_json(out / "evaluation.json", report)
    _write_json(out / "topk.json", topk_table)
    _write_topk_csv(out / "topk.csv", topk_table)
    _write_manifest(out, cfg, "evaluate")
    return {"cells": len(cells), "report": str(out / "evaluation.json")}


def _write_topk_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["featurizer", "category", "variant", "k_reference", "k",
             "recall", "precision", "f1"]
        )
        for row in rows:
            writer.writerow(
                [
                    row["featurizer"], row["category"], row["variant"],
                    row["k_reference"], row["k"],
                    f"{row['recall']['mean']:.6f}",
                    f"{row['precision']['mean']:.6f}",
                    f"{row['f1']['mean']:.6f}",
                ]
            )


def _fit_scorer(
    cfg: dict,
    dataset: Dataset,
    split: SplitIndices,
    structured: EncodedMatrix,
    variant: str,
    compound: str | None,
    seed: int,
    featurizer_name: str | None = None,
):
    """Grid-search and train one model; return (model, matrix, fitted featurizers)."""
    fitted: list[FittedFeaturizer] = []
    text_docs: list[list[DocFeatures]] = []
    if variant in ("text", "combined"):
        if not compound:
            raise ConfigInvalid("econ.compare_a", f"variant {variant!r} needs a text source")
        feat = _find_featurizer(cfg, featurizer_name)
        fitted = [
            fit_featurizer(cfg, dataset, split, feat, source)
            for source in _sources_of(compound)
        ]
        text_docs = [f.features(dataset, base_seed=feat["seed"]) for f in fitted]
    matrix = _assemble_variant(variant, structured, text_docs)
    X_train = _matrix_rows(matrix, split.train)
    X_val = _matrix_rows(matrix, split.val)
    y_train = dataset.labels(split.train)
    y_val = dataset.labels(split.val)
    best_cfg, _, _ = model_mod.grid_search(
        _model_configs(cfg), X_train, y_train, X_val, y_val
    )
    mdl, _ = model_mod.train(
        X_train, y_train, X_val, y_val, replace(best_cfg, seed=seed)
    )
    return mdl, matrix, fitted


def _find_featurizer(cfg: dict, name: str | None) -> dict:
    feats = cfg["featurizers"]
    if name is None:
        return feats[0]
    for f in feats:
        if f["name"] == name:
            return f
    raise ConfigInvalid("featurizers", f"no featurizer named {name!r}")


def run_profit(cfg: dict, out: Path) -> dict:
    dataset, split = load_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _, _, structured, _ = build_structured(cfg, dataset, split)
    seed = cfg["model"]["eval_seeds"][0]
    econ_cfg = profit_mod.EconConfig(lgd=cfg["econ"]["lgd"])
    test_ids = [dataset.records[i].id for i in split.test]
    y_test = dataset.labels(split.test)
    economics = corpus_mod.economics(dataset)

    curves = {}
    for side in ("compare_a", "compare_b"):
        spec = cfg["econ"][side]
        variant = spec.get("variant", "combined")
        source = spec.get("text_source")
        mdl, matrix, _ = _fit_scorer(
            cfg, dataset, split, structured, variant, source, seed,
            featurizer_name=cfg["econ"]["featurizer"],
        )
        probs = model_mod.predict_proba(mdl, _matrix_rows(matrix, split.test))
        scored = metrics_mod.ScoredSet(scores=probs, labels=y_test, ids=tuple(test_ids))
        curve = profit_mod.profit_curve(scored, economics, econ_cfg)
        label = f"{variant}__{source}" if source else variant
        curves[side] = (label, curve)
        profit_mod.save_profit_curve(out / f"profit_{side}_{label}.csv", curve)

    (label_a, curve_a), (label_b, curve_b) = curves["compare_a"], curves["compare_b"]
    diffs = profit_mod.profit_difference(curve_a, curve_b)
    profit_mod.save_profit_difference(out / "profit_difference.csv", diffs)
    report = {}
    for side, (label, curve) in curves.items():
        k_star, threshold, best = profit_mod.profit_max_threshold(curve)
        report[side] = {
            "model": label,
            "k_star": k_star,
            "threshold": None if math.isinf(threshold) else threshold,
            "max_profit": best,
            "total_profit_no_rejection": curve.profits[0],
        }
    _write_json(out / "profit.json", report)
    _write_manifest(out, cfg, "profit")
    return {"report": str(out / "profit.json"), "models": [label_a, label_b]}


def run_explain(cfg: dict, out: Path) -> dict:
    dataset, split = load_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _, _, structured, _ = build_structured(cfg, dataset, split)
    ex = cfg["explain"]
    seed = cfg["model"]["eval_seeds"][0]
    feat = _find_featurizer(cfg, ex["featurizer"])
    if feat["kind"] == "docvec":
        raise ConfigInvalid(
            "explain.featurizer",
            "precomputed document vectors cannot score perturbed text",
        )
    source = ex["text_source"]

    structured_model, s_matrix, _ = _fit_scorer(
        cfg, dataset, split, structured, "structured", None, seed
    )
    fitted = fit_featurizer(cfg, dataset, split, feat, source)
    text_docs = [fitted.features(dataset, base_seed=feat["seed"])]
    combined_matrix = _assemble_variant("combined", structured, text_docs)
    best_cfg, _, _ = model_mod.grid_search(
        _model_configs(cfg),
        _matrix_rows(combined_matrix, split.train),
        dataset.labels(split.train),
        _matrix_rows(combined_matrix, split.val),
        dataset.labels(split.val),
    )
    combined_model, _ = model_mod.train(
        _matrix_rows(combined_matrix, split.train),
        dataset.labels(split.train),
        _matrix_rows(combined_matrix, split.val),
        dataset.labels(split.val),
        replace(best_cfg, seed=seed),
    )

    p_structured = model_mod.predict_proba(structured_model, _matrix_rows(s_matrix, split.test))
    p_combined = model_mod.predict_proba(combined_model, _matrix_rows(combined_matrix, split.test))
    y_test = dataset.labels(split.test)
    test_ids = [dataset.records[i].id for i in split.test]
    cases = explain_mod.select_uncertain_cases(
        p_structured,
        p_combined,
        y_test,
        ids=test_ids,
        band=(ex["band_low"], ex["band_high"]),
        top_n=ex["top_n_cases"],
    )
    _write_json(
        out / "cases.json",
        [
            {
                "id": cases.ids[i],
                "structured_prob": cases.structured_probs[i],
                "combined_prob": cases.combined_probs[i],
                "improvement": cases.improvements[i],
            }
            for i in range(len(cases.ids))
        ],
    )

    tokzr = _tokenizer(cfg)
    id_to_index = {rec.id: i for i, rec in enumerate(dataset.records)}
    n_structured = len(structured.columns)
    summary = {}
    for granularity in ex["granularities"]:
        per_case = []
        for case_rank, rid in enumerate(cases.ids):
            rec = dataset.records[id_to_index[rid]]
            srow = structured.values[id_to_index[rid]]
            case_seed = _derive_seed(ex["seed"], case_rank)

            def score_fn(text: str) -> float:
                tvec = fitted.transform(text, case_seed)
                x = np.concatenate([srow, tvec])[None, :]
                return float(model_mod.predict_proba(combined_model, x)[0])

            text = rec.text(source)
            if not text.strip():
                continue
            attributions = explain_mod.lime_explain(
                score_fn,
                text,
                granularity=granularity,
                tokenizer=tokzr,
                n_samples=ex["n_samples"],
                kernel_width=ex["kernel_width"],
                ridge=ex["ridge"],
                top_k=ex["top_k"],
                seed=case_seed,
            )
            per_case.append(attributions)
        ranked = (
            explain_mod.aggregate_importance(per_case, top=ex["top_k"])
            if per_case
            else []
        )
        path = out / f"importance_{granularity}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "unit", "mean_weight", "case_count"])
            for rank, (unit, weight, count) in enumerate(ranked, start=1):
                writer.writerow([rank, unit, repr(weight), count])
        summary[granularity] = {"cases": len(per_case), "table": str(path)}
    _write_manifest(out, cfg, "explain")
    return {"selected_cases": len(cases.ids), "tables": summary}


def run_compare(cfg: dict, out: Path) -> dict:
    dataset, _ = load_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    tokzr = _tokenizer(cfg)
    refined_source = cfg["compare"]["refined_source"]

    human_tokens = _token_lists(dataset, tokzr, "human")
    refined_tokens = _token_lists(dataset, tokzr, refined_source)
    report: dict = {"refined_source": refined_source}

    report["length_stats"] = {
        "human": {
            str(lab): vars(st)
            for lab, st in corpus_mod.text_length_stats(dataset, "human", tokzr).items()
        },
        "refined": {
            str(lab): vars(st)
            for lab, st in corpus_mod.text_length_stats(dataset, refined_source, tokzr).items()
        },
    }
    lengths_h = [len(t) for t in human_tokens]
    lengths_r = [len(t) for t in refined_tokens]
    mw = textstats.mann_whitney_u(lengths_h, lengths_r)
    report["length_test"] = {"u": mw.u, "p_two_sided": mw.p_two_sided, "method": mw.method}

    similarities = {}
    for source_name in cfg["compare"]["vector_sources"]:
        if source_name == "tfidf":
            tfidf = fit_tfidf(human_tokens + refined_tokens)
            vec_of = lambda toks: tfidf_transform(tfidf, toks)  # noqa: E731
        else:
            feat = _find_featurizer(cfg, source_name)
            if feat["kind"] == "wordvec":
                table = load_word_vectors(feat["path"])
                vec_of = lambda toks, _t=table: avg_embed(_t, toks)  # noqa: E731
            else:
                raise ConfigInvalid(
                    "compare.vector_sources",
                    f"source {source_name!r} cannot embed raw token lists",
                )
        sims: dict[int, list[float]] = {0: [], 1: []}
        skipped = 0
        for rec, ht, rt in zip(dataset.records, human_tokens, refined_tokens):
            u, v = vec_of(ht), vec_of(rt)
            if np.linalg.norm(u) == 0 or np.linalg.norm(v) == 0:
                skipped += 1
                continue
            sims[rec.label].append(textstats.cosine_similarity(u, v))
        entry = {"skipped": skipped}
        for lab in (1, 0):
            arr = np.asarray(sims[lab])
            entry["bads" if lab == 1 else "goods"] = {
                "mean": float(arr.mean()) if arr.size else None,
                "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                "n": int(arr.size),
            }
        if sims[0] and sims[1]:
            test = textstats.mann_whitney_u(sims[1], sims[0])
            entry["group_test"] = {
                "u": test.u, "p_two_sided": test.p_two_sided, "method": test.method
            }
        similarities[source_name] = entry
    report["cosine_similarity"] = similarities

    if cfg["compare"]["dictionary"]:
        dictionary = textstats.load_category_dictionary(cfg["compare"]["dictionary"])
        rows = textstats.compare_corpora(
            human_tokens, refined_tokens, dictionary, m_tests=cfg["compare"]["m_tests"]
        )
        with (out / "categories.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["category", "f_human", "f_refined", "t", "stars"])
            for row in rows:
                writer.writerow(
                    [row.category, repr(row.f1), repr(row.f2), repr(row.t), row.stars]
                )
        report["categories"] = {
            "table": str(out / "categories.csv"),
            "m_tests": cfg["compare"]["m_tests"] or len(dictionary.categories),
        }

    _write_json(out / "compare.json", report)
    _write_manifest(out, cfg, "compare")
    return {"report": str(out / "compare.json")}


def run_refine(cfg: dict, out: Path) -> dict:
    rf = cfg["refine"]
    if not rf["base_url"] or not rf["model"]:
        raise ConfigInvalid("refine.base_url", "refine stage needs base_url and model")
    dataset, _ = load_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    endpoint = refine_mod.EndpointConfig(
        base_url=rf["base_url"],
        model=rf["model"],
        temperature=rf["temperature"],
        timeout=rf["timeout"],
        max_retries=rf["max_retries"],
        rpm=rf["rpm"],
        auth_env=rf["auth_env"],
    )
    limiter = refine_mod.RateLimiter(rf["rpm"])
    cache_dir = Path(rf["cache_dir"])
    todo = [rec for rec in dataset.records if not rec.refined_texts.get("full")]
    results, errors = refine_mod.refine_batch(
        cache_dir,
        endpoint,
        todo,
        limiter=limiter,
        max_concurrency=rf["max_concurrency"],
    )
    refined_records = []
    n_cached = n_fetched = 0
    failures = [{"id": rid, "error": str(err)} for rid, err in sorted(errors.items())]
    n_failed = len(failures)
    for rec in dataset.records:
        result = results.get(rec.id)
        if result is None:
            refined_records.append(rec)
            continue
        n_cached += result.retrieved_from_cache
        n_fetched += not result.retrieved_from_cache
        sections = {"positive": result.positive, "negative": result.negative}
        refined = {
            "full": result.raw,
            "positive": result.positive,
            "negative": result.negative,
            "pos_neg": refine_mod.compose_variant(sections, "pos_neg"),
            "neg_pos": refine_mod.compose_variant(sections, "neg_pos"),
        }
        refined_records.append(
            corpus_mod.LoanRecord(
                id=rec.id,
                features=rec.features,
                human_text=rec.human_text,
                label=rec.label,
                loan_amount=rec.loan_amount,
                interest_rate=rec.interest_rate,
                term_months=rec.term_months,
                refined_texts=refined,
            )
        )
    new_dataset = Dataset(records=tuple(refined_records), schema=dataset.schema)
    corpus_mod.save_dataset(out / "corpus_refined.jsonl", new_dataset)
    _write_json(
        out / "refine_report.json",
        {"cached": n_cached, "fetched": n_fetched, "failed": n_failed, "failures": failures},
    )
    _write_manifest(out, cfg, "refine")
    return {"cached": n_cached, "fetched": n_fetched, "failed": n_failed}


def run_train(cfg: dict, out: Path, variant_filter: str | None = None) -> dict:
    dataset, split = load_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    model_dir = out / "models"
    model_dir.mkdir(exist_ok=True)
    _, _, structured, _ = build_structured(cfg, dataset, split)
    variants = [variant_filter] if variant_filter else ["structured", "text", "combined"]
    y_train = dataset.labels(split.train)
    y_val = dataset.labels(split.val)
    trained = []
    for variant in variants:
        combos = (
            [(None, None)]
            if variant == "structured"
            else [
                (feat, compound)
                for feat in cfg["featurizers"]
                for compound in cfg["text_sources"]
            ]
        )
        for feat, compound in combos:
            if variant == "structured":
                matrix = _assemble_variant("structured", structured, [])
                tag = "structured"
            else:
                fitted = [
                    fit_featurizer(cfg, dataset, split, feat, source)
                    for source in _sources_of(compound)
                ]
                docs = [f.features(dataset, base_seed=feat["seed"]) for f in fitted]
                matrix = _assemble_variant(variant, structured, docs)
                tag = f"{variant}__{feat['name']}__{compound.replace('+', '-')}"
            best_cfg, best_model, reports = model_mod.grid_search(
                _model_configs(cfg),
                _matrix_rows(matrix, split.train),
                y_train,
                _matrix_rows(matrix, split.val),
                y_val,
            )
            (model_dir / f"{tag}.json").write_text(
                model_mod.model_to_json(best_model), encoding="utf-8"
            )
            best_report = min(reports, key=lambda r: r.final_val_loss)
            model_mod.save_training_curves(model_dir / f"{tag}_curves.csv", best_report)
            trained.append(
                {
                    "tag": tag,
                    "val_loss": best_report.final_val_loss,
                    "config": {
                        "hidden": list(best_cfg.hidden),
                        "learning_rate": best_cfg.learning_rate,
                        "batch_size": best_cfg.batch_size,
                        "max_epochs": best_cfg.max_epochs,
                        "patience": best_cfg.patience,
                        "seed": best_cfg.seed,
                    },
                }
            )
    _write_json(out / "training.json", trained)
    _write_manifest(out, cfg, "train")
    return {"models": [t["tag"] for t in trained]}
