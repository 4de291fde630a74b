"""Pipeline configuration: a strict, typed YAML key tree.

Unknown keys are errors (fail-closed); every error names the offending
field path.  ``load_config`` returns a plain nested dict with defaults
filled in, ready for the pipeline stages.
"""

from __future__ import annotations

from pathlib import Path

import yaml


class ConfigInvalid(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.field_path = path


_NUM = (int, float)

# (type spec, default).  Type specs: a type/tuple of types, "list:<kind>",
# or a nested dict.  ``None`` defaults mean "optional, may stay None".
_FEATURIZER_SCHEMA = {
    "name": (str, None),
    "kind": (str, None),  # lda | wordvec | docvec | tfidf
    "n_topics": (int, 10),
    "topic_grid": ("list:int", None),
    "alpha": (_NUM, None),
    "beta": (_NUM, 0.01),
    "train_iterations": (int, 300),
    "infer_iterations": (int, 60),
    "seed": (int, 11),
    "path": (str, None),  # wordvec table
    "paths": (dict, None),  # docvec: text source -> sidecar path
    "dim": (int, None),  # docvec expected dimension
}

_SCHEMA = {
    "dataset": {
        "path": (str, None),
        "schema": (str, None),
        "sidecar": (str, None),
    },
    "synth": {
        "preset": (str, "planted"),  # planted | null | text_only
        "n": (int, 2000),
        "default_rate": (_NUM, 0.10),
        "seed": (int, 0),
    },
    "split": {
        "train_frac": (_NUM, 0.7),
        "val_frac_of_train": (_NUM, 0.2),
        "seed": (int, 7),
    },
    "tokenizer": {
        "mode": (str, "word"),
        "lowercase": (bool, True),
    },
    "tabular": {
        "n_bins": (int, 5),
        "smoothing": (_NUM, 0.5),
        "iv_low": (_NUM, 0.01),
        "iv_high": (_NUM, 0.50),
        "vif_threshold": (_NUM, 10.0),
    },
    "featurizers": ("list:featurizer", [{"name": "lda", "kind": "lda"}]),
    "text_sources": ("list:str", ["human"]),
    "model": {
        "grid": (
            "list:dict",
            [
                {
                    "hidden": [64],
                    "learning_rate": 1e-3,
                    "batch_size": 32,
                    "max_epochs": 200,
                    "patience": 20,
                }
            ],
        ),
        "eval_seeds": ("list:int", [0, 1, 2, 3, 4]),
    },
    "metrics": ("list:str", ["auc", "ks", "h_measure", "pr_auc"]),
    "bootstrap": {
        "n_resamples": (int, 1000),
        "master_seed": (int, 99),
        "workers": (int, 1),
    },
    "topk": {
        "ks": ("list:int", [70, 100, 120, 150, 165]),
        "reference_test_size": (int, 738),
        "scale_to_corpus": (bool, True),
    },
    "econ": {
        "lgd": (_NUM, 0.9),
        "compare_a": (dict, {"variant": "combined", "text_source": "human"}),
        "compare_b": (dict, {"variant": "structured", "text_source": None}),
        "featurizer": (str, None),
    },
    "explain": {
        "featurizer": (str, None),
        "text_source": (str, "human"),
        "granularities": ("list:str", ["word", "phrase"]),
        "n_samples": (int, 400),
        "kernel_width": (_NUM, None),
        "ridge": (_NUM, 1.0),
        "top_k": (int, 15),
        "band_low": (_NUM, 0.40),
        "band_high": (_NUM, 0.60),
        "top_n_cases": (int, 250),
        "seed": (int, 5),
    },
    "refine": {
        "base_url": (str, None),
        "model": (str, None),
        "temperature": (_NUM, 0.0),
        "timeout": (_NUM, 30.0),
        "max_retries": (int, 3),
        "rpm": (int, 60),
        "max_concurrency": (int, 2),
        "auth_env": (str, "REFINE_API_KEY"),
        "cache_dir": (str, ".refine_cache"),
    },
    "compare": {
        "refined_source": (str, "full"),
        "vector_sources": ("list:str", ["tfidf"]),
        "dictionary": (str, None),
        "m_tests": (int, None),
    },
    "output_dir": (str, "out"),
}


def _check_type(path: str, value, spec):
    if value is None:
        return value
    if isinstance(spec, tuple) and not isinstance(spec, type):
        types = spec
    else:
        types = (spec,)
    if isinstance(value, bool) and bool not in types:
        raise ConfigInvalid(path, f"expected {types}, got bool")
    if not isinstance(value, types):
        raise ConfigInvalid(path, f"expected {types}, got {type(value).__name__}")
    return value


def _apply_schema(path: str, schema: dict, raw: dict) -> dict:
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigInvalid(
            f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0],
            "unknown key",
        )
    out = {}
    for key, spec in schema.items():
        sub_path = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            sub_raw = raw.get(key, {})
            if sub_raw is None:
                sub_raw = {}
            if not isinstance(sub_raw, dict):
                raise ConfigInvalid(sub_path, "expected a mapping")
            out[key] = _apply_schema(sub_path, spec, sub_raw)
            continue
        type_spec, default = spec
        if key not in raw or raw[key] is None:
            out[key] = default
            continue
        value = raw[key]
        if isinstance(type_spec, str) and type_spec.startswith("list:"):
            if not isinstance(value, list):
                raise ConfigInvalid(sub_path, "expected a list")
            kind = type_spec.split(":", 1)[1]
            if kind == "int":
                value = [_check_type(f"{sub_path}[{i}]", v, int) for i, v in enumerate(value)]
            elif kind == "str":
                value = [_check_type(f"{sub_path}[{i}]", v, str) for i, v in enumerate(value)]
            elif kind == "dict":
                value = [_check_type(f"{sub_path}[{i}]", v, dict) for i, v in enumerate(value)]
            elif kind == "featurizer":
                value = [
                    _apply_schema(f"{sub_path}[{i}]", _FEATURIZER_SCHEMA, _check_type(f"{sub_path}[{i}]", v, dict))
                    for i, v in enumerate(value)
                ]
            out[key] = value
        else:
            out[key] = _check_type(sub_path, value, type_spec)
    return out


def validate_config(raw: dict) -> dict:
    """Validate a raw config mapping and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("", "config root must be a mapping")
    cfg = _apply_schema("", _SCHEMA, raw)
    for i, feat in enumerate(cfg["featurizers"]):
        path = f"featurizers[{i}]"
        if not feat.get("name"):
            raise ConfigInvalid(f"{path}.name", "featurizer needs a name")
        kind = feat.get("kind")
        if kind not in ("lda", "wordvec", "docvec", "tfidf"):
            raise ConfigInvalid(f"{path}.kind", f"unknown featurizer kind {kind!r}")
        if kind == "wordvec" and not feat.get("path"):
            raise ConfigInvalid(f"{path}.path", "wordvec featurizer needs a vector file")
        if kind == "docvec":
            if not feat.get("paths"):
                raise ConfigInvalid(
                    f"{path}.paths", "docvec featurizer needs per-source sidecar paths"
                )
            if not feat.get("dim"):
                raise ConfigInvalid(f"{path}.dim", "docvec featurizer needs a dimension")
    names = [f["name"] for f in cfg["featurizers"]]
    if len(names) != len(set(names)):
        raise ConfigInvalid("featurizers", "featurizer names must be unique")
    if cfg["tokenizer"]["mode"] not in ("word", "char"):
        raise ConfigInvalid("tokenizer.mode", f"unknown mode {cfg['tokenizer']['mode']!r}")
    known = ("human", "full", "positive", "negative", "pos_neg", "neg_pos")
    for src in cfg["text_sources"]:
        # "a+b" concatenates the representations of several sources
        for part in src.split("+"):
            if part not in known:
                raise ConfigInvalid("text_sources", f"unknown text source {part!r}")
    return cfg


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid("", f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    if raw is None:
        raw = {}
    return validate_config(raw)
