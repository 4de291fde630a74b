"""Text-enhanced credit default prediction.

A library for reproducing a text-augmented credit scoring workflow end to
end at desk scale: WoE encoding of structured features, text featurization
(topic model, averaged word vectors, precomputed document vectors, TF-IDF),
LLM-based assessment refinement with a fixed two-part prompt, MLP scoring,
discrimination metrics with bootstrap confidence intervals, perturbation
explanations, linguistic corpus comparison, and profit-based evaluation.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    config,
    corpus,
    explain,
    metrics,
    model,
    pipeline,
    profit,
    refine,
    synthgen,
    tabular,
    textfeat,
    textstats,
)
