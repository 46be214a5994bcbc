"""Contextual gender bias scoring for language-model cloze completions."""

import json

from ._core import (
    ClozeBiasError,
    EmbeddingTable,
    cgs,
    cgs_with_exponent,
    cosine,
    kl_divergence,
    load_embeddings,
    mock_score,
    neutralize,
    parse_corpus,
    parse_embeddings,
    sentence_id,
    validate_http_response,
    validate_logprob_file,
)
from ._core import export_sentences as _export_sentences
from ._core import run as _run

__all__ = [
    "ClozeBiasError",
    "EmbeddingTable",
    "cgs",
    "cgs_with_exponent",
    "cosine",
    "export_sentences",
    "kl_divergence",
    "load_embeddings",
    "mock_score",
    "neutralize",
    "parse_corpus",
    "parse_embeddings",
    "score",
    "sentence_id",
    "validate_http_response",
    "validate_logprob_file",
]


def score(corpus, embeddings, format="json", **options):
    """Run the pipeline. Returns the report as a dict for json, else as text."""
    if isinstance(embeddings, str):
        embeddings = [embeddings]
    out = _run(corpus, embeddings=list(embeddings), format=format, **options)
    return json.loads(out) if format == "json" else out


def export_sentences(corpus, **options):
    """Returns (list of {sentence_id, text}, number of duplicates removed)."""
    text, duplicates = _export_sentences(corpus, **options)
    return [json.loads(line) for line in text.splitlines() if line], duplicates
