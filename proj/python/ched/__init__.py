"""Content-word based dialog response generation toolkit."""

from ._ched import (
    EmbeddingTable,
    FunctionLexicon,
    Generator,
    Vocabulary,
    build_insert_pool,
    content_coverage,
    distinct_ngrams,
    embedding_similarity,
    evaluate_corpus,
    extract_content_sequence,
    inject_noise,
    lemmatize,
    run_cli,
    segment,
    sentence_bleu,
    tokenize,
)

__all__ = [
    "EmbeddingTable",
    "FunctionLexicon",
    "Generator",
    "Vocabulary",
    "build_insert_pool",
    "content_coverage",
    "distinct_ngrams",
    "embedding_similarity",
    "evaluate_corpus",
    "extract_content_sequence",
    "inject_noise",
    "lemmatize",
    "run_cli",
    "segment",
    "sentence_bleu",
    "tokenize",
]
