"""Python bindings for the CATS segmenter."""

from ._cats import (
    CheckpointError,
    EmbeddingError,
    EvalError,
    ParseError,
    Segmenter,
    analyze,
    evaluate,
    load_vectors,
    synthesize,
    token_errors,
)

__all__ = [
    "CheckpointError",
    "EmbeddingError",
    "EvalError",
    "ParseError",
    "Segmenter",
    "analyze",
    "evaluate",
    "load_vectors",
    "synthesize",
    "token_errors",
]
