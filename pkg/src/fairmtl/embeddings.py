"""Word-embedding tables, sentence encoding and cosine distance.

A sentence is represented as the elementwise sum of the pre-trained vectors
of its tokens.  Tokens missing from the table contribute nothing; a fully
out-of-vocabulary sentence encodes to the zero vector.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

TOKENIZERS = ("simple", "whitespace")


class EmbeddingFormatError(ValueError):
    """Malformed embedding file (bad header, wrong row length, empty file)."""


@dataclass
class EncodeStats:
    """Token-coverage counters accumulated while encoding sentences."""

    tokens: int = 0
    oov: int = 0
    empty_sentences: int = 0


@dataclass(frozen=True)
class EmbeddingTable:
    """Token -> dense vector map with a single fixed dimension.

    Immutable after construction; safe for concurrent readers.
    """

    dimension: int
    vectors: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError(f"embedding dimension must be >= 1, got {self.dimension}")
        for token, vec in self.vectors.items():
            if vec.shape != (self.dimension,):
                raise ValueError(
                    f"vector for {token!r} has length {vec.shape}, expected ({self.dimension},)"
                )

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def get(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token)


def tokenize(text: str, mode: str = "simple") -> list[str]:
    """Split a sentence into tokens.

    ``simple`` lowercases, strips punctuation characters and splits on
    whitespace; ``whitespace`` splits on whitespace only.
    """
    if mode == "simple":
        return text.lower().translate(_PUNCT_TABLE).split()
    if mode == "whitespace":
        return text.split()
    raise ValueError(f"unknown tokenizer {mode!r}, expected one of {TOKENIZERS}")


def _parse_row(fields: list[str], line_no: int) -> tuple[str, np.ndarray]:
    token = fields[0]
    try:
        vec = np.array([float(v) for v in fields[1:]], dtype=np.float64)
    except ValueError as exc:
        raise EmbeddingFormatError(f"line {line_no}: non-numeric vector component ({exc})") from exc
    return token, vec


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load a word2vec-style text embedding file.

    Expected format: optional header line ``<vocab_count> <dimension>``
    followed by ``<token> v1 v2 ... vd`` rows.  The header is auto-detected:
    a first line of exactly two integer fields is treated as a header,
    anything else as a data row.  Duplicate tokens keep the last occurrence
    (logged).  Rows whose vector length disagrees with the established
    dimension raise :class:`EmbeddingFormatError`.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [l for l in lines if l.strip()]
    if not lines:
        raise EmbeddingFormatError(f"{path}: empty embedding file")

    first = lines[0].split()
    dimension: int | None = None
    start = 0
    if len(first) == 2:
        try:
            declared_vocab, dimension = int(first[0]), int(first[1])
            start = 1
            if dimension < 1:
                raise EmbeddingFormatError(f"{path}: header declares dimension {dimension}")
        except ValueError:
            dimension = None  # not a header; fall through to data-row parsing
    if start == 0 and len(first) < 2:
        raise EmbeddingFormatError(f"{path}: line 1 is neither a header nor a token row")

    vectors: dict[str, np.ndarray] = {}
    duplicates = 0
    for offset, line in enumerate(lines[start:], start=start + 1):
        fields = line.split()
        if len(fields) < 2:
            raise EmbeddingFormatError(f"{path}: line {offset}: token without vector")
        token, vec = _parse_row(fields, offset)
        if dimension is None:
            dimension = vec.shape[0]
        if vec.shape[0] != dimension:
            raise EmbeddingFormatError(
                f"{path}: line {offset}: vector length {vec.shape[0]} != dimension {dimension}"
            )
        if token in vectors:
            duplicates += 1
        vec.flags.writeable = False
        vectors[token] = vec

    if not vectors:
        raise EmbeddingFormatError(f"{path}: no embedding rows")
    if duplicates:
        logger.warning("%s: %d duplicate tokens, kept last occurrence of each", path, duplicates)
    if start == 1 and declared_vocab != len(vectors):
        logger.warning(
            "%s: header declares %d tokens but %d parsed", path, declared_vocab, len(vectors)
        )
    assert dimension is not None
    return EmbeddingTable(dimension=dimension, vectors=vectors)


def encode_sentence(
    table: EmbeddingTable, tokens: list[str], stats: EncodeStats | None = None
) -> np.ndarray:
    """Sum the vectors of in-vocabulary tokens; OOV tokens are skipped."""
    out = np.zeros(table.dimension, dtype=np.float64)
    hit = False
    for token in tokens:
        vec = table.vectors.get(token)
        if stats is not None:
            stats.tokens += 1
        if vec is None:
            if stats is not None:
                stats.oov += 1
            continue
        out += vec
        hit = True
    if not hit and stats is not None:
        stats.empty_sentences += 1
    return out


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), in [0, 2].  Zero-norm inputs get the neutral value 1."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 1.0
    return 1.0 - float(np.dot(u, v)) / (nu * nv)


def cosine_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances between rows of ``a`` and rows of ``b``.

    Rows with zero norm are at distance 1 from everything, matching
    :func:`cosine_distance`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    a_hat = np.divide(a, na[:, None], out=np.zeros_like(a), where=na[:, None] > 0)
    b_hat = np.divide(b, nb[:, None], out=np.zeros_like(b), where=nb[:, None] > 0)
    return 1.0 - a_hat @ b_hat.T
