"""Sliding-window chunking, lexical chunk scoring, and budgeted context assembly."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from . import textsim

log = logging.getLogger(__name__)


class TokenUnit(str, enum.Enum):
    WHITESPACE_WORD = "whitespace-word"
    CHARACTER = "character"


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = 1000
    overlap: int = 50
    token_unit: TokenUnit = TokenUnit.WHITESPACE_WORD

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be positive")
        if not 0 <= self.overlap < self.chunk_size:
            raise ValueError("overlap must satisfy 0 <= overlap < chunk_size")

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    start: int
    text: str
    length: int


@dataclass(frozen=True)
class ChunkScore:
    chunk_index: int
    score: float


@dataclass(frozen=True)
class RetrievalContext:
    chunks: tuple[Chunk, ...]
    total_tokens: int
    budget: int

    @property
    def text(self) -> str:
        return "\n\n".join(chunk.text for chunk in self.chunks)


def chunk_document(text: str, config: ChunkingConfig, doc_id: str = "") -> list[Chunk]:
    """Cut the text into windows of ``chunk_size`` tokens advancing by
    ``chunk_size - overlap``.

    The walk stops once a window reaches the end of the document, so every
    token is covered at least once and only the final chunk may be short.
    Empty input gives an empty list.
    """
    if config.token_unit is TokenUnit.CHARACTER:
        tokens: Sequence[str] = text
    else:
        tokens = text.split()
    if not tokens:
        return []
    chunks: list[Chunk] = []
    start = 0
    while True:
        window = tokens[start:start + config.chunk_size]
        if config.token_unit is TokenUnit.CHARACTER:
            chunk_text = text[start:start + config.chunk_size]
        else:
            chunk_text = " ".join(window)
        chunks.append(
            Chunk(
                doc_id=doc_id,
                index=len(chunks),
                start=start,
                text=chunk_text,
                length=len(window),
            )
        )
        if start + config.chunk_size >= len(tokens):
            break
        start += config.stride
    return chunks


class ChunkScorer(Protocol):
    def score(self, query: str, chunks: Sequence[Chunk]) -> list[ChunkScore]:
        """Score every chunk against the query; higher is more relevant."""


class LexicalScorer:
    """Default offline scorer: cosine between tf-idf vectors of the query and
    each chunk, with the idf table fitted over the document's own chunks."""

    def score(self, query: str, chunks: Sequence[Chunk]) -> list[ChunkScore]:
        if not chunks:
            raise ValueError("score requires at least one chunk")
        model = textsim.TfidfModel.fit(chunk.text for chunk in chunks)
        query_vec = model.transform(query)
        return [
            ChunkScore(chunk_index=chunk.index, score=textsim.cosine(query_vec, model.transform(chunk.text)))
            for chunk in chunks
        ]


def score_chunks(
    query: str, chunks: Sequence[Chunk], scorer: Optional[ChunkScorer] = None
) -> list[ChunkScore]:
    scorer = scorer or LexicalScorer()
    return scorer.score(query, chunks)


def rank_scores(scores: Sequence[ChunkScore]) -> list[ChunkScore]:
    """Descending score; ties broken by ascending chunk index for determinism."""
    return sorted(scores, key=lambda s: (-s.score, s.chunk_index))


def assemble_context(
    ranked: Sequence[ChunkScore], chunks: Sequence[Chunk], budget: int
) -> RetrievalContext:
    """Admit whole chunks in rank order until the next one would exceed the
    token budget.

    Admission stops at the first chunk that does not fit; this keeps the
    admitted set a prefix of the ranking, so growing the budget can only
    extend it. Chunks are never truncated.
    """
    by_index = {chunk.index: chunk for chunk in chunks}
    admitted: list[Chunk] = []
    total = 0
    for item in ranked:
        chunk = by_index[item.chunk_index]
        if total + chunk.length > budget:
            break
        admitted.append(chunk)
        total += chunk.length
    if not admitted and chunks:
        log.warning(
            "retrieval budget %d below smallest chunk length %d; empty context",
            budget,
            min(chunk.length for chunk in chunks),
        )
    return RetrievalContext(chunks=tuple(admitted), total_tokens=total, budget=budget)


def retrieve_context(
    text: str,
    query: str,
    config: ChunkingConfig,
    budget: int,
    doc_id: str = "",
    scorer: Optional[ChunkScorer] = None,
) -> RetrievalContext:
    """Chunk, score, rank, and assemble in one step."""
    chunks = chunk_document(text, config, doc_id=doc_id)
    if not chunks:
        return RetrievalContext(chunks=(), total_tokens=0, budget=budget)
    ranked = rank_scores(score_chunks(query, chunks, scorer))
    return assemble_context(ranked, chunks, budget)
