"""Question answering over the corpus: one textual answer per
(publication, question, endpoint) triple, stored resumably."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from . import prompts
from .corpus import PublicationRecord
from .errors import GatewayError
from .gateway import ChatRequest, LlmGateway, ModelEndpoint
from .retrieval import ChunkScorer, ChunkingConfig, retrieve_context

log = logging.getLogger(__name__)

ANSWER_MARKERS = ("Helpful Answer::", "Answer::")


@dataclass(frozen=True)
class CompetencyQuestion:
    id: int
    text: str


def load_competency_questions(path: Optional[str | Path] = None) -> list[CompetencyQuestion]:
    """Read the tab-separated question list; ids must be unique and contiguous from 1."""
    if path is None:
        raw = resources.files("litrag.data").joinpath("competency_questions.txt").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    questions = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        ident, text = line.split("\t", 1)
        questions.append(CompetencyQuestion(id=int(ident), text=text))
    ids = [q.id for q in questions]
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError("question ids must be contiguous starting at 1")
    return questions


def strip_answer_markers(text: str) -> str:
    """Return the text after the final answer marker, trimmed.

    Models sometimes wrap the payload in scaffolding such as
    "Helpful Answer:: ..."; only what follows the last marker is kept.
    Idempotent, and the identity on marker-free input (modulo trimming).
    """
    cut = -1
    for marker in ANSWER_MARKERS:
        pos = text.rfind(marker)
        if pos >= 0:
            cut = max(cut, pos + len(marker))
    if cut >= 0:
        return text[cut:].strip()
    return text.strip()


@dataclass(frozen=True)
class TextualAnswer:
    doi: str
    cq_id: int
    endpoint: str
    raw_text: str
    clean_text: str
    duration_ms: int

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.doi, self.cq_id, self.endpoint)


class AnswerStore:
    """Append-only JSONL store of textual answers, keyed by (doi, cq, endpoint).

    Records are appended as they complete so an interrupted run can resume;
    `canonicalize` rewrites the finished file in sorted key order, which makes
    completed stores byte-identical regardless of worker count.
    """

    FIELDS = ("doi", "cq_id", "endpoint", "clean_text", "duration_ms")

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, answer: TextualAnswer) -> None:
        record = {
            "doi": answer.doi,
            "cq_id": answer.cq_id,
            "endpoint": answer.endpoint,
            "clean_text": answer.clean_text,
            "duration_ms": answer.duration_ms,
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def load(self) -> list[dict]:
        if not self.path.is_file():
            return []
        records = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return records

    def keys(self) -> set[tuple[str, int, str]]:
        return {(r["doi"], r["cq_id"], r["endpoint"]) for r in self.load()}

    def canonicalize(self) -> None:
        records = self.load()
        records.sort(key=lambda r: (r["doi"], r["cq_id"], r["endpoint"]))
        with self._lock:
            with open(self.path, "w", encoding="utf-8") as fh:
                for record in records:
                    ordered = {name: record[name] for name in self.FIELDS}
                    fh.write(json.dumps(ordered, ensure_ascii=False) + "\n")


def answer_cq(
    publication: PublicationRecord,
    cq: CompetencyQuestion,
    endpoint: ModelEndpoint,
    gateway: LlmGateway,
    chunking: ChunkingConfig,
    budget: int = 1200,
    scorer: Optional[ChunkScorer] = None,
) -> TextualAnswer:
    """Retrieve context for the question, prompt the endpoint, clean the reply."""
    if not publication.full_text.strip():
        raise ValueError(f"publication {publication.citation.doi} has empty text")
    context = retrieve_context(
        publication.full_text,
        cq.text,
        chunking,
        budget,
        doc_id=publication.citation.doi,
        scorer=scorer,
    )
    prompt = prompts.render("cq-answering", {"query": cq.text, "context": context.text})
    request = ChatRequest.create(endpoint, prompt)
    response = gateway.complete(
        endpoint, request, doc_id=publication.citation.doi, stage="rag"
    )
    return TextualAnswer(
        doi=publication.citation.doi,
        cq_id=cq.id,
        endpoint=endpoint.name,
        raw_text=response.text,
        clean_text=strip_answer_markers(response.text),
        duration_ms=response.duration_ms,
    )


@dataclass
class MatrixResult:
    completed: int = 0
    skipped: int = 0
    failed: list[tuple[str, int, str, str]] = field(default_factory=list)

    @property
    def is_complete(self) -> bool:
        return not self.failed


def run_matrix(
    publications: Sequence[PublicationRecord],
    questions: Sequence[CompetencyQuestion],
    endpoints: Sequence[ModelEndpoint],
    gateway: LlmGateway,
    store: AnswerStore,
    chunking: ChunkingConfig,
    budget: int = 1200,
    scorer: Optional[ChunkScorer] = None,
    parallelism: int = 4,
) -> MatrixResult:
    """Fill the (publication x question x endpoint) answer matrix.

    Existing store entries are skipped, failed items are retried once at the
    end of the run, and the store is canonicalized when the matrix is
    complete.
    """
    existing = store.keys()
    result = MatrixResult()
    work: list[tuple[PublicationRecord, CompetencyQuestion, ModelEndpoint]] = []
    for pub in sorted(publications, key=lambda p: p.citation.doi):
        for cq in sorted(questions, key=lambda q: q.id):
            for endpoint in endpoints:
                if (pub.citation.doi, cq.id, endpoint.name) in existing:
                    result.skipped += 1
                else:
                    work.append((pub, cq, endpoint))

    def run_one(item: tuple[PublicationRecord, CompetencyQuestion, ModelEndpoint]) -> TextualAnswer:
        pub, cq, endpoint = item
        return answer_cq(pub, cq, endpoint, gateway, chunking, budget, scorer)

    failures: list[tuple[PublicationRecord, CompetencyQuestion, ModelEndpoint, str]] = []
    if parallelism <= 1:
        for item in work:
            try:
                store.append(run_one(item))
                result.completed += 1
            except GatewayError as exc:
                failures.append((*item, str(exc)))
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = {pool.submit(run_one, item): item for item in work}
            for future in as_completed(futures):
                item = futures[future]
                try:
                    store.append(future.result())
                    result.completed += 1
                except GatewayError as exc:
                    failures.append((*item, str(exc)))

    # one end-of-run retry for anything that failed
    for pub, cq, endpoint, _ in failures:
        try:
            store.append(run_one((pub, cq, endpoint)))
            result.completed += 1
        except GatewayError as exc:
            result.failed.append((pub.citation.doi, cq.id, endpoint.name, str(exc)))

    if result.is_complete:
        store.canonicalize()
    else:
        log.error("answer matrix incomplete: %d item(s) failed", len(result.failed))
    return result
