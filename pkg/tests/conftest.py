"""Shared fixtures and deterministic fixture builders."""

from __future__ import annotations

from pathlib import Path

import pytest

from litrag.gateway import TimingEntry, TimingLog
from litrag.metrics import LabelSeries
from litrag.voting import Verdict, VoteRecord

FIXTURES = Path(__file__).parent / "fixtures"

N_UNIQUE_DOIS = 364
N_BIB_ENTRIES = 991

# Per-question Yes counts: (cq_id, yes of 464 before filtering, yes of 257 after).
COVERAGE_COUNTS = (
    (1, 215, 109), (2, 333, 232), (3, 61, 55), (4, 76, 69), (5, 152, 134),
    (6, 145, 92), (7, 141, 102), (8, 23, 18), (9, 27, 16), (10, 20, 17),
    (11, 18, 12), (12, 275, 235), (13, 124, 104), (14, 76, 37), (15, 122, 111),
    (16, 75, 64), (17, 101, 85), (18, 205, 129), (19, 101, 94), (20, 101, 95),
    (21, 131, 80), (22, 340, 225), (23, 174, 115), (24, 60, 42), (25, 345, 247),
    (26, 59, 41), (27, 7, 6), (28, 17, 8),
)
N_PUBS = 464
N_RETAINED = 257

# Per-endpoint agreements with the human reference out of 840 comparisons.
AGREEMENT_COUNTS = (
    ("Mixtral 8x22B Instruct v0.1", 667),
    ("Mixtral 8x7B", 666),
    ("Llama 3.1 70B", 735),
    ("Llama 3 70B", 752),
    ("Gemma 2 9B", 746),
)

# Reference-variable agreements out of 100 for the voting comparison.
VARIABLE_AGREEMENTS = (
    (5, "Dataset", 63),
    (10, "Source code", 74),
    (19, "Open source framework", 53),
    (12, "Model architecture", 89),
    (13, "Hyperparameters", 63),
    (22, "Metrics availability", 75),
)

# Stage runtimes per endpoint row: (endpoint label, answering h, m, conversion (h, m) or None).
STAGE_RUNTIMES = (
    ("Mixtral 8x22B Instruct v0.1 (H100)", (71, 3), (6, 34)),
    ("Mixtral 8x22B Instruct v0.1 (A100)", (69, 10), None),
    ("Mixtral 8x7B", (63, 32), (40, 39)),
    ("Llama 3.1 70B", (5, 52), (9, 31)),
    ("Llama 3 70B", (38, 36), (22, 28)),
    ("Gemma 2 9B", (16, 2), (8, 49)),
)


def fixture_doi(i: int) -> str:
    return f"10.5555/eco.{i:04d}"


def build_bibliography(n_unique: int = N_UNIQUE_DOIS, n_total: int = N_BIB_ENTRIES) -> str:
    """Concatenated BibTeX exports in which the same DOI can appear in
    several keyword-query exports, totalling ``n_total`` entries over
    ``n_unique`` distinct DOIs."""
    extra = n_total - n_unique
    assert 0 <= extra <= 2 * n_unique, "pattern supports at most 3 occurrences each"
    counts = [1] * n_unique
    for k in range(extra):
        counts[k % n_unique] += 1
    entries = []
    for occurrence in range(3):
        for i in range(n_unique):
            if counts[i] > occurrence:
                entries.append(
                    "@article{export%d_item%04d,\n"
                    "  doi = {%s},\n"
                    "  title = {Study %d on automated monitoring},\n"
                    "  year = {%d},\n"
                    "  journal = {Ecological Informatics}\n"
                    "}\n" % (occurrence, i, fixture_doi(i), i, 2019 + i % 6)
                )
    assert len(entries) == n_total
    return "\n".join(entries)


def build_vote_fixture() -> tuple[list[VoteRecord], dict[str, bool]]:
    """Vote and filter stores realising COVERAGE_COUNTS exactly.

    Retained publications are the first N_RETAINED DOIs; for each question the
    Yes votes are the first ``after`` retained DOIs plus the first
    ``before - after`` removed DOIs.
    """
    dois = [fixture_doi(i) for i in range(1, N_PUBS + 1)]
    retained = dois[:N_RETAINED]
    removed = dois[N_RETAINED:]
    filters = {doi: doi in set(retained) for doi in dois}
    votes = []
    for cq_id, before, after in COVERAGE_COUNTS:
        yes_set = set(retained[:after]) | set(removed[:before - after])
        assert len(yes_set) == before
        for doi in dois:
            decision = Verdict.YES if doi in yes_set else Verdict.NO
            yes = 5 if decision is Verdict.YES else 0
            votes.append(
                VoteRecord(doi=doi, cq_id=cq_id, yes_count=yes, no_count=5 - yes,
                           decision=decision)
            )
    return votes, filters


def build_agreement_fixture(n_keys: int = 840) -> dict[str, tuple[LabelSeries, LabelSeries]]:
    """Per endpoint, an (llm, human) series pair with the fixture agreement count.

    The human labels alternate Yes/No; the llm series copies the first
    ``agreements`` labels and flips the rest.
    """
    keys = tuple((fixture_doi(1 + i // 28), 1 + i % 28) for i in range(n_keys))
    human = tuple("Yes" if i % 2 == 0 else "No" for i in range(n_keys))
    series = {}
    for name, agreements in AGREEMENT_COUNTS:
        llm = tuple(
            label if i < agreements else ("No" if label == "Yes" else "Yes")
            for i, label in enumerate(human)
        )
        series[name] = (
            LabelSeries(keys=keys, labels=llm),
            LabelSeries(keys=keys, labels=human),
        )
    return series


def build_reference_fixture() -> tuple[list[VoteRecord], LabelSeries, dict[int, str]]:
    """Votes plus human labels realising VARIABLE_AGREEMENTS over 100 DOIs."""
    dois = [fixture_doi(i) for i in range(1, 101)]
    votes = []
    ref_pairs = []
    mapping = {}
    for cq_id, variable, agreements in VARIABLE_AGREEMENTS:
        mapping[cq_id] = variable
        for rank, doi in enumerate(dois):
            decision = Verdict.YES if rank % 2 == 0 else Verdict.NO
            votes.append(
                VoteRecord(doi=doi, cq_id=cq_id, yes_count=5 if decision is Verdict.YES else 0,
                           no_count=0 if decision is Verdict.YES else 5, decision=decision)
            )
            if rank < agreements:
                label = decision.value
            else:
                label = "No" if decision is Verdict.YES else "Yes"
            ref_pairs.append(((doi, variable), label))
    return votes, LabelSeries.from_pairs(ref_pairs), mapping


def build_timing_fixture() -> TimingLog:
    """Timing entries whose per-row stage sums equal STAGE_RUNTIMES exactly,
    with superseded duplicate entries mixed in to exercise last-instance dedup."""
    log = TimingLog()
    ts = 0

    def add(uid: str, endpoint: str, stage: str, duration_ms: int) -> None:
        nonlocal ts
        ts += 1
        log.append(
            TimingEntry(unique_id=uid, doc_id="doc", endpoint=endpoint, stage=stage,
                        duration_ms=duration_ms, timestamp=f"2024-01-01T{ts:02d}:00:00+00:00")
        )

    for endpoint, rag_hm, conv_hm in STAGE_RUNTIMES:
        stages = [("rag", rag_hm)] + ([("categorize", conv_hm)] if conv_hm else [])
        for stage, (hours, minutes) in stages:
            total_ms = (hours * 60 + minutes) * 60_000
            parts = [total_ms // 3, total_ms // 3, total_ms - 2 * (total_ms // 3)]
            for part_index, duration in enumerate(parts):
                uid = f"{endpoint}|{stage}|{part_index}"
                if part_index == 0:
                    # stale first attempt that dedup must discard
                    add(uid, endpoint, stage, duration + 987_654)
                add(uid, endpoint, stage, duration)
    return log


@pytest.fixture(scope="session")
def mini_corpus_dir() -> Path:
    return FIXTURES / "mini_corpus"


@pytest.fixture(scope="session")
def config_path() -> Path:
    return FIXTURES / "config.yaml"


@pytest.fixture(scope="session")
def mock_dir() -> Path:
    return FIXTURES / "mock_responses"


@pytest.fixture(scope="session")
def bibliography_991() -> str:
    return build_bibliography()
