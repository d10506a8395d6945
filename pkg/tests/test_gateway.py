import random
import threading

import pytest

from litrag.errors import AuthenticationError, GatewayError
from litrag.gateway import (
    ChatRequest,
    LlmGateway,
    MockBackend,
    ModelEndpoint,
    RateLimiter,
    TimingEntry,
    TimingLog,
    dedupe_timing_logs,
    format_hours_minutes,
    sum_runtime,
)
from conftest import STAGE_RUNTIMES, build_timing_fixture

ENDPOINT = ModelEndpoint(name="Test Model")


def entry(uid, duration, ts, stage="rag", endpoint="Test Model"):
    return TimingEntry(
        unique_id=uid, doc_id="doc", endpoint=endpoint, stage=stage,
        duration_ms=duration, timestamp=ts,
    )


class TestModelEndpoint:
    def test_temperature_pinned_to_zero(self):
        with pytest.raises(ValueError):
            ModelEndpoint(name="hot", temperature=0.7)

    def test_request_id_stable(self):
        first = ChatRequest.create(ENDPOINT, "prompt text")
        second = ChatRequest.create(ENDPOINT, "prompt text")
        assert first.request_id == second.request_id
        other = ChatRequest.create(ModelEndpoint(name="Other"), "prompt text")
        assert other.request_id != first.request_id


class TestComplete:
    def test_canned_response(self):
        request = ChatRequest.create(ENDPOINT, "hello")
        backend = MockBackend(canned={request.request_id: "Response: Yes"})
        gateway = LlmGateway(backend, sleep=lambda s: None)
        response = gateway.complete(ENDPOINT, request)
        assert response.text == "Response: Yes"
        assert response.attempt_count == 1

    def test_retry_until_success(self):
        request = ChatRequest.create(ENDPOINT, "flaky")
        backend = MockBackend(
            canned={request.request_id: "ok"},
            fail_first={request.request_id: 2},
        )
        delays = []
        gateway = LlmGateway(backend, sleep=delays.append)
        response = gateway.complete(ENDPOINT, request)
        assert response.attempt_count == 3
        assert delays == [2.0, 4.0]  # exponential backoff from 2 s

    def test_retries_exhausted(self):
        request = ChatRequest.create(ENDPOINT, "dead")
        backend = MockBackend(fail_first={request.request_id: 99})
        gateway = LlmGateway(backend, sleep=lambda s: None)
        with pytest.raises(GatewayError):
            gateway.complete(ENDPOINT, request)

    def test_auth_failure_propagates(self):
        class AuthBackend:
            def send(self, endpoint, request):
                raise AuthenticationError("bad key")

        gateway = LlmGateway(AuthBackend(), sleep=lambda s: None)
        with pytest.raises(AuthenticationError):
            gateway.complete(ENDPOINT, ChatRequest.create(ENDPOINT, "x"))

    def test_timing_entry_appended(self):
        request = ChatRequest.create(ENDPOINT, "timed")
        gateway = LlmGateway(MockBackend(), sleep=lambda s: None)
        gateway.complete(ENDPOINT, request, doc_id="10.1/x", stage="rag")
        entries = gateway.timing_log.entries()
        assert len(entries) == 1
        assert entries[0].doc_id == "10.1/x"
        assert entries[0].stage == "rag"
        assert entries[0].duration_ms >= 0

    def test_unknown_stage_rejected(self):
        gateway = LlmGateway(MockBackend(), sleep=lambda s: None)
        with pytest.raises(ValueError):
            gateway.complete(ENDPOINT, ChatRequest.create(ENDPOINT, "x"), stage="mystery")

    def test_mock_transcript_independent_of_parallelism(self):
        prompts = [f"question {i}" for i in range(40)]

        def run(workers):
            gateway = LlmGateway(MockBackend(), sleep=lambda s: None)
            results = {}
            lock = threading.Lock()

            def one(prompt):
                request = ChatRequest.create(ENDPOINT, prompt)
                response = gateway.complete(ENDPOINT, request)
                with lock:
                    results[prompt] = (response.text, response.duration_ms)

            threads = []
            for chunk_start in range(0, len(prompts), max(1, len(prompts) // workers)):
                batch = prompts[chunk_start:chunk_start + max(1, len(prompts) // workers)]
                thread = threading.Thread(target=lambda b=batch: [one(p) for p in b])
                threads.append(thread)
                thread.start()
            for thread in threads:
                thread.join()
            return results

        assert run(1) == run(8)


class TestInFlightCap:
    def test_at_most_four_concurrent_requests_per_endpoint(self):
        import time as time_mod

        state = {"active": 0, "peak": 0}
        lock = threading.Lock()

        class SlowBackend:
            def send(self, endpoint, request):
                with lock:
                    state["active"] += 1
                    state["peak"] = max(state["peak"], state["active"])
                time_mod.sleep(0.01)
                with lock:
                    state["active"] -= 1
                return "ok", 1

        gateway = LlmGateway(SlowBackend(), sleep=lambda s: None)
        threads = [
            threading.Thread(
                target=lambda i=i: gateway.complete(
                    ENDPOINT, ChatRequest.create(ENDPOINT, f"p{i}")
                )
            )
            for i in range(16)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert state["peak"] <= 4


class TestRateLimiter:
    def test_window_property(self):
        clock = {"now": 0.0}
        sleeps = []

        def fake_sleep(seconds):
            sleeps.append(seconds)
            clock["now"] += seconds

        limiter = RateLimiter(5, clock=lambda: clock["now"], sleep=fake_sleep)
        dispatch_times = []
        for _ in range(23):
            limiter.acquire()
            dispatch_times.append(clock["now"])
            clock["now"] += 0.5
        for i, start in enumerate(dispatch_times):
            in_window = [t for t in dispatch_times if start <= t < start + 60.0]
            assert len(in_window) <= 5
        assert sleeps, "limiter never had to wait"


class TestDedupeTimingLogs:
    def test_last_instance_wins_with_survivor_order(self):
        log = TimingLog([
            entry("a", 5, "2024-01-01T00:00:01+00:00"),
            entry("b", 7, "2024-01-01T00:00:02+00:00"),
            entry("a", 9, "2024-01-01T00:00:03+00:00"),
        ])
        deduped = dedupe_timing_logs(log).entries()
        assert [(e.unique_id, e.duration_ms) for e in deduped] == [("b", 7), ("a", 9)]

    def test_unique_ids_unchanged(self):
        log = TimingLog([
            entry("a", 1, "2024-01-01T00:00:01+00:00"),
            entry("b", 2, "2024-01-01T00:00:02+00:00"),
        ])
        assert dedupe_timing_logs(log).entries() == log.entries()

    def test_empty_log(self):
        assert dedupe_timing_logs(TimingLog()).entries() == []

    def test_matches_brute_force_oracle_and_idempotent(self):
        rng = random.Random(13)
        for _ in range(200):
            entries = [
                entry(
                    f"id{rng.randrange(8)}",
                    rng.randrange(1000),
                    f"2024-01-01T00:{rng.randrange(60):02d}:00+00:00",
                )
                for _ in range(rng.randrange(0, 30))
            ]
            log = TimingLog(entries)
            deduped = dedupe_timing_logs(log).entries()
            # oracle: group by id, keep max (timestamp, position)
            expected = {}
            for position, e in enumerate(entries):
                key = (e.timestamp, position)
                if e.unique_id not in expected or key > expected[e.unique_id][0]:
                    expected[e.unique_id] = (key, e)
            assert {e.unique_id: e for e in deduped} == {
                uid: e for uid, (_, e) in expected.items()
            }
            assert dedupe_timing_logs(TimingLog(deduped)).entries() == deduped


class TestSumRuntime:
    def test_fixture_rows_reproduced(self):
        log = dedupe_timing_logs(build_timing_fixture())
        for endpoint, (rag_h, rag_m), conversion in STAGE_RUNTIMES:
            total = sum_runtime(log, "rag", endpoint=endpoint)
            assert format_hours_minutes(total) == f"{rag_h}hr {rag_m}min"
            if conversion is not None:
                conv_h, conv_m = conversion
                total = sum_runtime(log, "categorize", endpoint=endpoint)
                assert format_hours_minutes(total) == f"{conv_h}hr {conv_m}min"

    def test_llama31_rows(self):
        log = dedupe_timing_logs(build_timing_fixture())
        assert format_hours_minutes(sum_runtime(log, "rag", "Llama 3.1 70B")) == "5hr 52min"
        assert format_hours_minutes(sum_runtime(log, "categorize", "Llama 3.1 70B")) == "9hr 31min"

    def test_rag_stage_total(self):
        log = dedupe_timing_logs(build_timing_fixture())
        assert format_hours_minutes(sum_runtime(log, "rag")) == "264hr 15min"

    def test_empty_log_sums_to_zero(self):
        assert sum_runtime(TimingLog(), "rag") == 0

    def test_half_hours_add_up(self):
        log = TimingLog([
            entry("a", 30 * 60_000, "2024-01-01T00:00:01+00:00"),
            entry("b", 30 * 60_000, "2024-01-01T00:00:02+00:00"),
        ])
        assert format_hours_minutes(sum_runtime(log, "rag")) == "1hr 0min"

    def test_per_document_totals(self):
        log = TimingLog([
            TimingEntry("u1", "10.1/a", "M", "rag", 100, "2024-01-01T00:00:01+00:00"),
            TimingEntry("u2", "10.1/a", "M", "rag", 150, "2024-01-01T00:00:02+00:00"),
            TimingEntry("u3", "10.1/b", "M", "rag", 999, "2024-01-01T00:00:03+00:00"),
        ])
        assert sum_runtime(log, "rag", doc_id="10.1/a") == 250
        assert sum_runtime(log, "rag", doc_id="10.1/b") == 999

    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError):
            sum_runtime(TimingLog(), "nonsense")


class TestTimingCsvRoundTrip:
    def test_save_and_load(self, tmp_path):
        log = TimingLog([entry("a", 5, "2024-01-01T00:00:01+00:00")])
        path = tmp_path / "timing.csv"
        log.save_csv(path)
        assert TimingLog.load_csv(path).entries() == log.entries()


class TestMockBackendDir:
    def test_canned_directory(self, tmp_path):
        request = ChatRequest.create(ENDPOINT, "prompt")
        (tmp_path / f"{request.request_id}.txt").write_text("canned reply", encoding="utf-8")
        backend = MockBackend.from_dir(tmp_path)
        text, _ = backend.send(ENDPOINT, request)
        assert text == "canned reply"

    def test_default_rule_is_deterministic(self):
        backend = MockBackend()
        request = ChatRequest.create(ENDPOINT, "any prompt at all")
        assert backend.send(ENDPOINT, request) == backend.send(ENDPOINT, request)
