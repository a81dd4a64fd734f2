import base64
import hashlib
import json
import random
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from platepatrol.imaging import encode_png
from platepatrol.lmm import PROMPT, LmmClient, LmmRequest, build_prompt, parse_response
from platepatrol.mocks import MockLmmServer
from platepatrol.plate_synth import render_plate
from platepatrol.plates import PlateFormatError
from platepatrol.retry import RetryPolicy, is_retryable_status

PROMPT_SHA256 = "c27022205b077143dbf8b11b95ab6d45ae8cecf2153bd65b5baaa104597f8acc"


@pytest.fixture
def png(atlas):
    img, _ = render_plate("HPJ149", atlas)
    return encode_png(img)


def client_for(srv, no_sleep, **kw):
    return LmmClient(endpoint=srv.url, sleep=no_sleep, rng=random.Random(0), **kw)


class TestPrompt:
    def test_checksum(self):
        assert hashlib.sha256(PROMPT.encode()).hexdigest() == PROMPT_SHA256
        assert build_prompt() == PROMPT

    @pytest.mark.parametrize("raw, expected", [
        ("HPJ149", "HPJ149"), ("hpj-149", "HPJ149"), ("ABC 1234", "ABC1234"),
        ('"ABC1234"', "ABC1234"), ("  abc1234\n", "ABC1234"),
    ])
    def test_parse(self, raw, expected):
        assert parse_response(raw) == expected

    @pytest.mark.parametrize("raw", ["The plate is ABC1234", "AB12", "ABCDEFGH", "", "ABC_123", '"ABC1234."'])
    def test_parse_rejects(self, raw):
        with pytest.raises(PlateFormatError):
            parse_response(raw)

    @given(st.text(max_size=12))
    def test_parse_idempotent(self, raw):
        try:
            once = parse_response(raw)
        except PlateFormatError:
            return
        assert parse_response(once) == once


class TestRetryPolicy:
    @pytest.mark.parametrize("status, retry", [(429, True), (500, True), (503, True), (599, True),
                                               (400, False), (401, False), (404, False), (200, False)])
    def test_retryable(self, status, retry):
        assert is_retryable_status(status) is retry

    def test_schedule_monotonic_and_capped(self):
        p = RetryPolicy()
        sched = [p.scheduled_delay(k) for k in range(1, 12)]
        assert sched[:5] == [0.5, 1.0, 2.0, 4.0, 8.0]
        assert all(a <= b for a, b in zip(sched, sched[1:]))
        assert max(sched) == 8.0

    def test_jitter_within_bound(self):
        p, rng = RetryPolicy(), random.Random(1)
        for k in range(1, 10):
            assert 0.0 <= p.delay(k, rng) <= p.scheduled_delay(k)

    def test_invalid(self):
        with pytest.raises(ValueError):
            RetryPolicy(max_attempts=0)


class TestClient:
    def test_single_attempt(self, png, no_sleep):
        with MockLmmServer.fixed("hpj-149") as srv:
            resp = client_for(srv, no_sleep).recognize(png)
        assert resp.ok and resp.normalized == "HPJ149" and resp.raw_text == "hpj-149"
        assert resp.attempts == 1 and srv.call_count == 1 and no_sleep.calls == []

    def test_request_document(self, png, no_sleep):
        with MockLmmServer.fixed("HPJ149") as srv:
            client_for(srv, no_sleep, model_id="gpt-4o").recognize(png)
            doc = srv.json_bodies()[0]
        assert doc["model"] == "gpt-4o"
        text, image = doc["messages"][0]["content"]
        assert text == {"type": "text", "text": PROMPT}
        prefix = "data:image/png;base64,"
        assert image["image_url"]["url"].startswith(prefix)
        assert base64.b64decode(image["image_url"]["url"][len(prefix):]) == png

    def test_fail_seven_then_succeed(self, png, no_sleep):
        with MockLmmServer.fail_then_succeed(7, "HPJ149") as srv:
            resp = client_for(srv, no_sleep).recognize(png)
        assert resp.ok and resp.attempts == 8 and srv.call_count == 8
        assert len(no_sleep.calls) == 7

    def test_eight_failures_exhaust(self, png, no_sleep):
        with MockLmmServer.always_failing(429) as srv:
            resp = client_for(srv, no_sleep).recognize(png)
        assert not resp.ok and resp.attempts == 8 and srv.call_count == 8
        assert resp.error == "upstream: HTTP 429" and resp.status == 429

    def test_server_errors_retry(self, png, no_sleep):
        with MockLmmServer([(500, None), (503, None), (200, "ABC1234")]) as srv:
            resp = client_for(srv, no_sleep).recognize(png)
        assert resp.normalized == "ABC1234" and resp.attempts == 3

    def test_client_error_not_retried(self, png, no_sleep):
        with MockLmmServer.always_failing(400) as srv:
            resp = client_for(srv, no_sleep).recognize(png)
        assert not resp.ok and resp.attempts == 1 and srv.call_count == 1

    def test_malformed_answer(self, png, no_sleep):
        with MockLmmServer.malformed() as srv:
            resp = client_for(srv, no_sleep).recognize(png)
        assert resp.error == "format" and resp.raw_text == "The plate is ABC1234"
        assert srv.call_count == 1

    def test_retry_on_malformed(self, png, no_sleep):
        with MockLmmServer([(200, "not a plate"), (200, "ABC1234")]) as srv:
            resp = client_for(srv, no_sleep, retry_on_malformed=True).recognize(png)
        assert resp.normalized == "ABC1234" and resp.attempts == 2

    def test_transport_error_retried(self, png, no_sleep):
        client = LmmClient(endpoint="http://127.0.0.1:9/v1/chat/completions", sleep=no_sleep,
                           policy=RetryPolicy(max_attempts=3), timeout=2.0)
        resp = client.recognize(png)
        assert not resp.ok and resp.attempts == 3 and resp.status is None
        assert resp.error.startswith("upstream: ")

    def test_backoff_waits_follow_schedule(self, png, no_sleep):
        policy = RetryPolicy(jitter=False)
        with MockLmmServer.always_failing(503) as srv:
            LmmClient(endpoint=srv.url, sleep=no_sleep, policy=policy).recognize(png)
        assert no_sleep.calls == [0.5, 1.0, 2.0, 4.0, 8.0, 8.0, 8.0]

    def test_phases_sum(self, png, no_sleep):
        with MockLmmServer.fixed("HPJ149") as srv:
            resp = client_for(srv, no_sleep).recognize(png)
        assert set(resp.phases) == {"load", "call", "parse"}
        assert all(v >= 0 for v in resp.phases.values())
        assert resp.elapsed == pytest.approx(sum(resp.phases.values()))

    def test_bearer_from_env(self, png, no_sleep, monkeypatch):
        monkeypatch.setenv("PP_TEST_KEY", "sk-test-123")
        with MockLmmServer.fixed("HPJ149") as srv:
            client_for(srv, no_sleep, api_key_env="PP_TEST_KEY").recognize(png)
            headers = srv.requests[0]["headers"]
        assert headers["authorization"] == "Bearer sk-test-123"

    def test_no_key_no_header(self, png, no_sleep, monkeypatch):
        monkeypatch.delenv("PP_TEST_KEY", raising=False)
        with MockLmmServer.fixed("HPJ149") as srv:
            client_for(srv, no_sleep, api_key_env="PP_TEST_KEY").recognize(png)
            assert "authorization" not in srv.requests[0]["headers"]

    def test_accepts_image_objects(self, atlas, no_sleep):
        img, _ = render_plate("ABC1234", atlas)
        with MockLmmServer(responder=lambda doc: (200, "ABC1234")) as srv:
            assert client_for(srv, no_sleep).recognize(img).ok

    def test_concurrent_use(self, png, no_sleep):
        with MockLmmServer.fixed("HPJ149") as srv:
            client = client_for(srv, no_sleep)
            out = []
            threads = [threading.Thread(target=lambda: out.append(client.recognize(png))) for _ in range(8)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        assert len(out) == 8 and all(r.normalized == "HPJ149" for r in out)
        assert client.metrics.snapshot() == {"calls": 8, "attempts": 8, "failures": 0}

    def test_direct_request(self, png, no_sleep):
        with MockLmmServer.fixed("KLM5521") as srv:
            resp = client_for(srv, no_sleep).recognize_with_retry(LmmRequest(png))
        assert resp.normalized == "KLM5521"
