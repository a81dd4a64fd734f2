"""Single-call plate reading through an OpenAI-compatible chat-completions endpoint."""

from __future__ import annotations

import base64
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field

import httpx

from .plates import PlateFormatError, normalize_plate
from .retry import RetryPolicy, is_retryable_status

log = logging.getLogger(__name__)

PROMPT = (
    "This image is a photo of a car or motorcycle license plate. Please output only the "
    "license plate number shown in the image, in a format of 6 or 7 characters composed of "
    "English letters and numbers, such as \"ABC1234.\" The license plate number should retain "
    "only alphanumeric content, with all spaces and hyphens removed. Do not add any annotations "
    "or extra text, only return the license plate number."
)

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-4o"
DEFAULT_KEY_ENV = "OPENAI_API_KEY"


def build_prompt() -> str:
    return PROMPT


def parse_response(raw: str) -> str:
    """Normalize a model answer to a plate; raises :class:`PlateFormatError`."""
    return normalize_plate(raw)


@dataclass(frozen=True)
class LmmRequest:
    image_png: bytes
    prompt: str = PROMPT
    model_id: str = DEFAULT_MODEL
    timeout: float = 30.0


@dataclass
class LmmResponse:
    raw_text: str | None
    normalized: str | None
    attempts: int
    phases: dict = field(default_factory=lambda: {"load": 0.0, "call": 0.0, "parse": 0.0})
    status: int | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.normalized is not None

    @property
    def elapsed(self) -> float:
        return sum(self.phases.values())


class _Metrics:
    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.attempts = 0
        self.failures = 0

    def add(self, attempts: int, failed: bool):
        with self._lock:
            self.calls += 1
            self.attempts += attempts
            self.failures += int(failed)

    def snapshot(self) -> dict:
        with self._lock:
            return {"calls": self.calls, "attempts": self.attempts, "failures": self.failures}


class LmmClient:
    """Thread-safe client; the API key is read from ``api_key_env`` at call time.

    ``sleep`` and ``rng`` are injectable so tests can run the backoff schedule
    without waiting.
    """

    def __init__(self, endpoint=DEFAULT_ENDPOINT, model_id=DEFAULT_MODEL, api_key_env=DEFAULT_KEY_ENV,
                 timeout=30.0, policy: RetryPolicy | None = None, retry_on_malformed=False,
                 sleep=time.sleep, rng: random.Random | None = None):
        self.endpoint = endpoint
        self.model_id = model_id
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.policy = policy or RetryPolicy()
        self.retry_on_malformed = retry_on_malformed
        self.sleep = sleep
        self.rng = rng or random.Random()
        self.metrics = _Metrics()
        self._http = httpx.Client(timeout=timeout)

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request_body(self, req: LmmRequest) -> dict:
        data_url = "data:image/png;base64," + base64.b64encode(req.image_png).decode("ascii")
        return {
            "model": req.model_id,
            "temperature": 0,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": req.prompt},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            }],
        }

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env) if self.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _call_once(self, body: dict, timeout: float) -> tuple[int | None, str | None, str | None]:
        """One HTTP exchange: ``(status, content, transport_error)``."""
        try:
            resp = self._http.post(self.endpoint, json=body, headers=self._headers(), timeout=timeout)
        except httpx.HTTPError as exc:
            return None, None, type(exc).__name__
        if resp.status_code >= 300:
            return resp.status_code, None, None
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            return resp.status_code, None, "malformed response document"
        return resp.status_code, content if isinstance(content, str) else str(content), None

    def _call(self, req: LmmRequest, attempts_so_far: int = 0):
        body = self.request_body(req)
        attempts = attempts_so_far
        status, error = None, None
        while attempts < self.policy.max_attempts:
            if attempts > attempts_so_far:
                self.sleep(self.policy.delay(attempts, self.rng))
            attempts += 1
            status, content, error = self._call_once(body, req.timeout)
            if content is not None:
                return attempts, status, content, None
            retryable = status is None or is_retryable_status(status)
            if not retryable:
                break
            log.info("LMM attempt %d failed (status=%s, error=%s)", attempts, status, error)
        if error is not None:
            reason = error if status is None else f"HTTP {status}: {error}"
        else:
            reason = f"HTTP {status}"
        return attempts, status, None, reason

    def recognize_with_retry(self, req: LmmRequest) -> LmmResponse:
        t_call = time.perf_counter()
        attempts, status, content, failure = self._call(req)
        t_parse = time.perf_counter()
        resp = LmmResponse(raw_text=content, normalized=None, attempts=attempts, status=status)
        if failure is not None:
            resp.error = f"upstream: {failure}"
        else:
            try:
                resp.normalized = parse_response(content)
            except PlateFormatError:
                if self.retry_on_malformed and attempts < self.policy.max_attempts:
                    attempts, status, content2, failure = self._call(req, attempts)
                    resp.attempts, resp.status = attempts, status
                    if content2 is not None:
                        resp.raw_text = content2
                        try:
                            resp.normalized = parse_response(content2)
                        except PlateFormatError:
                            resp.error = "format"
                    else:
                        resp.error = f"upstream: {failure}"
                else:
                    resp.error = "format"
        t_end = time.perf_counter()
        resp.phases = {"load": 0.0, "call": t_parse - t_call, "parse": t_end - t_parse}
        self.metrics.add(resp.attempts, not resp.ok)
        return resp

    def recognize(self, image) -> LmmResponse:
        """Load/encode ``image`` (path, bytes, ndarray or Image) then run the request."""
        from .imaging import encode_png
        from .validation import check_image

        t0 = time.perf_counter()
        if isinstance(image, (bytes, bytearray)) and bytes(image[:8]) == b"\x89PNG\r\n\x1a\n":
            png = bytes(image)
        else:
            png = encode_png(check_image(image))
        t1 = time.perf_counter()
        resp = self.recognize_with_retry(LmmRequest(png, PROMPT, self.model_id, self.timeout))
        resp.phases["load"] = t1 - t0
        return resp
