"""Legal/illegal/unreadable parking messages and their delivery to a push-message webhook."""

from __future__ import annotations

import logging
import os
import queue
import random
import threading
import time
from dataclasses import dataclass, field

import httpx

from .registry import ILLEGAL, UNREADABLE, PatrolEvent
from .retry import RetryPolicy, is_retryable_status

log = logging.getLogger(__name__)

INFO, WARNING = "info", "warning"
DELIVERED, FAILED, PENDING = "delivered", "failed", "pending"

LEGAL_TEMPLATE = "Parking check\nPlate: {plate}\nTime: {time}\nPlace: {place}\nStatus: LEGAL"
ILLEGAL_TEMPLATE = "⚠ ILLEGAL PARKING\nPlate: {plate}\nTime: {time}\nPlace: {place}\nStatus: ILLEGAL — action required"
UNREADABLE_TEMPLATE = "Parking check\nPlate: UNREADABLE ({reason})\nTime: {time}\nPlace: {place}\nStatus: MANUAL REVIEW"

DEFAULT_NOTIFY_POLICY = RetryPolicy(max_attempts=5)


def iso_utc(ts) -> str:
    return ts.isoformat()


@dataclass(frozen=True)
class Notification:
    recipient: str
    text: str
    severity: str
    event_seq: int | None = None


def format_message(ev: PatrolEvent, recipient: str = "", time_format=iso_utc) -> Notification:
    fields = {"plate": ev.plate, "time": time_format(ev.captured_at), "place": ev.place}
    if ev.verdict == ILLEGAL:
        return Notification(recipient, ILLEGAL_TEMPLATE.format(**fields), WARNING, ev.seq)
    if ev.verdict == UNREADABLE:
        text = UNREADABLE_TEMPLATE.format(reason=ev.reason or "unknown", **fields)
        return Notification(recipient, text, INFO, ev.seq)
    return Notification(recipient, LEGAL_TEMPLATE.format(**fields), INFO, ev.seq)


@dataclass
class DeliveryRecord:
    notification: Notification
    attempts: int = 0
    status: str = PENDING
    last_error: str | None = None
    _sealed: bool = field(default=False, repr=False, compare=False)

    def __setattr__(self, name, value):
        if getattr(self, "_sealed", False):
            raise AttributeError("delivered records are immutable")
        object.__setattr__(self, name, value)

    def seal(self):
        if self.status == DELIVERED:
            object.__setattr__(self, "_sealed", True)


@dataclass(frozen=True)
class WebhookSink:
    url: str
    token_env: str = "LINE_CHANNEL_ACCESS_TOKEN"
    recipient: str = "system-manager"
    timeout: float = 10.0


def push_body(n: Notification) -> dict:
    return {"to": n.recipient, "messages": [{"type": "text", "text": n.text}]}


def dispatch(n: Notification, sink: WebhookSink, policy: RetryPolicy = DEFAULT_NOTIFY_POLICY,
             sleep=time.sleep, rng: random.Random | None = None, client: httpx.Client | None = None,
             record: DeliveryRecord | None = None) -> DeliveryRecord:
    """POST ``n`` with retries on 429/5xx/transport errors; never raises."""
    record = record or DeliveryRecord(n)
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(sink.token_env) if sink.token_env else None
    if token:
        headers["Authorization"] = f"Bearer {token}"
    http = client or httpx.Client(timeout=sink.timeout)
    try:
        while record.attempts < policy.max_attempts:
            if record.attempts:
                sleep(policy.delay(record.attempts, rng))
            record.attempts += 1
            try:
                resp = http.post(sink.url, json=push_body(n), headers=headers, timeout=sink.timeout)
            except httpx.HTTPError as exc:
                record.last_error = f"transport error: {type(exc).__name__}"
                continue
            if 200 <= resp.status_code < 300:
                record.last_error = None
                record.status = DELIVERED
                record.seal()
                return record
            record.last_error = f"HTTP {resp.status_code}"
            if not is_retryable_status(resp.status_code):
                break
        record.status = FAILED
        log.warning("notification for event %s failed after %d attempts: %s",
                    n.event_seq, record.attempts, record.last_error)
        return record
    finally:
        if client is None:
            http.close()


class Notifier:
    """FIFO delivery queue drained by one consumer thread.

    A single consumer keeps per-recipient order. ``close`` blocks until every
    queued notification is delivered or failed.
    """

    def __init__(self, sink: WebhookSink | None, policy: RetryPolicy = DEFAULT_NOTIFY_POLICY,
                 notify_legal: bool = True, sleep=time.sleep, rng: random.Random | None = None,
                 time_format=iso_utc):
        self.sink = sink
        self.policy = policy
        self.notify_legal = notify_legal
        self.sleep = sleep
        self.rng = rng or random.Random()
        self.time_format = time_format
        self.records: list[DeliveryRecord] = []
        self._queue: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._closed = False
        self._http = httpx.Client(timeout=sink.timeout if sink else 10.0)
        self._worker = threading.Thread(target=self._drain, name="notifier", daemon=True)
        self._worker.start()

    def wants(self, ev: PatrolEvent) -> bool:
        return self.sink is not None and (self.notify_legal or ev.verdict != "legal")

    def notify(self, ev: PatrolEvent) -> DeliveryRecord | None:
        if not self.wants(ev):
            return None
        return self.enqueue(format_message(ev, self.sink.recipient, self.time_format))

    def enqueue(self, n: Notification) -> DeliveryRecord:
        with self._lock:
            if self._closed:
                raise RuntimeError("notifier is closed")
            rec = DeliveryRecord(n)
            self.records.append(rec)
            self._queue.put(rec)
        return rec

    def _drain(self):
        while True:
            rec = self._queue.get()
            try:
                if rec is None:
                    return
                dispatch(rec.notification, self.sink, self.policy, self.sleep, self.rng,
                         self._http, record=rec)
            except Exception as exc:  # noqa: BLE001 - delivery must never kill the consumer
                if rec.status == PENDING:
                    rec.status = FAILED
                    rec.last_error = f"internal error: {exc}"
            finally:
                self._queue.task_done()

    def flush(self):
        self._queue.join()

    def close(self):
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._queue.put(None)
        self._worker.join()
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def tally(self) -> dict:
        out = {DELIVERED: 0, FAILED: 0, PENDING: 0}
        for r in self.records:
            out[r.status] += 1
        return out
