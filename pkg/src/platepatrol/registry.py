"""Plate whitelist with validity windows, and the append-only patrol event log."""

from __future__ import annotations

import csv
import json
import os
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .plates import PlateFormatError, normalize_plate

LEGAL, ILLEGAL, UNREADABLE = "legal", "illegal", "unreadable"
VERDICTS = (LEGAL, ILLEGAL, UNREADABLE)


class RegistryError(ValueError):
    pass


def parse_timestamp(text: str | None) -> datetime | None:
    """ISO-8601 to an aware UTC datetime; naive values are taken as UTC."""
    if text is None or text == "":
        return None
    if isinstance(text, datetime):
        ts = text
    else:
        ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class RegistryEntry:
    plate: str
    owner_label: str = ""
    valid_from: datetime | None = None
    valid_to: datetime | None = None

    def __post_init__(self):
        if self.valid_from and self.valid_to and self.valid_from > self.valid_to:
            raise RegistryError(f"{self.plate}: valid_from is after valid_to")

    def covers(self, at: datetime) -> bool:
        if self.valid_from is not None and at < self.valid_from:
            return False
        if self.valid_to is not None and at > self.valid_to:
            return False
        return True


class Registry:
    """Read-mostly plate set; ``reload`` swaps the whole mapping in one assignment."""

    def __init__(self, entries=(), path=None):
        self.path = Path(path) if path else None
        self._entries = self._index(entries)

    @staticmethod
    def _index(entries) -> dict:
        index = {}
        for e in entries:
            if e.plate in index:
                raise RegistryError(f"duplicate plate {e.plate}")
            index[e.plate] = e
        return index

    def __len__(self):
        return len(self._entries)

    def __contains__(self, plate):
        return plate in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    @property
    def plates(self) -> list[str]:
        return sorted(self._entries)

    def get(self, plate):
        return self._entries.get(plate)

    def reload(self, path=None):
        fresh = load_registry(path or self.path)
        self._entries = fresh._entries
        return self


def load_registry(path) -> Registry:
    """Read ``plate,owner,valid_from,valid_to`` rows.

    Blank lines and ``#`` comments are skipped, as is a leading header row
    whose first field is ``plate``. Trailing fields may be omitted.
    """
    path = Path(path)
    entries, seen = [], {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "plate":
                continue
            if len(row) > 4:
                raise RegistryError(f"{path}:{lineno}: expected at most 4 fields, got {len(row)}")
            row = [c.strip() for c in row] + [""] * (4 - len(row))
            try:
                plate = normalize_plate(row[0])
                entry = RegistryEntry(plate, row[1], parse_timestamp(row[2]), parse_timestamp(row[3]))
            except (PlateFormatError, ValueError) as exc:
                raise RegistryError(f"{path}:{lineno}: {exc}") from exc
            if plate in seen:
                raise RegistryError(f"{path}:{lineno}: duplicate plate {plate} (first on line {seen[plate]})")
            seen[plate] = lineno
            entries.append(entry)
    return Registry(entries, path)


def write_registry(path, entries) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["plate", "owner", "valid_from", "valid_to"])
        for e in entries:
            w.writerow([e.plate, e.owner_label,
                        e.valid_from.isoformat() if e.valid_from else "",
                        e.valid_to.isoformat() if e.valid_to else ""])
    return path


def check_legality(reg: Registry, plate: str, at: datetime) -> str:
    entry = reg.get(plate)
    if entry is None:
        return ILLEGAL
    return LEGAL if entry.covers(parse_timestamp(at)) else ILLEGAL


# -- events -----------------------------------------------------------------

@dataclass
class PatrolEvent:
    plate: str | None
    captured_at: datetime
    place: str
    verdict: str
    backend: str = ""
    notified: bool = False
    reason: str | None = None
    seq: int | None = field(default=None, compare=False)

    def __post_init__(self):
        self.captured_at = parse_timestamp(self.captured_at)
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if (self.verdict == UNREADABLE) != (self.plate is None):
            raise ValueError("verdict is unreadable exactly when the plate is missing")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["captured_at"] = self.captured_at.isoformat()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PatrolEvent":
        return cls(**doc)


class EventStore:
    """JSON-lines log; one event per line, fsynced before ``append`` returns.

    A torn final line (crash mid-write) is cut off when the store is opened.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._repair()
        self._seq = max((ev.seq or 0 for ev in self.read()), default=0)

    def _repair(self):
        if not self.path.exists():
            self.path.touch()
            return
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            keep = data.rfind(b"\n") + 1
            with self.path.open("r+b") as fh:
                fh.truncate(keep)
                fh.flush()
                os.fsync(fh.fileno())

    @property
    def last_seq(self) -> int:
        return self._seq

    def append(self, ev: PatrolEvent) -> int:
        with self._lock:
            seq = self._seq + 1
            doc = ev.to_dict()
            doc["seq"] = seq
            line = json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n"
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
            self._seq = seq
            ev.seq = seq
            return seq

    def read(self, since: int = 0) -> list[PatrolEvent]:
        """Events with ``seq > since``; stops at the first incomplete line."""
        events = []
        with self.path.open("rb") as fh:
            for raw in fh:
                if not raw.endswith(b"\n"):
                    break
                doc = json.loads(raw)
                if doc.get("seq", 0) > since:
                    events.append(PatrolEvent.from_dict(doc))
        return events


def record_event(store: EventStore, ev: PatrolEvent) -> int:
    return store.append(ev)
