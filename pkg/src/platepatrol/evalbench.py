"""Accuracy/latency bench over a filename-annotated image folder, with table output."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .plates import PlateFormatError, normalize_plate
from .recognizer import PipelineConfig, RecognitionResult, build_recognizer

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
COLUMNS = ("original", "original_roi", "gray_roi", "binary_roi")
HEADERS = (
    "Models",
    "Average recognition accuracy (%) of original image",
    "Average recognition accuracy (%) of original image (ROI image)",
    "Average recognition accuracy (%) of gray image (ROI image)",
    "Average recognition accuracy (%) of binary image (ROI image)",
    "Average recognition time (sec.)",
    "Mean character accuracy (%)",
    "Mean attempts",
)
NOT_APPLICABLE = "X"
MISSING = "-"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetItem:
    image_path: Path
    truth: str


def load_dataset(directory) -> list[DatasetItem]:
    """Images in ``directory`` sorted by name; each file stem is its ground-truth plate."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"dataset directory not found: {directory}")
    items, bad = [], []
    for path in sorted(directory.iterdir(), key=lambda p: p.name):
        if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            items.append(DatasetItem(path, normalize_plate(path.stem.replace("_", ""))))
        except PlateFormatError:
            bad.append(path.name)
    if bad:
        raise DatasetError(f"file names are not plate numbers: {', '.join(bad)}")
    if not items:
        raise DatasetError(f"no images in {directory}")
    return items


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class EvalRecord:
    item: DatasetItem
    prediction: str | None
    exact_match: bool
    char_correct: int
    char_total: int
    elapsed: float
    attempts: int = 1
    failure: str | None = None

    def log_line(self) -> str:
        pct = round(100 * self.char_correct / self.char_total) if self.char_total else 0
        return (f"Process: {self.item.image_path.name}, Correct: {self.item.truth}, "
                f"Prediction: {self.prediction or 'FAILED(' + str(self.failure) + ')'}, "
                f"If Correct: {self.exact_match}, "
                f"Accurate recognition: {self.char_correct}/{self.char_total}, Accuracy: {pct}%")


def char_matches(prediction: str, truth: str) -> int:
    if len(prediction) == len(truth):
        return sum(p == t for p, t in zip(prediction, truth))
    return max(len(truth) - levenshtein(prediction, truth), 0)


def score(item: DatasetItem, result: RecognitionResult, elapsed: float | None = None) -> EvalRecord:
    total = len(item.truth)
    pred = result.plate
    correct = 0 if pred is None else char_matches(pred, item.truth)
    return EvalRecord(item, pred, pred == item.truth, correct, total,
                      result.timing if elapsed is None else elapsed, result.attempts, result.failure)


@dataclass
class BenchSummary:
    """One (model chain, image column) cell group.

    ``exact_count`` out of ``n_runs`` is kept as integers so the rate is an
    exact ratio; ``char_accuracy`` is the mean per-image character ratio.
    """

    model: str
    column: str
    n_images: int
    exact_count: int
    mean_time: float | None
    repeats: int = 1
    char_accuracy: Fraction | None = None
    mean_attempts: float | None = None

    def __post_init__(self):
        if not 0 <= self.exact_count <= self.n_runs:
            raise ValueError("exact_count must lie in [0, n_images*repeats]")
        if self.column not in COLUMNS:
            raise ValueError(f"unknown column {self.column!r}")

    @property
    def n_runs(self) -> int:
        return self.n_images * self.repeats

    @property
    def exact_match_rate(self) -> Fraction:
        return Fraction(100 * self.exact_count, self.n_runs) if self.n_runs else Fraction(0)

    @property
    def mean_char_accuracy(self) -> Fraction | None:
        return None if self.char_accuracy is None else 100 * self.char_accuracy

    @classmethod
    def from_records(cls, cfg: PipelineConfig, records: list[EvalRecord], n_images: int, repeats: int,
                     timed: bool = True) -> "BenchSummary":
        n = len(records)
        chars = sum((Fraction(r.char_correct, r.char_total) for r in records), Fraction(0))
        return cls(
            model=cfg.model_label,
            column=cfg.column,
            n_images=n_images,
            repeats=repeats,
            exact_count=sum(r.exact_match for r in records),
            mean_time=(sum(r.elapsed for r in records) / n) if (timed and n) else None,
            char_accuracy=chars / n if n else None,
            mean_attempts=(sum(r.attempts for r in records) / n) if n else None,
        )


@dataclass
class BenchReport:
    summaries: list[BenchSummary] = field(default_factory=list)
    records: dict = field(default_factory=dict)
    errors: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def run_bench(items, configs, repeats: int = 1, factory=build_recognizer, parallel: bool = False,
              **deps) -> BenchReport:
    """Evaluate every config over every item, serially by default.

    Per-image elapsed time is taken around each ``recognize`` call, which
    loads the image from disk, so load, inference and result return are all
    counted. ``parallel=True`` runs items on a thread pool and drops timing.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    report = BenchReport()
    for cfg in configs:
        try:
            recognizer = factory(cfg, **deps)
        except Exception as exc:  # noqa: BLE001 - a broken row must not stop the others
            log.error("cannot build backend %s: %s", cfg.summary(), exc)
            report.errors.append((cfg.summary(), str(exc)))
            continue

        def one(item):
            t0 = time.perf_counter()
            result = recognizer.recognize(item.image_path)
            return score(item, result, time.perf_counter() - t0)

        records = []
        for _ in range(repeats):
            if parallel:
                with ThreadPoolExecutor() as pool:
                    records.extend(pool.map(one, items))
            else:
                records.extend(one(item) for item in items)
        for r in records:
            log.debug(r.log_line())
        report.records[cfg.summary()] = records
        report.summaries.append(BenchSummary.from_records(cfg, records, len(items), repeats, not parallel))
    return report


# -- table emission -----------------------------------------------------------

def format_percent(value) -> str:
    if value is None:
        return MISSING
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{float(value):.2f}"


def format_seconds(value) -> str:
    return MISSING if value is None else f"{value:.4f}"


def table_rows(summaries) -> list[list[str]]:
    """Group summaries by model chain, in first-seen order, into comparison-table rows.

    The time cell is the run-weighted mean over the row's timed summaries.
    """
    groups: dict[str, list[BenchSummary]] = {}
    for s in summaries:
        groups.setdefault(s.model, []).append(s)
    rows = []
    for model, group in groups.items():
        by_col = {s.column: s for s in group}
        cells = [model]
        for col in COLUMNS:
            s = by_col.get(col)
            cells.append(NOT_APPLICABLE if s is None else format_percent(s.exact_match_rate))
        timed = [s for s in group if s.mean_time is not None]
        runs = sum(s.n_runs for s in timed)
        cells.append(format_seconds(sum(s.mean_time * s.n_runs for s in timed) / runs) if runs else MISSING)
        chars = [s for s in group if s.char_accuracy is not None]
        runs = sum(s.n_runs for s in chars)
        cells.append(format_percent(sum(s.mean_char_accuracy * s.n_runs for s in chars) / runs) if runs else MISSING)
        att = [s for s in group if s.mean_attempts is not None]
        runs = sum(s.n_runs for s in att)
        cells.append(f"{sum(s.mean_attempts * s.n_runs for s in att) / runs:.2f}" if runs else MISSING)
        rows.append(cells)
    return rows


def emit_table(summaries, fmt: str = "markdown") -> str:
    rows = table_rows(summaries)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADERS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(HEADERS) + " |", "|" + "---|" * len(HEADERS)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_table(text: str, fmt: str = "markdown") -> list[list[str]]:
    """Body rows of an emitted table, as cell strings (header dropped)."""
    if fmt == "csv":
        return list(csv.reader(io.StringIO(text)))[1:]
    lines = [ln for ln in text.splitlines() if ln.startswith("|")][2:]
    return [[c.strip() for c in ln.strip().strip("|").split("|")] for ln in lines]
