"""Deterministic parking-lot patrol: seeded lot, camera-angle sweep, recognize/check/notify loop."""

from __future__ import annotations

import hashlib
import logging
import random
import string
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .imaging import Image
from .plate_synth import DegradeSpec, GlyphAtlas, default_atlas, degrade, render_plate
from .registry import ILLEGAL, LEGAL, UNREADABLE, EventStore, PatrolEvent, Registry, check_legality

log = logging.getLogger(__name__)

EMPTY = "empty"
DEFAULT_START = datetime(2025, 1, 1, 8, 0, tzinfo=timezone.utc)


class NoVehicle(LookupError):
    pass


@dataclass(frozen=True)
class Slot:
    id: str
    position: tuple[int, int]
    occupant: str | None = None


@dataclass(frozen=True)
class Lot:
    slots: tuple
    seed: int

    def __post_init__(self):
        ids = [s.id for s in self.slots]
        if len(set(ids)) != len(ids):
            raise ValueError("slot ids must be unique")

    def slot(self, slot_id: str) -> Slot:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise KeyError(slot_id)

    @property
    def occupied(self) -> list[Slot]:
        return [s for s in self.slots if s.occupant is not None]


def slot_ids(n_slots: int, row_length: int = 6) -> list[str]:
    return [f"{string.ascii_uppercase[i // row_length]}{i % row_length + 1}" for i in range(n_slots)]


def random_plate(rng: random.Random) -> str:
    letters = "".join(rng.choice(string.ascii_uppercase) for _ in range(3))
    digits = "".join(rng.choice(string.digits) for _ in range(rng.choice((3, 4))))
    return letters + digits


def generate_lot(n_slots: int, n_occupied: int, registry: Registry, n_illegal: int, seed: int,
                 row_length: int = 6) -> Lot:
    """Seeded lot with exactly ``n_illegal`` unregistered occupants."""
    if not 0 <= n_illegal <= n_occupied <= n_slots:
        raise ValueError("need 0 <= n_illegal <= n_occupied <= n_slots")
    if n_slots > 26 * row_length:
        raise ValueError("too many slots for lettered rows")
    n_registered = n_occupied - n_illegal
    if n_registered > len(registry):
        raise ValueError(f"registry holds {len(registry)} plates, {n_registered} registered occupants requested")

    rng = random.Random(seed)
    occupied = sorted(rng.sample(range(n_slots), n_occupied))
    plates = rng.sample(registry.plates, n_registered)
    used = set(plates)
    while len(plates) < n_occupied:
        p = random_plate(rng)
        if p not in registry and p not in used:
            used.add(p)
            plates.append(p)
    rng.shuffle(plates)

    ids = slot_ids(n_slots, row_length)
    owner = dict(zip(occupied, plates))
    slots = tuple(Slot(ids[i], (i // row_length, i % row_length), owner.get(i)) for i in range(n_slots))
    return Lot(slots, seed)


@dataclass(frozen=True)
class SweepPlan:
    waypoints: tuple
    angles_per_stop: tuple = (0.0, -10.0, 10.0)
    overrides: dict = field(default_factory=dict)

    def check_covers(self, lot: Lot):
        missing = [s.id for s in lot.occupied if s.id not in self.waypoints]
        if missing:
            raise ValueError(f"plan does not visit occupied slots: {missing}")


def default_plan(lot: Lot, angles=(0.0, -10.0, 10.0), overrides=None) -> SweepPlan:
    return SweepPlan(tuple(s.id for s in lot.slots), tuple(angles), dict(overrides or {}))


@dataclass(frozen=True)
class CaptureEvent:
    slot_id: str
    angle: float
    image: Image
    at: datetime | None = None


def capture_seed(lot_seed: int, slot_id: str, angle: float) -> int:
    digest = hashlib.sha256(f"{lot_seed}:{slot_id}:{float(angle)!r}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def capture(lot: Lot, slot_id: str, angle: float, atlas: GlyphAtlas | None = None, at=None,
            attenuation: float = 0.2, noise_sigma: float = 2.0, margin: int = 20,
            override: DegradeSpec | None = None) -> CaptureEvent:
    """Render the occupant's plate as seen from ``angle``.

    The plate rotates by ``angle * attenuation`` degrees and picks up mild
    sensor noise, seeded from (lot seed, slot, angle). ``override`` replaces
    the derived degradation entirely.
    """
    slot = lot.slot(slot_id)
    if slot.occupant is None:
        raise NoVehicle(f"no vehicle in slot {slot_id}")
    img, _ = render_plate(slot.occupant, atlas or default_atlas(), margin)
    seed = capture_seed(lot.seed, slot_id, angle)
    if override is not None:
        spec = DegradeSpec(override.noise_sigma, override.rotation_deg, override.blur_radius, seed)
    else:
        rotation = max(-10.0, min(10.0, angle * attenuation))
        spec = DegradeSpec(noise_sigma, rotation, 0, seed)
    return CaptureEvent(slot_id, float(angle), degrade(img, spec), at)


@dataclass
class SlotOutcome:
    slot_id: str
    verdict: str
    plate: str | None = None
    angle: float | None = None
    seq: int | None = None
    detail: str | None = None


@dataclass
class PatrolReport:
    counts: dict = field(default_factory=lambda: {LEGAL: 0, ILLEGAL: 0, UNREADABLE: 0, EMPTY: 0})
    outcomes: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    delivery: dict | None = None

    def to_dict(self) -> dict:
        return {
            "counts": dict(self.counts),
            "outcomes": [vars(o).copy() for o in self.outcomes],
            "errors": list(self.errors),
            "delivery": self.delivery,
        }


def run_patrol(lot: Lot, plan: SweepPlan, recognizer, registry: Registry, notifier=None,
               store: EventStore | None = None, atlas: GlyphAtlas | None = None,
               start: datetime = DEFAULT_START, step: timedelta = timedelta(seconds=30)) -> PatrolReport:
    """Visit each waypoint once, trying camera angles in order until a plate reads.

    Failures of any collaborator are logged against the slot and the route
    continues.
    """
    plan.check_covers(lot)
    atlas = atlas or default_atlas()
    backend = recognizer.config_.summary() if hasattr(recognizer, "config_") else type(recognizer).__name__
    report = PatrolReport()

    for i, slot_id in enumerate(plan.waypoints):
        at = start + i * step
        slot = lot.slot(slot_id)
        if slot.occupant is None:
            report.counts[EMPTY] += 1
            report.outcomes.append(SlotOutcome(slot_id, EMPTY))
            continue

        plate, angle, reason = None, None, "no angles"
        for angle in plan.angles_per_stop:
            try:
                shot = capture(lot, slot_id, angle, atlas, at, override=plan.overrides.get(slot_id))
                result = recognizer.recognize(shot.image)
            except Exception as exc:  # noqa: BLE001 - one bad capture must not end the route
                reason = f"error: {exc}"
                report.errors.append(f"{slot_id}@{angle}: {exc}")
                continue
            if result.ok:
                plate = result.plate
                break
            reason = result.failure

        verdict = UNREADABLE if plate is None else check_legality(registry, plate, at)
        ev = PatrolEvent(plate, at, slot_id, verdict, backend,
                         reason=None if plate else reason)
        ev.notified = bool(notifier is not None and notifier.wants(ev))
        seq = None
        if store is not None:
            try:
                seq = store.append(ev)
            except OSError as exc:
                report.errors.append(f"{slot_id}: event store: {exc}")
        if ev.notified:
            try:
                notifier.notify(ev)
            except Exception as exc:  # noqa: BLE001
                report.errors.append(f"{slot_id}: notifier: {exc}")
        report.counts[verdict] += 1
        report.outcomes.append(SlotOutcome(slot_id, verdict, plate, angle if plate else None, seq,
                                           None if plate else reason))
    return report


# -- scenario documents ---------------------------------------------------------

@dataclass
class Scenario:
    n_slots: int
    n_occupied: int
    n_illegal: int
    seed: int
    registry_path: Path
    event_log_path: Path | None = None
    angles: tuple = (0.0, -10.0, 10.0)
    overrides: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)
    notify: dict = field(default_factory=dict)
    lmm: dict = field(default_factory=dict)
    start: datetime = DEFAULT_START
    step_seconds: float = 30.0

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "Scenario":
        base = Path(base_dir)
        lot = doc.get("lot", {})
        plan = doc.get("plan", {})
        paths = doc.get("paths", {})
        if "registry" not in paths:
            raise ValueError("scenario needs paths.registry")

        def resolve(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        overrides = {sid: DegradeSpec(**{k: v for k, v in spec.items() if k != "seed"})
                     for sid, spec in (plan.get("overrides") or {}).items()}
        from .registry import parse_timestamp

        return cls(
            n_slots=int(lot.get("n_slots", 12)),
            n_occupied=int(lot.get("n_occupied", 10)),
            n_illegal=int(lot.get("n_illegal", 3)),
            seed=int(lot.get("seed", 42)),
            registry_path=resolve(paths["registry"]),
            event_log_path=resolve(paths.get("event_log")),
            angles=tuple(float(a) for a in plan.get("angles", (0.0, -10.0, 10.0))),
            overrides=overrides,
            pipeline=dict(doc.get("pipeline") or {}),
            notify=dict(doc.get("notify") or {}),
            lmm=dict(doc.get("lmm") or {}),
            start=parse_timestamp(doc.get("start")) or DEFAULT_START,
            step_seconds=float(doc.get("step_seconds", 30.0)),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        import yaml

        path = Path(path)
        return cls.from_dict(yaml.safe_load(path.read_text()) or {}, path.parent)


def run_scenario(sc: Scenario, lmm_client=None, notify_sleep=None, store: EventStore | None = None) -> PatrolReport:
    """Build collaborators from a scenario and run one patrol pass.

    ``store`` overrides the scenario's event log (the service shares one store
    across requests).
    """
    from .lmm import LmmClient
    from .notify import Notifier, WebhookSink
    from .recognizer import PipelineConfig, build_recognizer
    from .registry import load_registry

    registry = load_registry(sc.registry_path)
    lot = generate_lot(sc.n_slots, sc.n_occupied, registry, sc.n_illegal, sc.seed)
    plan = default_plan(lot, sc.angles, sc.overrides)
    cfg = PipelineConfig(**sc.pipeline) if sc.pipeline else PipelineConfig()
    if cfg.backend == "lmm" and lmm_client is None:
        lmm_client = LmmClient(**{k: v for k, v in sc.lmm.items()
                                  if k in ("endpoint", "model_id", "api_key_env", "timeout")})
    recognizer = build_recognizer(cfg, lmm_client=lmm_client)
    if store is None and sc.event_log_path:
        store = EventStore(sc.event_log_path)

    sink = None
    if sc.notify.get("webhook_url"):
        sink = WebhookSink(sc.notify["webhook_url"],
                           sc.notify.get("token_env", "LINE_CHANNEL_ACCESS_TOKEN"),
                           sc.notify.get("recipient", "system-manager"))
    kwargs = {"notify_legal": bool(sc.notify.get("notify_legal", True))}
    if notify_sleep is not None:
        kwargs["sleep"] = notify_sleep
    with Notifier(sink, **kwargs) as notifier:
        report = run_patrol(lot, plan, recognizer, registry, notifier, store,
                            start=sc.start, step=timedelta(seconds=sc.step_seconds))
    report.delivery = notifier.tally()
    return report
