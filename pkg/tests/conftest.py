import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from platepatrol.plate_synth import default_atlas  # noqa: E402
from platepatrol.registry import Registry, RegistryEntry, write_registry  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"
ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"

# registry for the seed-42 patrol scenario
SCENARIO_PLATES = ["HPJ149", "ABC1234", "KLM5521", "QRS808", "TUV4410",
                   "WXY377", "BCD9012", "EFG456", "HJK7788", "MNP310"]


def random_plates(n, seed):
    rng = random.Random(seed)
    return ["".join(rng.choice(ALPHABET) for _ in range(rng.choice((6, 7)))) for _ in range(n)]


@pytest.fixture(scope="session")
def atlas():
    return default_atlas()


@pytest.fixture
def scenario_registry(tmp_path):
    path = write_registry(tmp_path / "registry.csv", [RegistryEntry(p, f"owner {i}") for i, p in enumerate(SCENARIO_PLATES)])
    return path


@pytest.fixture
def registry():
    return Registry([RegistryEntry(p) for p in SCENARIO_PLATES])


@pytest.fixture
def no_sleep():
    calls = []

    def sleep(seconds):
        calls.append(seconds)

    sleep.calls = calls
    return sleep


def seed42_scenario(tmp_path, registry_path, webhook_url=None, **extra):
    """Scenario document: 12 slots, 10 occupied, 3 unregistered, lot seed 42."""
    doc = {
        "lot": {"n_slots": 12, "n_occupied": 10, "n_illegal": 3, "seed": 42},
        "paths": {"registry": str(registry_path), "event_log": str(tmp_path / "events.jsonl")},
        "pipeline": {"backend": "dual_pipeline", "detector": "heuristic", "ocr": "baseline",
                     "variant": "binary_roi"},
        "notify": {"webhook_url": webhook_url, "recipient": "system-manager"} if webhook_url else {},
    }
    doc.update(extra)
    return doc
