"""Application configuration document (YAML); secrets are referenced by env-var name only."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .lmm import DEFAULT_ENDPOINT, DEFAULT_KEY_ENV, DEFAULT_MODEL

_SECRET_KEYS = {"api_key", "apikey", "token", "secret", "password", "access_token"}


class ConfigError(ValueError):
    pass


@dataclass
class LmmSettings:
    endpoint: str = DEFAULT_ENDPOINT
    model_id: str = DEFAULT_MODEL
    api_key_env: str = DEFAULT_KEY_ENV
    timeout: float = 30.0
    max_attempts: int = 8
    retry_on_malformed: bool = False


@dataclass
class NotifySettings:
    webhook_url: str | None = None
    token_env: str = "LINE_CHANNEL_ACCESS_TOKEN"
    recipient: str = "system-manager"
    notify_legal: bool = True


@dataclass
class BenchSettings:
    repeats: int = 1
    format: str = "markdown"


@dataclass
class AppConfig:
    lmm: LmmSettings = field(default_factory=LmmSettings)
    notify: NotifySettings = field(default_factory=NotifySettings)
    registry_path: Path | None = None
    event_log_path: Path | None = None
    bench: BenchSettings = field(default_factory=BenchSettings)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "AppConfig":
        _reject_secrets(doc)
        base = Path(base_dir)

        def path(value):
            if value in (None, ""):
                return None
            p = Path(value)
            return p if p.is_absolute() else base / p

        try:
            return cls(
                lmm=LmmSettings(**(doc.get("lmm") or {})),
                notify=NotifySettings(**(doc.get("notify") or {})),
                registry_path=path(doc.get("registry_path")),
                event_log_path=path(doc.get("event_log_path")),
                bench=BenchSettings(**(doc.get("bench") or {})),
            )
        except TypeError as exc:
            raise ConfigError(f"unknown configuration key: {exc}") from exc

    @classmethod
    def load(cls, path) -> "AppConfig":
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("registry_path", "event_log_path"):
            doc[key] = None if doc[key] is None else str(doc[key])
        return doc

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def make_lmm_client(self, **overrides):
        from .lmm import LmmClient
        from .retry import RetryPolicy

        s = self.lmm
        kwargs = dict(endpoint=s.endpoint, model_id=s.model_id, api_key_env=s.api_key_env, timeout=s.timeout,
                      policy=RetryPolicy(max_attempts=s.max_attempts), retry_on_malformed=s.retry_on_malformed)
        kwargs.update(overrides)
        return LmmClient(**kwargs)


def _reject_secrets(doc, where="config"):
    if isinstance(doc, dict):
        for key, value in doc.items():
            if str(key).lower() in _SECRET_KEYS and value:
                raise ConfigError(f"{where}.{key}: put credentials in an environment variable "
                                  f"and reference it by name (e.g. api_key_env)")
            _reject_secrets(value, f"{where}.{key}")
