"""Device-id to network-address registry (JSON: ``{"0": {"host", "port"}, ...}``)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError

SERVER_ID = 0


@dataclass(frozen=True)
class Address:
    host: str
    port: int


class Registry:
    def __init__(self, entries: dict[int, Address]):
        self.entries = dict(sorted(entries.items()))

    @classmethod
    def load(cls, path: str | Path) -> "Registry":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read registry {path}: {exc}") from exc
        return cls.from_json(raw)

    @classmethod
    def from_json(cls, raw: dict) -> "Registry":
        entries = {}
        try:
            for key, value in raw.items():
                entries[int(key)] = Address(str(value["host"]), int(value["port"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed registry entry: {exc}") from exc
        return cls(entries)

    def to_json(self) -> dict:
        return {str(k): {"host": a.host, "port": a.port} for k, a in self.entries.items()}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @property
    def server(self) -> Address:
        try:
            return self.entries[SERVER_ID]
        except KeyError:
            raise ConfigError("registry has no server entry (id 0)") from None

    def client_ids(self) -> list[int]:
        return [k for k in self.entries if k != SERVER_ID]

    def __contains__(self, device_id: int) -> bool:
        return device_id in self.entries

    def require(self, client_ids) -> None:
        missing = sorted(set(client_ids) - set(self.entries))
        if missing:
            raise ConfigError(f"registry is missing device ids {missing}")
        self.server
