"""Verifier-side table of known-good PCR configurations."""

from __future__ import annotations

import logging
from pathlib import Path

import yaml

from src.common.errors import ConfigError, FixtureMissing

from .models import BootManifest

logger = logging.getLogger(__name__)


class ReferenceTable:
    """Named PCR snapshots a verifier accepts.

    YAML form::

        configurations:
          - name: stb-100/1.0.0
            manifest: boot/stb100_v1.yaml     # values computed by replay
          - name: legacy
            pcrs: {0: "ab12..."}              # values given directly
    """

    def __init__(self, configurations: dict[str, dict[int, bytes]] | None = None) -> None:
        self.configurations: dict[str, dict[int, bytes]] = dict(configurations or {})

    def add(self, name: str, pcrs: dict[int, bytes]) -> None:
        self.configurations[name] = dict(pcrs)

    def add_manifest(self, name: str, manifest: BootManifest) -> None:
        from .boot import expected_pcrs

        values = expected_pcrs(manifest.images)
        touched = sorted({i.pcr_index for i in manifest.images})
        self.add(name, {i: values[i] for i in touched})

    def match(self, quoted: dict[int, bytes]) -> str | None:
        """Name of the first configuration whose every register is quoted and equal."""
        for name, snapshot in self.configurations.items():
            if snapshot and set(snapshot) <= set(quoted) and all(quoted[i] == v for i, v in snapshot.items()):
                return name
        return None

    def __contains__(self, name: str) -> bool:
        return name in self.configurations

    def __len__(self) -> int:
        return len(self.configurations)

    @classmethod
    def from_yaml(cls, path: str | Path) -> ReferenceTable:
        path = Path(path)
        if not path.exists():
            raise FixtureMissing(str(path))
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}

        table = cls()
        for entry in data.get("configurations", []):
            name = entry.get("name")
            if not name:
                raise ConfigError(f"reference configuration without name in {path}")
            if "manifest" in entry:
                table.add_manifest(name, BootManifest.from_yaml(path.parent / entry["manifest"]))
            elif "pcrs" in entry:
                try:
                    table.add(name, {int(k): bytes.fromhex(v) for k, v in entry["pcrs"].items()})
                except (AttributeError, ValueError) as exc:
                    raise ConfigError(f"bad PCR values for {name}: {exc}") from exc
            else:
                raise ConfigError(f"configuration {name} needs 'manifest' or 'pcrs'")
        logger.info("Loaded %d reference configurations from %s", len(table), path.name)
        return table
