"""Measurement log data models."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import yaml

from src.common.errors import ConfigError, FixtureMissing
from src.crypto_envelope.primitives import digest
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    encode,
    read_text,
    read_uint,
    text,
    u8,
)


class BootImage(NamedTuple):
    """One component the boot chain measures."""

    pcr_index: int
    name: str
    image: bytes


@dataclass(frozen=True)
class MeasurementEvent:
    pcr_index: int
    component_name: str
    component_image: bytes
    digest: bytes

    @classmethod
    def measure(cls, pcr_index: int, name: str, image: bytes) -> MeasurementEvent:
        return cls(pcr_index, name, bytes(image), digest(image))

    def is_consistent(self) -> bool:
        return self.digest == digest(self.component_image)

    def to_bytes(self) -> bytes:
        return encode(WireMessage(MsgType.MEASUREMENT_EVENT, (
            u8(self.pcr_index), text(self.component_name), self.component_image, self.digest,
        )))

    @classmethod
    def from_bytes(cls, raw: bytes) -> MeasurementEvent:
        msg = decode(raw).expect(MsgType.MEASUREMENT_EVENT, 4)
        return cls(read_uint(msg.field(0), 1), read_text(msg.field(1)), msg.field(2), msg.field(3))


@dataclass(frozen=True)
class BootLog:
    """Ordered measurement events, as the verifier receives them."""

    events: tuple[MeasurementEvent, ...] = ()

    def __len__(self) -> int:
        return len(self.events)

    def to_bytes(self) -> bytes:
        return encode(WireMessage(MsgType.BOOT_LOG, tuple(e.to_bytes() for e in self.events)))

    @classmethod
    def from_bytes(cls, raw: bytes) -> BootLog:
        msg = decode(raw).expect(MsgType.BOOT_LOG)
        return cls(tuple(MeasurementEvent.from_bytes(f) for f in msg.fields))


@dataclass
class BootManifest:
    """Images a device boots, in measurement order.

    Loaded from a YAML fixture::

        model: stb-100
        firmware_version: "1.0.0"
        images:
          - {pcr: 0, name: bios, data: "..."}
    """

    model: str
    firmware_version: str
    images: list[BootImage] = field(default_factory=list)

    def replace_image(self, name: str, image: bytes, firmware_version: str) -> BootManifest:
        """Copy with component ``name`` swapped for a new image."""
        if not any(i.name == name for i in self.images):
            raise ConfigError(f"manifest has no component {name!r}")
        images = [i._replace(image=image) if i.name == name else i for i in self.images]
        return BootManifest(self.model, firmware_version, images)

    @classmethod
    def from_dict(cls, data: dict) -> BootManifest:
        try:
            images = [
                BootImage(int(item["pcr"]), str(item["name"]), _image_bytes(item))
                for item in data["images"]
            ]
            return cls(str(data["model"]), str(data["firmware_version"]), images)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid boot manifest: {exc}") from exc

    @classmethod
    def from_yaml(cls, path: str | Path) -> BootManifest:
        path = Path(path)
        if not path.exists():
            raise FixtureMissing(str(path))
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(yaml.safe_load(f) or {})


def _image_bytes(item: dict) -> bytes:
    if "hex" in item:
        return bytes.fromhex(item["hex"])
    if "data" in item:
        return str(item["data"]).encode("utf-8")
    raise ConfigError(f"image {item.get('name')!r} has neither data nor hex")
