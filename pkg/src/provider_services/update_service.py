"""Firmware update service: DDDB in, signed nonce-bound package out."""

from __future__ import annotations

import logging
import random
from pathlib import Path

import yaml

from src.common.errors import BadDddbSignature, ConfigError, FixtureMissing, NoFirmwareForModel
from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.primitives import KeyUsage, encrypt_to, generate_keypair
from src.crypto_envelope.wire import MsgType, WireMessage
from src.measured_boot.reference import ReferenceTable

from .attestation import AttestationVerifier
from .models import Dddb, FirmwareRelease, UpdatePackage

logger = logging.getLogger(__name__)


def load_catalog(path: str | Path) -> dict[str, FirmwareRelease]:
    """Firmware catalogue keyed by hardware model.

    YAML form::

        stb-100:
          version: "1.1.0"
          component: firmware
          data: "..."
    """
    path = Path(path)
    if not path.exists():
        raise FixtureMissing(str(path))
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    catalog = {}
    for model, entry in data.items():
        try:
            image = bytes.fromhex(entry["hex"]) if "hex" in entry else str(entry["data"]).encode("utf-8")
            catalog[model] = FirmwareRelease(model, str(entry["version"]), str(entry["component"]), image)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad catalogue entry for {model}: {exc}") from exc
    logger.info("Loaded firmware catalogue with %d models", len(catalog))
    return catalog


class UpdateService(Endpoint):
    def __init__(
        self,
        name: str,
        rng: random.Random,
        pca: str,
        pca_pub: bytes,
        catalog: dict[str, FirmwareRelease],
    ) -> None:
        super().__init__(name)
        self._rng = rng
        self._signing = generate_keypair(KeyUsage.SIGN, rng)
        self.verifier = AttestationVerifier(self, pca, pca_pub, ReferenceTable(), rng)
        self.catalog = dict(catalog)
        self.packages_built = 0

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    def handle(self, envelope: Envelope) -> list[Envelope]:
        msg = envelope.message
        if msg.msg_type is MsgType.UPDATE_REQUEST:
            msg = msg.expect(MsgType.UPDATE_REQUEST, 3)
            credential = self.verifier.check_credential(msg.field(0))
            cert = self.verifier.check_bind_cert(msg.field(1), credential)
            dddb = Dddb.from_bytes(msg.field(2))
            if dddb.identity_label != credential.identity_label or not dddb.verify(credential.aik_pub):
                raise BadDddbSignature(f"DDDB claimed by {credential.identity_label}")
            package = self.build_update(dddb.nonce, dddb)
            ct = encrypt_to(cert.bind_pub, package.to_bytes(), self._rng)
            return [
                Envelope(self.name, envelope.sender, WireMessage(MsgType.UPDATE_PACKAGE, (ct,))),
                self.reply(envelope, WireMessage(MsgType.ACK)),
            ]
        return super().handle(envelope)

    def build_update(self, device_nonce: bytes, dddb: Dddb) -> UpdatePackage:
        """Firmware for the DDDB's model, bound to ``device_nonce`` and signed."""
        release = self.catalog.get(dddb.model)
        if release is None:
            raise NoFirmwareForModel(dddb.model)
        self.packages_built += 1
        logger.info("%s: %s %s -> %s for %s", self.name, dddb.model, dddb.fw_version, release.version,
                    dddb.identity_label)
        return UpdatePackage(release.component, release.image, device_nonce, release.version).signed_by(self._signing)
