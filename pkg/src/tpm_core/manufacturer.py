"""TPM manufacturer: endorsement keys and credentials issued at production time."""

from __future__ import annotations

import logging
import random

from src.common.config import settings
from src.crypto_envelope.primitives import KeyUsage, digest, generate_keypair

from .models import EkCredential, PlatformCredential, TpmState
from .tpm import Tpm

logger = logging.getLogger(__name__)


class Manufacturer:
    """Holds a root signing key and stamps out TPMs with EK credentials.

    Args:
        manufacturer_id: Name embedded in every credential.
        rng: Seeded source for all key material.
    """

    def __init__(self, manufacturer_id: str, rng: random.Random) -> None:
        self.manufacturer_id = manufacturer_id
        self._rng = rng
        self._root = generate_keypair(KeyUsage.SIGN, rng)
        self.produced = 0

    @property
    def root_public(self) -> bytes:
        return self._root.public

    def manufacture_tpm(self, model: str, rng: random.Random | None = None) -> Tpm:
        """Create a TPM with a fresh EK, EK-linked decrypt key and credentials."""
        device_rng = rng or random.Random(self._rng.getrandbits(64))
        ek = generate_keypair(KeyUsage.SIGN, device_rng)
        ek_decrypt = generate_keypair(KeyUsage.DECRYPT, device_rng)
        storage = generate_keypair(KeyUsage.DECRYPT, device_rng)

        ekc = EkCredential(ek.public, ek_decrypt.public, self.manufacturer_id, model)
        ekc = ekc.signed_by(self._root)
        platform = PlatformCredential(self.manufacturer_id, model, digest(ek.public))
        platform = platform.signed_by(self._root)

        state = TpmState(
            ek=ek,
            ek_decrypt=ek_decrypt,
            ek_credential=ekc,
            platform_credential=platform,
            storage_key=storage,
            pcrs=[bytes(32)] * settings.tpm.pcr_count,
        )
        self.produced += 1
        logger.info("%s manufactured TPM #%d (model %s)", self.manufacturer_id, self.produced, model)
        return Tpm(state, device_rng)
