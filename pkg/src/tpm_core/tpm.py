"""Software trusted platform module.

Ownership, AIK lifecycle, PCR bank, quoting, sealing, binding and the replay
nonce cache. One ``Tpm`` is one logical device; callers serialize access.
"""

from __future__ import annotations

import hmac
import logging
import random

from src.common.config import settings
from src.common.errors import (
    AlreadyOwned,
    AuthLengthInvalid,
    AuthMismatch,
    DecryptFailure,
    DuplicateLabel,
    ForeignBlob,
    InactiveAik,
    IndexOutOfRange,
    MalformedMessage,
    StateMismatch,
    UnknownLabel,
)
from src.crypto_envelope.primitives import (
    Digest,
    KeyPair,
    KeyUsage,
    decrypt,
    digest,
    encrypt_to,
    generate_keypair,
    sign,
)
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    encode,
    pack_list,
    read_text,
    signing_input,
    text,
    u8,
    unpack_list,
)

from .models import (
    AikCredential,
    EkCredential,
    IdentityBinding,
    PlatformCredential,
    Quote,
    SealedBlob,
    TpmState,
)

logger = logging.getLogger(__name__)


def challenge_response_input(nonce: bytes) -> bytes:
    """Bytes an AIK signs to answer a PCA enrollment challenge."""
    return signing_input(MsgType.ENROLL_RESPONSE, [nonce])


class Tpm:
    """Executable TPM over a ``TpmState``.

    Args:
        state: Keys and registers fixed at manufacture.
        rng: Seeded source for key generation and sealing.
    """

    def __init__(self, state: TpmState, rng: random.Random) -> None:
        self.state = state
        self._rng = rng

    # --- Identity ---

    @property
    def tpm_id(self) -> bytes:
        """Stable identifier of this TPM's sealing key."""
        return digest(self.state.storage_key.public)

    @property
    def ek_credential(self) -> EkCredential:
        return self.state.ek_credential

    @property
    def platform_credential(self) -> PlatformCredential:
        return self.state.platform_credential

    @property
    def is_owned(self) -> bool:
        return self.state.owner_auth is not None

    # --- Ownership ---

    def take_ownership(self, auth: bytes) -> None:
        """Bind the TPM to an owner via a 160-bit authorization value."""
        if self.is_owned:
            raise AlreadyOwned("TPM already has an owner")
        if len(auth) != settings.tpm.owner_auth_bytes:
            raise AuthLengthInvalid(
                f"owner auth must be {settings.tpm.owner_auth_bytes} bytes, got {len(auth)}"
            )
        self.state.owner_auth = bytes(auth)
        logger.info("TPM %s owned", self.tpm_id.hex()[:12])

    def _check_auth(self, auth: bytes) -> None:
        owner = self.state.owner_auth
        if owner is None or not hmac.compare_digest(owner, bytes(auth)):
            raise AuthMismatch("owner authorization rejected")

    # --- AIK lifecycle ---

    def make_identity(self, auth: bytes, label: str) -> tuple[bytes, IdentityBinding]:
        """Create an AIK under ``label``; only the public half leaves the TPM."""
        self._check_auth(auth)
        if label in self.state.aiks:
            raise DuplicateLabel(label)
        aik = generate_keypair(KeyUsage.SIGN, self._rng)
        self.state.aiks[label] = aik
        binding = IdentityBinding(label, aik.public).signed_by(aik)
        return aik.public, binding

    def answer_challenge(self, auth: bytes, label: str, challenge_ct: bytes) -> bytes:
        """Open a PCA challenge with the EK-linked key and sign its nonce with the AIK."""
        self._check_auth(auth)
        aik = self.state.aiks.get(label)
        if aik is None:
            raise UnknownLabel(label)
        body = decode(decrypt(self.state.ek_decrypt, challenge_ct)).expect(MsgType.CHALLENGE_BODY, 2)
        if read_text(body.field(0)) != label:
            raise UnknownLabel("challenge names a different AIK")
        return sign(aik, challenge_response_input(body.field(1)))

    def activate_identity(self, auth: bytes, label: str, activation_blob: bytes) -> AikCredential:
        """Release the PCA credential; only the enrolling TPM can open the blob."""
        self._check_auth(auth)
        plain = decrypt(self.state.ek_decrypt, activation_blob)
        body = decode(plain).expect(MsgType.ACTIVATION_BODY, 3)
        named = read_text(body.field(0))
        aik = self.state.aiks.get(label)
        if aik is None or named != label:
            raise UnknownLabel(f"activation blob names {named!r}, asked for {label!r}")
        if body.field(1) != digest(aik.public):
            raise UnknownLabel("activation blob is for a different AIK")
        credential = AikCredential.from_bytes(body.field(2))
        self.state.activated.add(label)
        logger.info("AIK %s activated as %s", label, credential.identity_label)
        return credential

    def _active_aik(self, label: str) -> KeyPair:
        if label not in self.state.activated:
            raise InactiveAik(label)
        return self.state.aiks[label]

    def aik_sign(self, label: str, data: bytes) -> bytes:
        """Sign with an activated AIK."""
        return sign(self._active_aik(label), data)

    # --- PCRs ---

    def pcr_extend(self, index: int, measurement: Digest | bytes) -> Digest:
        """new = H(old || measurement)."""
        if not 0 <= index < len(self.state.pcrs):
            raise IndexOutOfRange(f"PCR {index}")
        new = digest(self.state.pcrs[index] + bytes(measurement))
        self.state.pcrs[index] = new
        return new

    def read_pcrs(self, selection: list[int] | tuple[int, ...]) -> tuple[bytes, ...]:
        for index in selection:
            if not 0 <= index < len(self.state.pcrs):
                raise IndexOutOfRange(f"PCR {index}")
        return tuple(self.state.pcrs[i] for i in selection)

    def quote(self, aik_label: str, selection: list[int] | tuple[int, ...], nonce: bytes) -> Quote:
        """AIK signature over the selected PCR values and the verifier nonce."""
        aik = self._active_aik(aik_label)
        selection = tuple(selection)
        return Quote(selection, self.read_pcrs(selection), bytes(nonce)).signed_by(aik)

    def reset(self) -> None:
        """Power cycle: PCRs back to zero; nonce cache survives when configured."""
        self.state.pcrs = [bytes(32)] * len(self.state.pcrs)
        if not settings.tpm.persist_nonce_cache:
            self.state.nonce_cache.clear()

    # --- Sealing ---

    def seal(
        self,
        payload: bytes,
        selection: list[int] | tuple[int, ...],
        expected_values: tuple[bytes, ...] | None = None,
    ) -> SealedBlob:
        """Encrypt under the storage key, recoverable only in the target PCR state."""
        selection = tuple(selection)
        target = expected_values if expected_values is not None else self.read_pcrs(selection)
        return SealedBlob(
            pcr_selection=selection,
            expected_values=tuple(target),
            tpm_id=self.tpm_id,
            ciphertext=encrypt_to(self.state.storage_key.public, payload, self._rng),
            integrity_tag=digest(payload),
        )

    def unseal(self, blob: SealedBlob) -> bytes:
        if blob.tpm_id != self.tpm_id:
            raise ForeignBlob("sealed by a different TPM")
        if self.read_pcrs(blob.pcr_selection) != blob.expected_values:
            raise StateMismatch("platform state differs from sealed target")
        try:
            payload = decrypt(self.state.storage_key, blob.ciphertext)
        except DecryptFailure as exc:
            raise ForeignBlob("storage key cannot open blob") from exc
        if digest(payload) != blob.integrity_tag:
            raise StateMismatch("integrity tag mismatch")
        return payload

    # --- Binding ---

    def bind_key_create(self, auth: bytes, label: str) -> bytes:
        """Create a Decrypt key under ``label`` and return its public half."""
        self._check_auth(auth)
        if label in self.state.bind_keys:
            raise DuplicateLabel(label)
        key = generate_keypair(KeyUsage.DECRYPT, self._rng)
        self.state.bind_keys[label] = key
        return key.public

    def unbind(self, auth: bytes, label: str, ciphertext: bytes) -> bytes:
        self._check_auth(auth)
        key = self.state.bind_keys.get(label)
        if key is None:
            raise UnknownLabel(label)
        return decrypt(key, ciphertext)

    # --- Replay protection ---

    def consume_nonce(self, nonce: bytes) -> bool:
        """True the first time a nonce is seen in this power cycle, False after."""
        nonce = bytes(nonce)
        if nonce in self.state.nonce_cache:
            return False
        self.state.nonce_cache.add(nonce)
        return True

    # --- Snapshots ---

    def export_snapshot(self, include_private: bool = False) -> tuple[bytes, bytes | None]:
        """Public TLV snapshot plus, on request, a separately typed private section."""
        s = self.state
        public = encode(WireMessage(MsgType.TPM_SNAPSHOT, (
            s.ek_credential.to_bytes(),
            s.platform_credential.to_bytes(),
            pack_list(s.pcrs),
            u8(1 if s.owner_auth is not None else 0),
            pack_list([text(label) + b"\x00" + key.public for label, key in s.aiks.items()]),
            pack_list([text(label) for label in sorted(s.activated)]),
            pack_list([text(label) + b"\x00" + key.public for label, key in s.bind_keys.items()]),
            pack_list(sorted(s.nonce_cache)),
        )))
        if not include_private:
            return public, None
        private = encode(WireMessage(MsgType.TPM_PRIVATE_SECTION, (
            s.ek.private_bytes_for_audit(),
            s.ek_decrypt.private_bytes_for_audit(),
            s.storage_key.private_bytes_for_audit(),
            s.owner_auth or b"",
            pack_list([text(label) + b"\x00" + key.private_bytes_for_audit() for label, key in s.aiks.items()]),
            pack_list([text(label) + b"\x00" + key.private_bytes_for_audit() for label, key in s.bind_keys.items()]),
        )))
        return public, private

    @classmethod
    def from_snapshot(cls, public: bytes, private: bytes, rng: random.Random) -> Tpm:
        """Rebuild a TPM from ``export_snapshot(include_private=True)`` output."""
        pub = decode(public).expect(MsgType.TPM_SNAPSHOT, 8)
        priv = decode(private).expect(MsgType.TPM_PRIVATE_SECTION, 6)

        def _labelled(raw: bytes) -> dict[str, bytes]:
            out: dict[str, bytes] = {}
            for item in unpack_list(raw):
                label, sep, key = item.partition(b"\x00")
                if not sep:
                    raise MalformedMessage("snapshot key entry without label")
                out[read_text(label)] = key
            return out

        owned = pub.field(3) == u8(1)
        state = TpmState(
            ek=KeyPair.from_private_bytes(KeyUsage.SIGN, priv.field(0)),
            ek_decrypt=KeyPair.from_private_bytes(KeyUsage.DECRYPT, priv.field(1)),
            ek_credential=EkCredential.from_bytes(pub.field(0)),
            platform_credential=PlatformCredential.from_bytes(pub.field(1)),
            storage_key=KeyPair.from_private_bytes(KeyUsage.DECRYPT, priv.field(2)),
            pcrs=list(unpack_list(pub.field(2))),
            owner_auth=priv.field(3) if owned else None,
            aiks={k: KeyPair.from_private_bytes(KeyUsage.SIGN, v) for k, v in _labelled(priv.field(4)).items()},
            activated={read_text(x) for x in unpack_list(pub.field(5))},
            bind_keys={k: KeyPair.from_private_bytes(KeyUsage.DECRYPT, v) for k, v in _labelled(priv.field(5)).items()},
            nonce_cache=set(unpack_list(pub.field(7))),
        )
        return cls(state, rng)
