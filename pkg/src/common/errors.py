"""Exception hierarchy shared by every protocol party.

Each class name is the error code that travels in ERROR wire messages, so a
failure raised at one endpoint can be rebuilt with the same type at the other.
"""

from __future__ import annotations

from typing import ClassVar


class StbError(Exception):
    """Base error for the simulator."""

    code: ClassVar[str] = "StbError"
    _registry: ClassVar[dict[str, type[StbError]]] = {}
    # Filled in when an error interrupts playback.
    output: bytes = b""
    periods_played: int = 0

    def __init_subclass__(cls, **kwargs) -> None:
        super().__init_subclass__(**kwargs)
        cls.code = cls.__name__
        StbError._registry[cls.code] = cls

    def __init__(self, detail: str = "") -> None:
        super().__init__(detail or self.code)
        self.detail = detail

    @classmethod
    def from_wire(cls, code: str, detail: str = "") -> StbError:
        """Rebuild an error received in an ERROR message."""
        error_cls = cls._registry.get(code)
        if error_cls is None:
            return RemoteError(f"{code}: {detail}")
        return error_cls(detail)


# === crypto_envelope ===

class UsageViolation(StbError):
    """A Sign key was asked to decrypt or a Decrypt key to sign."""


class DecryptFailure(StbError):
    """Wrong key or tampered ciphertext."""


class MalformedMessage(StbError):
    """Wire bytes do not decode to a well-formed message."""


# === tpm_core ===

class AlreadyOwned(StbError):
    pass


class AuthLengthInvalid(StbError):
    pass


class AuthMismatch(StbError):
    pass


class DuplicateLabel(StbError):
    pass


class UnknownLabel(StbError):
    pass


class IndexOutOfRange(StbError):
    pass


class InactiveAik(StbError):
    pass


class StateMismatch(StbError):
    """Current PCR values differ from the sealed target."""


class ForeignBlob(StbError):
    """Blob was sealed by a different TPM."""


# === stream_scrambler ===

class FlagStateError(StbError):
    pass


# === cas_engine ===

class BadIssuerSignature(StbError):
    pass


class SealFailure(StbError):
    pass


class NoEntitlement(StbError):
    pass


class Expired(StbError):
    pass


class DailyCapExceeded(StbError):
    pass


class OutsideAllowedHours(StbError):
    pass


class PermitRequired(StbError):
    pass


class NotOnAcl(StbError):
    pass


class RevokedCredential(StbError):
    pass


# === pca_service ===

class BadEkCredential(StbError):
    pass


class BadAikBinding(StbError):
    pass


class ChallengeFailed(StbError):
    pass


class Unauthorized(StbError):
    pass


class UnknownIdentity(StbError):
    pass


class UnknownSession(StbError):
    pass


# === provider_services ===

class Untrusted(StbError):
    """Attestation verdict was Untrusted; ``reason`` names the failed check."""

    def __init__(self, reason: str = "") -> None:
        super().__init__(reason)
        self.reason = reason


class BadSelectionSignature(StbError):
    pass


class BadCredential(StbError):
    """AIK credential or bind-key certificate does not verify."""


class NoContract(StbError):
    pass


class UnknownOffer(StbError):
    pass


class UnknownSubscriber(StbError):
    pass


class MalformedConstraints(StbError):
    pass


class BadDddbSignature(StbError):
    pass


class NoFirmwareForModel(StbError):
    pass


# === set_top_box ===

class EnrollmentFailed(StbError):
    pass


class NotRegistered(StbError):
    pass


class BadProviderSignature(StbError):
    pass


class DepositExhausted(StbError):
    pass


class NotForThisDevice(StbError):
    pass


class BadChargingSignature(StbError):
    pass


class ReplayDetected(StbError):
    pass


class BadPullRequestSignature(StbError):
    pass


class BadUpdateSignature(StbError):
    pass


class NonceMismatch(StbError):
    pass


# === sim_harness ===

class ConfigError(StbError):
    pass


class FixtureMissing(StbError):
    pass


class NoReply(StbError):
    """A call drained the queue without the expected reply."""


class UnsupportedMessage(StbError):
    pass


class RemoteError(StbError):
    """An ERROR reply carried a code this process does not know."""
