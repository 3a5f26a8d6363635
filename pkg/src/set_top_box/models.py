"""Set-top box state."""

from __future__ import annotations

from dataclasses import dataclass, field

from src.cas_engine.models import CasInstance, OnlinePermit
from src.measured_boot.models import BootLog, BootManifest
from src.provider_services.models import ChargingModel, ConsumptionRecord
from src.tpm_core.models import AikCredential, BindKeyCert, IdentityBinding
from src.tpm_core.tpm import Tpm

AIK_LABEL = "aik-0"
BIND_LABEL = "bind-0"


@dataclass(frozen=True)
class PartyKeys:
    sign_pub: bytes
    enc_pub: bytes = b""


@dataclass
class BoxRoots:
    """Keys pre-installed in the box image."""

    pca: str
    pca_keys: PartyKeys
    providers: dict[str, bytes] = field(default_factory=dict)
    mno_pub: bytes | None = None
    charging: dict[str, PartyKeys] = field(default_factory=dict)
    time_authority: str | None = None
    tsa_pub: bytes | None = None
    update_services: dict[str, bytes] = field(default_factory=dict)


@dataclass
class Subscription:
    provider: str
    provider_pub: bytes
    offer_id: str
    stream_id: int
    cas_id: str
    charging_model: ChargingModel
    tariff: int


@dataclass
class StoredRecord:
    """Encrypted consumption record kept until the charging provider acks it."""

    ciphertext: bytes
    ref: bytes
    units: int
    transferred: bool = False
    acked: bool = False


@dataclass
class BoxState:
    tpm: Tpm
    manifest: BootManifest
    boot_log: BootLog = field(default_factory=BootLog)
    owner_auth: bytes | None = None
    identity_binding: IdentityBinding | None = None
    credential: AikCredential | None = None
    bind_cert: BindKeyCert | None = None
    cas_instances: dict[str, CasInstance] = field(default_factory=dict)
    subscriptions: dict[tuple[str, int], Subscription] = field(default_factory=dict)
    permits: dict[tuple[str, int], OnlinePermit] = field(default_factory=dict)
    deposit: int = 0
    consumption_log: list[StoredRecord] = field(default_factory=list)
    metered_units: int = 0
    prepaid_charged: int = 0
    vouchers_applied: int = 0
    voucher_total: int = 0
    pending_update_nonce: bytes | None = None

    @property
    def firmware_version(self) -> str:
        return self.manifest.firmware_version

    @property
    def identity_label(self) -> str | None:
        return self.credential.identity_label if self.credential else None


@dataclass
class PlaybackResult:
    output: bytes
    periods: int
    charged: int = 0


__all__ = [
    "AIK_LABEL",
    "BIND_LABEL",
    "BoxRoots",
    "BoxState",
    "ConsumptionRecord",
    "PartyKeys",
    "PlaybackResult",
    "StoredRecord",
    "Subscription",
]
