# Provider services: vendor, charging, update service, time authority
"""
Head-end parties the set-top box talks to after enrollment.
"""

from .attestation import AttestationResult, AttestationVerifier
from .charging import ChargingProvider, SettlementLedger, record_ref
from .models import (
    ChargingModel,
    ConsumptionRecord,
    Dddb,
    DepositVoucher,
    FirmwareRelease,
    Invoice,
    PullRequest,
    PullScope,
    RegistrationReceipt,
    ServiceEntry,
    ServiceOffer,
    SubscriptionSelection,
    TimestampToken,
    UpdatePackage,
)
from .time_authority import TimeAuthority
from .update_service import UpdateService, load_catalog
from .vendor import ServiceProvider, Subscriber

__all__ = [
    "AttestationResult",
    "AttestationVerifier",
    "ChargingModel",
    "ChargingProvider",
    "ConsumptionRecord",
    "Dddb",
    "DepositVoucher",
    "FirmwareRelease",
    "Invoice",
    "PullRequest",
    "PullScope",
    "RegistrationReceipt",
    "ServiceEntry",
    "ServiceOffer",
    "ServiceProvider",
    "SettlementLedger",
    "Subscriber",
    "SubscriptionSelection",
    "TimeAuthority",
    "TimestampToken",
    "UpdatePackage",
    "UpdateService",
    "load_catalog",
    "record_ref",
]
