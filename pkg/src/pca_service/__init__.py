# PCA service: Privacy CA and auditor
"""
AIK enrollment with challenge/response, validity queries, revocation, and
identity escrow released only on auditor-signed fraud claims.
"""

from .auditor import Auditor
from .models import AikCredential, EscrowRecord, FraudClaim, ProviderVouch, Status, ValidityResponse
from .service import PrivacyCa, RevealEvent

__all__ = [
    "AikCredential",
    "Auditor",
    "EscrowRecord",
    "FraudClaim",
    "PrivacyCa",
    "ProviderVouch",
    "RevealEvent",
    "Status",
    "ValidityResponse",
]
