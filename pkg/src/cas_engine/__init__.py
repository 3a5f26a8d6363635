# CAS engine: virtual CAM with sealed entitlements
"""
Entitlement storage under seal, constraint and permit checks, and CW release
for any number of coexisting CAS instances.
"""

from .engine import install_entitlement, request_cw
from .models import (
    CasInstance,
    EntitlementCredential,
    InstalledEntitlement,
    OnlinePermit,
    UsageConstraints,
)

__all__ = [
    "CasInstance",
    "EntitlementCredential",
    "InstalledEntitlement",
    "OnlinePermit",
    "UsageConstraints",
    "install_entitlement",
    "request_cw",
]
