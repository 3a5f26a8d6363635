# Set-top box: the trusted client
"""
Take-ownership, registration, sealed entitlements, metered playback,
deposit vouchers, consumption transfer, firmware update and watermarking.
"""

from .box import SetTopBox, TransferMode
from .models import (
    AIK_LABEL,
    BIND_LABEL,
    BoxRoots,
    BoxState,
    ConsumptionRecord,
    PartyKeys,
    PlaybackResult,
    StoredRecord,
    Subscription,
)
from .relay import SecondaryDevice

__all__ = [
    "AIK_LABEL",
    "BIND_LABEL",
    "BoxRoots",
    "BoxState",
    "ConsumptionRecord",
    "PartyKeys",
    "PlaybackResult",
    "SecondaryDevice",
    "SetTopBox",
    "StoredRecord",
    "Subscription",
    "TransferMode",
]
