# TPM core: software trusted platform module
"""
Endorsement identity, ownership, AIK lifecycle, PCR bank, quoting,
sealing and binding.
"""

from .manufacturer import Manufacturer
from .models import (
    AikCredential,
    BindKeyCert,
    EkCredential,
    IdentityBinding,
    PlatformCredential,
    Quote,
    SealedBlob,
    TpmState,
    verify_quote,
)
from .tpm import Tpm, challenge_response_input

__all__ = [
    "AikCredential",
    "BindKeyCert",
    "EkCredential",
    "IdentityBinding",
    "Manufacturer",
    "PlatformCredential",
    "Quote",
    "SealedBlob",
    "Tpm",
    "TpmState",
    "challenge_response_input",
    "verify_quote",
]
