"""Entitlement installation and permission-gated control word release."""

from __future__ import annotations

import logging

from src.common.config import settings
from src.common.errors import (
    BadIssuerSignature,
    DailyCapExceeded,
    Expired,
    NoEntitlement,
    OutsideAllowedHours,
    PermitRequired,
    SealFailure,
)
from src.stream_scrambler.control_word import ControlWord, derive_cw
from src.tpm_core.tpm import Tpm

from .models import (
    SECONDS_PER_DAY,
    SECONDS_PER_HOUR,
    CasInstance,
    EntitlementCredential,
    InstalledEntitlement,
    OnlinePermit,
)

logger = logging.getLogger(__name__)


def _zeroize(buf: bytearray) -> None:
    for i in range(len(buf)):
        buf[i] = 0


def install_entitlement(
    cas: CasInstance,
    tpm: Tpm,
    credential: EntitlementCredential,
    secret: bytes,
    issuer_pub: bytes,
) -> InstalledEntitlement:
    """Seal ``secret`` to the attested PCR state and list the entitlement."""
    if credential.cas_id != cas.cas_id:
        raise NoEntitlement(f"credential for {credential.cas_id} offered to {cas.cas_id}")
    if not credential.verify(issuer_pub):
        raise BadIssuerSignature(f"{cas.cas_id}/{credential.stream_id}")
    selection = settings.tpm.attest_pcrs
    if cas.attested_pcrs is None or tpm.read_pcrs(selection) != cas.attested_pcrs:
        raise SealFailure("platform is not in its attested state")
    sealed = tpm.seal(secret, selection)
    installed = InstalledEntitlement(credential, sealed, issuer_pub)
    cas.entitlements[credential.stream_id] = installed
    logger.info("CAS %s: entitlement for stream %d installed", cas.cas_id, credential.stream_id)
    return installed


def request_cw(
    cas: CasInstance,
    tpm: Tpm,
    stream_id: int,
    period_index: int,
    now: int,
    permit: OnlinePermit | None = None,
) -> ControlWord:
    """Release the CW for one crypto period, or raise why not."""
    installed = cas.entitlements.get(stream_id)
    if installed is None:
        raise NoEntitlement(f"{cas.cas_id} holds nothing for stream {stream_id}")

    secret = bytearray(tpm.unseal(installed.sealed_secret))
    try:
        constraints = installed.credential.constraints
        if not constraints.valid_from <= now < constraints.valid_until:
            raise Expired(f"stream {stream_id} at {now}")
        if constraints.allowed_hours is not None:
            hour = (now % SECONDS_PER_DAY) // SECONDS_PER_HOUR
            if hour not in constraints.allowed_hours:
                raise OutsideAllowedHours(f"hour {hour}")
        day = now // SECONDS_PER_DAY
        if constraints.daily_max is not None and cas.usage_on(stream_id, day) >= constraints.daily_max:
            raise DailyCapExceeded(f"stream {stream_id} day {day}")
        if installed.credential.online_gated:
            _check_permit(cas, installed, stream_id, period_index, now, permit)

        cw = derive_cw(bytes(secret), stream_id, period_index)
    finally:
        _zeroize(secret)

    cas.usage_counters[(stream_id, day)] = cas.usage_on(stream_id, day) + 1
    cas.cw_released += 1
    return cw


def _check_permit(
    cas: CasInstance,
    installed: InstalledEntitlement,
    stream_id: int,
    period_index: int,
    now: int,
    permit: OnlinePermit | None,
) -> None:
    if permit is None:
        raise PermitRequired(f"stream {stream_id} is online-gated")
    if not permit.verify(installed.issuer_pub):
        raise PermitRequired("permit signature invalid")
    if permit.identity_label != cas.identity_label:
        raise PermitRequired("permit issued to another identity")
    if not permit.covers(cas.cas_id, stream_id, period_index, now):
        raise PermitRequired(f"permit does not cover period {period_index}")
