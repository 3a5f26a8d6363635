"""Post-run checks a scenario declares, plus implicit ``expect`` checks."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

from src.common.config import settings
from src.common.errors import ConfigError, MalformedMessage
from src.crypto_envelope.wire import MsgType, decode, read_text, unpack_list
from src.set_top_box.box import SetTopBox

from .network import Delivery
from .runner import OK, World
from .scenario import AssertionSpec

logger = logging.getLogger(__name__)

# Nested decoding stops here; real payloads nest at most three levels.
_MAX_DEPTH = 4


@dataclass
class AssertionResult:
    name: str
    passed: bool
    detail: str = ""


def _compare(actual: int, params: dict) -> tuple[bool, str]:
    """Apply ``equals`` / ``at_most`` / ``at_least`` from ``params``."""
    checks = []
    if "equals" in params:
        checks.append((actual == int(params["equals"]), f"== {params['equals']}"))
    if "at_most" in params:
        checks.append((actual <= int(params["at_most"]), f"<= {params['at_most']}"))
    if "at_least" in params:
        checks.append((actual >= int(params["at_least"]), f">= {params['at_least']}"))
    if not checks:
        raise ConfigError("assertion needs equals, at_most or at_least")
    passed = all(ok for ok, _ in checks)
    return passed, f"actual {actual}, wanted {' and '.join(text for _, text in checks)}"


def _box(world: World, p: dict) -> SetTopBox:
    if "box" not in p:
        raise ConfigError("assertion needs a box")
    return world.box(p["box"])


# === Checks ===

def check_deposit(world: World, p: dict) -> tuple[bool, str]:
    return _compare(_box(world, p).deposit, p)


def check_deposit_conservation(world: World, p: dict) -> tuple[bool, str]:
    """Deposit moved only by applied vouchers and prepaid charges."""
    box = _box(world, p)
    state = box.state
    expected = box.initial_deposit + state.voucher_total - state.prepaid_charged
    return state.deposit == expected, (
        f"deposit {state.deposit}, initial {box.initial_deposit} + vouchers {state.voucher_total}"
        f" - charged {state.prepaid_charged} = {expected}"
    )


def check_firmware_version(world: World, p: dict) -> tuple[bool, str]:
    actual = _box(world, p).firmware_version
    return actual == str(p.get("equals")), f"actual {actual}"


def check_output_fidelity(world: World, p: dict) -> tuple[bool, str]:
    """Every played packet equals the head-end original except for the watermark tag."""
    box = _box(world, p)
    plays = [pb for pb in world.playbacks if pb.box == box.name
             and ("stream" not in p or pb.stream_id == int(p["stream"]))]
    if not plays:
        return False, "nothing was played"
    size = settings.stream.payload_bytes
    offset = settings.watermark.offset
    length = settings.watermark.length
    checked = 0
    for pb in plays:
        tag = box.watermark_tag(pb.stream_id)
        played = len(pb.output) // size
        for i in range(played):
            got = pb.output[i * size:(i + 1) * size]
            want = pb.originals[i].payload
            if got[:offset] != want[:offset] or got[offset + length:] != want[offset + length:]:
                return False, f"stream {pb.stream_id} packet {i} differs from the original"
            if got[offset:offset + length] != tag:
                return False, f"stream {pb.stream_id} packet {i} carries the wrong watermark"
        checked += played
    if "packets" in p and checked != int(p["packets"]):
        return False, f"{checked} packets played, wanted {p['packets']}"
    return True, f"{checked} packets match"


def check_invoice_equals_meter(world: World, p: dict) -> tuple[bool, str]:
    """Box meter, cumulative settlement total and latest invoice agree."""
    box = _box(world, p)
    if "charging" not in p:
        raise ConfigError("invoice_equals_meter needs charging")
    charging = world.charging_provider(p["charging"])
    label = box.identity_label or ""
    meter = box.state.metered_units
    settled = charging.total_for(label)
    invoiced = charging.ledger.invoices[-1].total(label) if charging.ledger.invoices else 0
    return meter == settled == invoiced, f"meter {meter}, settled {settled}, latest invoice {invoiced}"


def transcript_errors(deliveries: list[Delivery], code: str) -> int:
    count = 0
    for d in deliveries:
        if d.msg_type is MsgType.ERROR:
            msg = decode(d.payload)
            if msg.fields and read_text(msg.fields[0]) == code:
                count += 1
    return count


def check_error_count(world: World, p: dict) -> tuple[bool, str]:
    """ERROR messages with ``code`` in the transcript (``where: events`` counts event outcomes)."""
    if "code" not in p:
        raise ConfigError("error_count needs a code")
    if p.get("where", "transcript") == "events":
        actual = sum(1 for o in world.outcomes if o.result == p["code"])
    else:
        actual = transcript_errors(world.net.transcript, p["code"])
    return _compare(actual, p)


def check_outcome(world: World, p: dict) -> tuple[bool, str]:
    event = p.get("event")
    matches = [o for o in world.outcomes if o.event_id == event]
    if not matches:
        return False, f"no event {event!r} ran"
    actual = matches[-1].result
    return actual == str(p.get("equals", OK)), f"actual {actual}"


def _leaks(payload: bytes, needles: list[bytes], depth: int = 0) -> str | None:
    for needle in needles:
        if needle and needle in payload:
            return "protected bytes in clear"
    if depth >= _MAX_DEPTH:
        return None
    try:
        msg = decode(payload)
    except MalformedMessage:
        return None
    if msg.msg_type in (MsgType.CONSUMPTION_RECORD, MsgType.TPM_PRIVATE_SECTION):
        return f"plaintext {msg.msg_type.name}"
    for value in msg.fields:
        found = _leaks(value, [], depth + 1)
        if found:
            return found
        try:
            items = unpack_list(value)
        except MalformedMessage:
            continue
        for item in items:
            found = _leaks(item, [], depth + 1)
            if found:
                return found
    return None


def check_no_leak(world: World, p: dict) -> tuple[bool, str]:
    """No customer id, EK public key or plaintext record in observed traffic.

    Observed traffic is what an Eavesdrop adversary captured, or the whole
    transcript when none is installed.
    """
    boxes = [world.box(p["box"])] if "box" in p else list(world.boxes.values())
    needles: list[bytes] = []
    for box in boxes:
        needles.append(box.customer_id.encode("utf-8"))
        needles.append(box.tpm.ek_credential.ek_pub)
        needles.append(box.tpm.ek_credential.ek_enc_pub)
    captured = [d for a in world.adversaries for d in getattr(a, "captured", [])]
    observed = captured or world.net.transcript
    for d in observed:
        found = _leaks(d.payload, needles)
        if found:
            return False, f"seq {d.seq} {d.sender} -> {d.receiver}: {found}"
    return True, f"{len(observed)} deliveries clean"


def check_credentials_issued(world: World, p: dict) -> tuple[bool, str]:
    """AIK credentials the PCA issued to one requesting endpoint (or all, if none named)."""
    if "endpoint" in p:
        actual = world.pca.issued[p["endpoint"]]
    else:
        actual = sum(world.pca.issued.values())
    return _compare(actual, p)


def check_cw_released(world: World, p: dict) -> tuple[bool, str]:
    box = _box(world, p)
    instances = box.state.cas_instances
    if "cas_id" in p:
        cas = instances.get(p["cas_id"])
        actual = cas.cw_released if cas else 0
    else:
        actual = sum(c.cw_released for c in instances.values())
    return _compare(actual, p)


def check_vouchers_applied(world: World, p: dict) -> tuple[bool, str]:
    return _compare(_box(world, p).state.vouchers_applied, p)


def check_revealed(world: World, p: dict) -> tuple[bool, str]:
    box = _box(world, p)
    if world.auditor is None:
        raise ConfigError("revealed needs an auditor endpoint")
    actual = world.auditor.revealed.get(box.identity_label or "")
    return actual == box.customer_id, f"revealed {actual!r}"


def check_queue_empty(world: World, p: dict) -> tuple[bool, str]:
    pending = len(world.net.queue)
    return pending == 0, f"{pending} messages queued"


CHECKS: dict[str, Callable[[World, dict], tuple[bool, str]]] = {
    "deposit": check_deposit,
    "deposit_conservation": check_deposit_conservation,
    "firmware_version": check_firmware_version,
    "output_fidelity": check_output_fidelity,
    "invoice_equals_meter": check_invoice_equals_meter,
    "error_count": check_error_count,
    "outcome": check_outcome,
    "no_leak": check_no_leak,
    "credentials_issued": check_credentials_issued,
    "cw_released": check_cw_released,
    "vouchers_applied": check_vouchers_applied,
    "revealed": check_revealed,
    "queue_empty": check_queue_empty,
}


def evaluate(world: World) -> list[AssertionResult]:
    """Implicit ``expect`` checks first, then the declared assertions in order."""
    results: list[AssertionResult] = []
    for outcome in world.outcomes:
        if outcome.expect is not None:
            results.append(AssertionResult(
                f"expect {outcome.label}",
                outcome.result == outcome.expect,
                f"{outcome.result} (wanted {outcome.expect})",
            ))
    for spec in world.config.assertions:
        results.append(run_check(world, spec))
    for r in results:
        if not r.passed:
            logger.warning("FAILED %s: %s", r.name, r.detail)
    return results


def run_check(world: World, spec: AssertionSpec) -> AssertionResult:
    check = CHECKS.get(spec.check)
    if check is None:
        raise ConfigError(f"unknown assertion {spec.check!r}; choose from {sorted(CHECKS)}")
    passed, detail = check(world, spec.params)
    return AssertionResult(spec.id or spec.check, passed, detail)
