"""The trusted set-top box.

Owns a TPM and a boot manifest, enrolls with a Privacy CA, registers with
providers, installs sealed entitlements into its CAS instances, and meters
playback against a prepaid deposit or a postpaid consumption log.
"""

from __future__ import annotations

import logging
import random
from dataclasses import replace
from enum import Enum
from itertools import groupby
from typing import TypeVar

from src.cas_engine.engine import install_entitlement, request_cw
from src.cas_engine.models import (
    CasInstance,
    EntitlementCredential,
    InstalledEntitlement,
    OnlinePermit,
    UsageConstraints,
)
from src.common.config import settings
from src.common.errors import (
    AuthMismatch,
    BadChargingSignature,
    BadCredential,
    BadProviderSignature,
    BadPullRequestSignature,
    BadUpdateSignature,
    ConfigError,
    DecryptFailure,
    DepositExhausted,
    EnrollmentFailed,
    InactiveAik,
    MalformedMessage,
    NoEntitlement,
    NonceMismatch,
    NotForThisDevice,
    NotRegistered,
    ReplayDetected,
    StbError,
    UnknownLabel,
    UnknownOffer,
)
from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.primitives import digest, encrypt_to
from src.crypto_envelope.wire import MsgType, WireMessage, encode, text, u16, u32
from src.measured_boot.boot import boot
from src.measured_boot.models import BootManifest
from src.pca_service.models import ProviderVouch
from src.provider_services.charging import record_ref
from src.provider_services.models import (
    ChargingModel,
    ConsumptionRecord,
    Dddb,
    DepositVoucher,
    Invoice,
    PullRequest,
    PullScope,
    RegistrationReceipt,
    ServiceOffer,
    SubscriptionSelection,
    TimestampToken,
    UpdatePackage,
)
from src.stream_scrambler.control_word import ControlWord
from src.stream_scrambler.scrambler import TransportPacket, descramble
from src.tpm_core.models import AikCredential, BindKeyCert, Quote
from src.tpm_core.tpm import Tpm

from .models import (
    AIK_LABEL,
    BIND_LABEL,
    BoxRoots,
    BoxState,
    PlaybackResult,
    StoredRecord,
    Subscription,
)

logger = logging.getLogger(__name__)

S = TypeVar("S")


class TransferMode(str, Enum):
    PUSH = "push"
    PULL = "pull"


class SetTopBox(Endpoint):
    """A trusted set-top box attached to the simulated network.

    Args:
        name: Endpoint name.
        tpm: The box's TPM, fresh from the manufacturer.
        manifest: Boot images; measured on every (re)boot.
        rng: Seeded source for owner auth, nonces and encryption.
        customer_id: Subscriber identity escrowed at the PCA.
        roots: Pre-installed party keys.
        initial_deposit: Prepaid balance at first boot.
        charging: Charging provider that receives postpaid records.
    """

    def __init__(
        self,
        name: str,
        tpm: Tpm,
        manifest: BootManifest,
        rng: random.Random,
        customer_id: str,
        roots: BoxRoots,
        initial_deposit: int = 0,
        charging: str | None = None,
        hw_revision: str = "A",
    ) -> None:
        super().__init__(name)
        self._rng = rng
        self.customer_id = customer_id
        self.roots = roots
        self.charging = charging
        self.hw_revision = hw_revision
        self.initial_deposit = initial_deposit
        self.state = BoxState(tpm=tpm, manifest=manifest, deposit=initial_deposit)
        self.reboot()

    @property
    def tpm(self) -> Tpm:
        return self.state.tpm

    @property
    def identity_label(self) -> str | None:
        return self.state.identity_label

    @property
    def deposit(self) -> int:
        return self.state.deposit

    @property
    def firmware_version(self) -> str:
        return self.state.firmware_version

    # --- Boot ---

    def reboot(self) -> None:
        """Power cycle and re-measure the current manifest."""
        self.tpm.reset()
        self.state.boot_log = boot(self.tpm, self.state.manifest.images)

    def tamper_boot(self, component: str) -> None:
        """Local compromise: one byte of ``component`` changes, then reboot."""
        image = next((i.image for i in self.state.manifest.images if i.name == component), None)
        if image is None:
            raise ConfigError(f"no boot component {component!r}")
        altered = bytes([image[0] ^ 0x01]) + image[1:] if image else b"\x01"
        self.state.manifest = self.state.manifest.replace_image(component, altered, self.firmware_version)
        logger.warning("%s: boot component %s modified", self.name, component)
        self.reboot()

    # --- Ownership and identity ---

    def take_ownership_online(self, via: str | None = None) -> AikCredential:
        """Take ownership and enroll an AIK, directly or through a relay device.

        After a failed enrollment the same owner auth and AIK are reused, so a
        retry over a working channel succeeds.
        """
        tpm = self.tpm
        state = self.state
        if state.owner_auth is not None and state.credential is None and state.identity_binding is not None:
            auth, binding = state.owner_auth, state.identity_binding
            logger.info("%s: resuming enrollment of %s", self.name, binding.label)
        else:
            auth = self._rng.randbytes(settings.tpm.owner_auth_bytes)
            tpm.take_ownership(auth)
            state.owner_auth = auth
            _, binding = tpm.make_identity(auth, AIK_LABEL)
            state.identity_binding = binding

        body = encode(WireMessage(MsgType.ENROLL_BODY, (
            tpm.ek_credential.to_bytes(),
            tpm.platform_credential.to_bytes(),
            binding.to_bytes(),
            text(self.customer_id),
        )))
        request = WireMessage(MsgType.ENROLL_REQUEST, (encrypt_to(self.roots.pca_keys.enc_pub, body, self._rng),))
        peer = via or self.roots.pca
        try:
            challenge = self.call(peer, request, MsgType.ENROLL_CHALLENGE).expect(MsgType.ENROLL_CHALLENGE, 2)
            response = tpm.answer_challenge(auth, AIK_LABEL, challenge.field(1))
            blob = self.call(
                peer,
                WireMessage(MsgType.ENROLL_RESPONSE, (challenge.field(0), response)),
                MsgType.ACTIVATION_BLOB,
            ).expect(MsgType.ACTIVATION_BLOB, 1)
            credential = tpm.activate_identity(auth, AIK_LABEL, blob.field(0))
        except StbError as exc:
            logger.warning("%s: enrollment failed: %s", self.name, exc.code)
            raise EnrollmentFailed(f"{exc.code}: {exc.detail}") from exc
        if not credential.verify(self.roots.pca_keys.sign_pub):
            raise EnrollmentFailed("AIK credential is not signed by the PCA")

        self.state.credential = credential
        logger.info("%s: enrolled as %s via %s", self.name, credential.identity_label, peer)
        return credential

    def _auth(self) -> bytes:
        if self.state.owner_auth is None:
            raise AuthMismatch("box has not taken ownership")
        return self.state.owner_auth

    def _credential(self) -> AikCredential:
        if self.state.credential is None:
            raise InactiveAik("no activated AIK credential")
        return self.state.credential

    def _aik_signed(self, item: S) -> S:
        return replace(item, signature=self.tpm.aik_sign(AIK_LABEL, item.signed_bytes()))

    def certify_bind_key(self) -> BindKeyCert:
        """Create the bind key providers encrypt to, certified by the AIK."""
        credential = self._credential()
        bind_pub = self.tpm.bind_key_create(self._auth(), BIND_LABEL)
        cert = self._aik_signed(BindKeyCert(credential.identity_label, bind_pub))
        self.state.bind_cert = cert
        return cert

    def _bind_cert(self) -> BindKeyCert:
        return self.state.bind_cert or self.certify_bind_key()

    def _unbind(self, ciphertext: bytes) -> bytes:
        try:
            return self.tpm.unbind(self._auth(), BIND_LABEL, ciphertext)
        except (AuthMismatch, DecryptFailure, UnknownLabel) as exc:
            raise NotForThisDevice("payload is not encrypted to this box's bind key") from exc

    # --- Attestation ---

    def _attestation(self, verifier: str) -> tuple[list[bytes], Quote]:
        """Fetch a verifier nonce and return [credential, quote, boot log] fields."""
        credential = self._credential()
        nonce = self.call(verifier, WireMessage(MsgType.ATTEST_NONCE_REQUEST), MsgType.ATTEST_NONCE)
        quote = self.tpm.quote(AIK_LABEL, settings.tpm.attest_pcrs, nonce.expect(MsgType.ATTEST_NONCE, 1).field(0))
        return [credential.to_bytes(), quote.to_bytes(), self.state.boot_log.to_bytes()], quote

    def _cas(self, cas_id: str) -> CasInstance:
        cas = self.state.cas_instances.get(cas_id)
        if cas is None:
            cas = CasInstance(cas_id, identity_label=self.identity_label or "")
            self.state.cas_instances[cas_id] = cas
        return cas

    # --- Registration and entitlements ---

    def _offer_key(self, provider: str, offer: ServiceOffer) -> bytes:
        pub = self.roots.providers.get(provider)
        if pub is None and offer.vouch and self.roots.mno_pub is not None:
            vouch = ProviderVouch.from_bytes(offer.vouch)
            if vouch.provider == provider and vouch.verify(self.roots.mno_pub):
                pub = vouch.provider_pub
        if pub is None or offer.provider != provider or not offer.verify(pub):
            raise BadProviderSignature(f"offer from {provider} does not verify")
        return pub

    def register(self, provider: str, stream_id: int, charging_model: ChargingModel) -> RegistrationReceipt:
        """Fetch and check the offer, attest, and subscribe to one stream."""
        credential = self._credential()
        offer = ServiceOffer.from_message(self.call(provider, WireMessage(MsgType.OFFER_REQUEST), MsgType.SERVICE_OFFER))
        provider_pub = self._offer_key(provider, offer)
        service = offer.service(stream_id)
        tariff = offer.tariff_for(charging_model)
        if service is None or tariff is None:
            raise UnknownOffer(f"{provider} offers no {charging_model.value} plan for stream {stream_id}")

        selection = self._aik_signed(
            SubscriptionSelection(offer.offer_id, stream_id, charging_model, credential.identity_label)
        )
        fields, quote = self._attestation(provider)
        reply = self.call(
            provider,
            WireMessage(MsgType.REGISTRATION_REQUEST, (*fields, selection.to_bytes(), self._bind_cert().to_bytes())),
            MsgType.REGISTRATION_RECEIPT,
        )
        receipt = RegistrationReceipt.from_message(reply)
        if not receipt.verify(provider_pub) or receipt.identity_label != credential.identity_label:
            raise BadProviderSignature(f"receipt from {provider} does not verify")

        self.state.subscriptions[(provider, stream_id)] = Subscription(
            provider, provider_pub, offer.offer_id, stream_id, service.cas_id, charging_model, receipt.tariff,
        )
        self._cas(service.cas_id).attested_pcrs = quote.pcr_values
        logger.info("%s: registered with %s for stream %d", self.name, provider, stream_id)
        return receipt

    def _subscription(self, provider: str, stream_id: int) -> Subscription:
        sub = self.state.subscriptions.get((provider, stream_id))
        if sub is None:
            raise NotRegistered(f"not subscribed to {provider}/{stream_id}")
        return sub

    def request_entitlement(
        self, provider: str, stream_id: int, constraints: UsageConstraints
    ) -> InstalledEntitlement:
        """Constrained-key flow: attest, receive the secret, seal it into the CAS."""
        sub = self._subscription(provider, stream_id)
        fields, quote = self._attestation(provider)
        reply = self.call(
            provider,
            WireMessage(MsgType.KEY_REQUEST, (*fields, u16(stream_id), constraints.to_bytes())),
            MsgType.ENTITLEMENT,
        )
        credential = EntitlementCredential.from_message(reply)
        if credential.issued_to != self.identity_label:
            raise NotForThisDevice(f"entitlement issued to {credential.issued_to}")
        secret = self._unbind(credential.secret_ct)
        cas = self._cas(credential.cas_id)
        cas.attested_pcrs = quote.pcr_values
        return install_entitlement(cas, self.tpm, credential, secret, sub.provider_pub)

    def request_permit(self, provider: str, stream_id: int, first_period: int, last_period: int) -> OnlinePermit:
        sub = self._subscription(provider, stream_id)
        nonce = self._rng.randbytes(32)
        reply = self.call(
            provider,
            WireMessage(MsgType.PERMIT_REQUEST, (
                self._credential().to_bytes(), u16(stream_id), u32(first_period), u32(last_period), nonce,
            )),
            MsgType.ONLINE_PERMIT,
        )
        permit = OnlinePermit.from_message(reply)
        if permit.nonce != nonce:
            raise NonceMismatch("permit does not echo the request nonce")
        self.state.permits[(sub.cas_id, stream_id)] = permit
        return permit

    def request_cw_from(self, cas_id: str, stream_id: int, period_index: int) -> ControlWord:
        """Ask one specific CAS instance for a CW."""
        cas = self.state.cas_instances.get(cas_id)
        if cas is None:
            raise NoEntitlement(f"no CAS instance {cas_id}")
        return request_cw(cas, self.tpm, stream_id, period_index, self.transport.now(),
                          self.state.permits.get((cas_id, stream_id)))

    # --- Playback ---

    def watermark_tag(self, stream_id: int) -> bytes:
        return digest(text(self.identity_label or "") + u16(stream_id))[:settings.watermark.length]

    def watermark(self, payload: bytes, stream_id: int) -> bytes:
        """Write the pseudonymous tag at the fixed offset of every packet payload."""
        tag = self.watermark_tag(stream_id)
        size = settings.stream.payload_bytes
        offset = settings.watermark.offset
        out = bytearray(payload)
        for start in range(0, len(out), size):
            out[start + offset:start + offset + len(tag)] = tag
        return bytes(out)

    def watch(self, provider: str, stream_id: int, packets: list[TransportPacket]) -> PlaybackResult:
        """Descramble and meter ``packets`` period by period.

        Errors raised mid-stream carry ``output`` and ``periods_played`` for
        what was delivered before the interruption.
        """
        sub = self._subscription(provider, stream_id)
        cas = self.state.cas_instances.get(sub.cas_id)
        out = bytearray()
        periods = charged = 0
        try:
            if cas is None:
                raise NoEntitlement(f"no CAS instance {sub.cas_id}")
            for period, group in groupby(packets, key=lambda p: p.period_index):
                if sub.charging_model is ChargingModel.PREPAID and self.state.deposit < sub.tariff:
                    raise DepositExhausted(f"deposit {self.state.deposit} below tariff {sub.tariff}")
                cw = request_cw(cas, self.tpm, stream_id, period, self.transport.now(),
                                self.state.permits.get((sub.cas_id, stream_id)))
                if sub.charging_model is ChargingModel.PREPAID:
                    self.state.deposit -= sub.tariff
                    self.state.prepaid_charged += sub.tariff
                    charged += sub.tariff
                elif sub.charging_model is ChargingModel.POSTPAID:
                    self._meter(sub, period)
                    charged += sub.tariff
                for pkt in group:
                    out += self.watermark(descramble(cw, pkt).payload, stream_id)
                periods += 1
        except StbError as exc:
            exc.output = bytes(out)
            exc.periods_played = periods
            logger.warning("%s: playback of stream %d stopped after %d periods: %s",
                           self.name, stream_id, periods, exc.code)
            raise
        return PlaybackResult(bytes(out), periods, charged)

    def _meter(self, sub: Subscription, period: int) -> None:
        keys = self.roots.charging.get(self.charging or "")
        if keys is None or self.roots.time_authority is None or self.roots.tsa_pub is None:
            raise ConfigError(f"{self.name} has no charging provider or time authority for postpaid use")
        record = ConsumptionRecord(self._rng.randbytes(32), self.identity_label, sub.stream_id, period, sub.tariff)
        subject = record.subject_digest()
        reply = self.call(
            self.roots.time_authority, WireMessage(MsgType.TIMESTAMP_REQUEST, (subject,)), MsgType.TIMESTAMP_TOKEN,
        )
        token = TimestampToken.from_message(reply)
        if not token.binds(subject, self.roots.tsa_pub):
            raise BadCredential("timestamp token does not verify")
        record = self._aik_signed(replace(record, timestamp_token=token.to_bytes()))
        ct = encrypt_to(keys.enc_pub, record.to_bytes(), self._rng)
        self.state.consumption_log.append(StoredRecord(ct, record_ref(ct), record.units))
        self.state.metered_units += record.units

    # --- Deposit ---

    def open_contract(self, charging: str) -> None:
        self.call(charging, WireMessage(MsgType.CONTRACT_REQUEST, (self._credential().to_bytes(),)), MsgType.ACK)

    def top_up(self, charging: str, amount: int) -> int:
        """Request a voucher; it arrives as a push and is applied on delivery."""
        fields, _ = self._attestation(charging)
        self.call(
            charging,
            WireMessage(MsgType.TOPUP_REQUEST, (*fields, self._bind_cert().to_bytes(), u32(amount))),
            MsgType.VOUCHER_ISSUED,
        )
        return self.state.deposit

    def apply_top_up(self, voucher_ct: bytes, charging: str) -> int:
        voucher = DepositVoucher.from_bytes(self._unbind(voucher_ct))
        keys = self.roots.charging.get(charging)
        if keys is None or not voucher.verify(keys.sign_pub):
            raise BadChargingSignature(f"voucher not signed by {charging}")
        if voucher.beneficiary != self.identity_label:
            raise NotForThisDevice(f"voucher for {voucher.beneficiary}")
        if not self.tpm.consume_nonce(voucher.nonce):
            raise ReplayDetected("voucher nonce already used")
        self.state.deposit += voucher.amount
        self.state.vouchers_applied += 1
        self.state.voucher_total += voucher.amount
        logger.info("%s: deposit +%d -> %d", self.name, voucher.amount, self.state.deposit)
        return self.state.deposit

    # --- Consumption transfer ---

    def transfer_consumption(
        self, charging: str, mode: TransferMode = TransferMode.PUSH, request: PullRequest | None = None
    ) -> Invoice | WireMessage:
        """Push the unacknowledged log, or answer a signed pull request."""
        if mode is TransferMode.PULL:
            keys = self.roots.charging.get(charging)
            if request is None or keys is None or request.charging != charging or not request.verify(keys.sign_pub):
                raise BadPullRequestSignature(f"pull request from {charging}")
            records = [r for r in self.state.consumption_log if request.scope is PullScope.ALL or not r.acked]
        else:
            records = [r for r in self.state.consumption_log if not r.acked]
        for r in records:
            r.transferred = True
        batch = tuple(r.ciphertext for r in records)
        if mode is TransferMode.PULL:
            return WireMessage(MsgType.CONSUMPTION_BATCH, batch)
        reply = self.call(charging, WireMessage(MsgType.CONSUMPTION_PUSH, batch), MsgType.INVOICE)
        return Invoice.from_message(reply)

    def _mark_acked(self, refs: tuple[bytes, ...]) -> None:
        acked = set(refs)
        for r in self.state.consumption_log:
            if r.ref in acked:
                r.acked = True

    # --- Firmware update ---

    def request_update(self, update_service: str) -> str:
        """Send a signed DDDB; the package arrives as a push and is applied on delivery."""
        credential = self._credential()
        nonce = self._rng.randbytes(32)
        self.state.pending_update_nonce = nonce
        manifest = self.state.manifest
        dddb = self._aik_signed(
            Dddb(manifest.model, self.hw_revision, manifest.firmware_version, nonce, credential.identity_label)
        )
        self.call(
            update_service,
            WireMessage(MsgType.UPDATE_REQUEST, (credential.to_bytes(), self._bind_cert().to_bytes(), dddb.to_bytes())),
            MsgType.ACK,
        )
        return self.firmware_version

    def apply_update(self, package_ct: bytes, update_service: str, expected_nonce: bytes | None = None) -> None:
        expected = expected_nonce if expected_nonce is not None else self.state.pending_update_nonce
        package = UpdatePackage.from_bytes(self._unbind(package_ct))
        pub = self.roots.update_services.get(update_service)
        if pub is None or not package.verify(pub):
            raise BadUpdateSignature(f"package not signed by {update_service}")
        if expected is None or package.nonce != expected:
            raise NonceMismatch("update package does not answer the outstanding request")
        if not self.tpm.consume_nonce(package.nonce):
            raise NonceMismatch("update package nonce already used")
        self.state.pending_update_nonce = None
        self.state.manifest = self.state.manifest.replace_image(package.component, package.image, package.version)
        logger.info("%s: firmware updated to %s", self.name, package.version)
        self.reboot()

    # --- Pushed messages ---

    def handle(self, envelope: Envelope) -> list[Envelope]:
        msg = envelope.message
        if msg.msg_type is MsgType.DEPOSIT_VOUCHER:
            self.apply_top_up(msg.expect(MsgType.DEPOSIT_VOUCHER, 1).field(0), envelope.sender)
            return [self.reply(envelope, WireMessage(MsgType.ACK))]
        if msg.msg_type is MsgType.UPDATE_PACKAGE:
            self.apply_update(msg.expect(MsgType.UPDATE_PACKAGE, 1).field(0), envelope.sender)
            return [self.reply(envelope, WireMessage(MsgType.ACK))]
        if msg.msg_type is MsgType.PULL_REQUEST:
            try:
                request = PullRequest.from_message(msg)
            except (MalformedMessage, ValueError) as exc:
                raise BadPullRequestSignature("unreadable pull request") from exc
            return [self.reply(envelope, self.transfer_consumption(envelope.sender, TransferMode.PULL, request))]
        if msg.msg_type is MsgType.SETTLE_ACK:
            self._mark_acked(msg.fields)
            return []
        return super().handle(envelope)
