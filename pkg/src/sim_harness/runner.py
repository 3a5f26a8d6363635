"""Builds the world a scenario describes and runs its event script."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

from src.cas_engine.models import SECONDS_PER_DAY, UsageConstraints
from src.common.errors import ConfigError, StbError
from src.measured_boot.models import BootManifest
from src.measured_boot.reference import ReferenceTable
from src.pca_service.auditor import Auditor
from src.pca_service.service import PrivacyCa
from src.provider_services.charging import ChargingProvider
from src.provider_services.models import ChargingModel, PullScope, ServiceEntry
from src.provider_services.time_authority import TimeAuthority
from src.provider_services.update_service import UpdateService, load_catalog
from src.provider_services.vendor import ServiceProvider
from src.set_top_box.box import SetTopBox
from src.set_top_box.models import BoxRoots, PartyKeys
from src.set_top_box.relay import SecondaryDevice
from src.stream_scrambler.scrambler import TransportPacket
from src.tpm_core.manufacturer import Manufacturer

from .adversary import ADVERSARY_KINDS, Adversary, FakeTpm, FakeTpmBox
from .network import SimNetwork
from .scenario import AdversarySpec, BoxSpec, EventSpec, ScenarioConfig

logger = logging.getLogger(__name__)

OK = "ok"


@dataclass
class Outcome:
    """Result of one scripted event."""

    index: int
    op: str
    result: str = OK
    detail: str = ""
    event_id: str | None = None
    expect: str | None = None

    @property
    def label(self) -> str:
        return self.event_id or f"#{self.index} {self.op}"


@dataclass
class Playback:
    box: str
    provider: str
    stream_id: int
    originals: list[TransportPacket]
    output: bytes
    periods: int


@dataclass
class World:
    """Every party of one simulation, by name."""

    config: ScenarioConfig
    net: SimNetwork
    pca: PrivacyCa
    auditor: Auditor | None = None
    time_authority: TimeAuthority | None = None
    manufacturers: dict[str, Manufacturer] = field(default_factory=dict)
    providers: dict[str, ServiceProvider] = field(default_factory=dict)
    charging: dict[str, ChargingProvider] = field(default_factory=dict)
    update_services: dict[str, UpdateService] = field(default_factory=dict)
    secondary_devices: dict[str, SecondaryDevice] = field(default_factory=dict)
    boxes: dict[str, SetTopBox] = field(default_factory=dict)
    adversaries: list[Adversary] = field(default_factory=list)
    outcomes: list[Outcome] = field(default_factory=list)
    playbacks: list[Playback] = field(default_factory=list)

    def box(self, name: str) -> SetTopBox:
        if name not in self.boxes:
            raise ConfigError(f"no box named {name!r}")
        return self.boxes[name]

    def provider(self, name: str) -> ServiceProvider:
        if name not in self.providers:
            raise ConfigError(f"no provider named {name!r}")
        return self.providers[name]

    def charging_provider(self, name: str) -> ChargingProvider:
        if name not in self.charging:
            raise ConfigError(f"no charging provider named {name!r}")
        return self.charging[name]

    def label_of(self, box: str) -> str:
        label = self.box(box).identity_label
        if label is None:
            raise ConfigError(f"{box} has no identity yet")
        return label


# === World construction ===

def build_world(config: ScenarioConfig, extra_adversaries: list[AdversarySpec] | None = None) -> World:
    """Instantiate and wire every declared party; no messages are sent."""
    config.check_fixtures()
    net = SimNetwork(config.seed)
    eps = config.endpoints

    manufacturers = {m.id: Manufacturer(m.id, net.rng_for(f"manufacturer:{m.id}")) for m in eps.manufacturers}
    auditor = Auditor(eps.auditor, net.rng_for(eps.auditor)) if eps.auditor else None
    pca = PrivacyCa(
        eps.pca,
        net.rng_for(eps.pca),
        {mid: m.root_public for mid, m in manufacturers.items()},
        auditor.public_key if auditor else None,
        auditor.encryption_key if auditor else None,
    )
    world = World(config, net, pca, auditor=auditor, manufacturers=manufacturers)
    net.add(pca)
    if auditor:
        net.add(auditor)
    if eps.time_authority:
        world.time_authority = TimeAuthority(eps.time_authority, net.rng_for(eps.time_authority))
        net.add(world.time_authority)

    reference = ReferenceTable.from_yaml(config.resolve(config.fixtures.reference))
    for spec in eps.providers:
        services = [ServiceEntry(s.stream_id, s.description, s.cas_id, s.online_gated) for s in spec.services]
        tariffs = {parse_charging_model(k): v for k, v in spec.tariffs.items()}
        vendor = ServiceProvider(
            spec.name, net.rng_for(spec.name), pca.name, pca.public_key, reference, services, tariffs,
            offer_id=spec.offer_id, content_seed=config.seed,
        )
        if spec.vouched:
            vendor.vouch = pca.vouch(spec.name, vendor.public_key).to_bytes()
        world.providers[spec.name] = vendor
        net.add(vendor)

    if eps.charging and world.time_authority is None:
        raise ConfigError("charging providers need a time_authority")
    for spec in eps.charging:
        charging = ChargingProvider(
            spec.name, net.rng_for(spec.name), pca.name, pca.public_key, reference, world.time_authority.public_key,
        )
        world.charging[spec.name] = charging
        net.add(charging)

    if eps.update_services:
        if not config.fixtures.catalog:
            raise ConfigError("update services need fixtures.catalog")
        catalog = load_catalog(config.resolve(config.fixtures.catalog))
        for spec in eps.update_services:
            service = UpdateService(spec.name, net.rng_for(spec.name), pca.name, pca.public_key, catalog)
            world.update_services[spec.name] = service
            net.add(service)

    for spec in eps.secondary_devices:
        world.secondary_devices[spec.name] = SecondaryDevice(spec.name, pca.name)
        net.add(world.secondary_devices[spec.name])

    roots = BoxRoots(
        pca=pca.name,
        pca_keys=PartyKeys(pca.public_key, pca.encryption_key),
        providers={p.name: world.providers[p.name].public_key for p in eps.providers if not p.vouched},
        mno_pub=pca.public_key,
        charging={n: PartyKeys(c.public_key, c.encryption_key) for n, c in world.charging.items()},
        time_authority=world.time_authority.name if world.time_authority else None,
        tsa_pub=world.time_authority.public_key if world.time_authority else None,
        update_services={n: u.public_key for n, u in world.update_services.items()},
    )

    adversary_specs = list(config.adversaries) + list(extra_adversaries or [])
    fakes = {a.target: a for a in adversary_specs if a.kind == FakeTpm.kind}
    for spec in eps.boxes:
        if spec.name not in fakes:
            world.boxes[spec.name] = _build_box(world, spec, roots)
    for spec in eps.boxes:
        if spec.name in fakes:
            world.boxes[spec.name] = _build_fake_box(world, spec, roots, fakes[spec.name])
    unknown = set(fakes) - set(world.boxes)
    if unknown:
        raise ConfigError(f"FakeTpm targets unknown boxes: {sorted(unknown, key=str)}")
    for box in world.boxes.values():
        net.add(box)

    for spec in adversary_specs:
        world.adversaries.append(make_adversary(spec, net))
    return world


def _manufacturer(world: World, spec: BoxSpec) -> Manufacturer:
    manufacturer = world.manufacturers.get(spec.manufacturer)
    if manufacturer is None:
        raise ConfigError(f"{spec.name}: unknown manufacturer {spec.manufacturer!r}")
    return manufacturer


def _build_box(world: World, spec: BoxSpec, roots: BoxRoots) -> SetTopBox:
    net = world.net
    tpm = _manufacturer(world, spec).manufacture_tpm(spec.model, net.rng_for(f"tpm:{spec.name}"))
    manifest = BootManifest.from_yaml(world.config.resolve(spec.manifest))
    return SetTopBox(
        spec.name, tpm, manifest, net.rng_for(f"box:{spec.name}"), spec.customer_id, roots,
        initial_deposit=spec.deposit, charging=spec.charging, hw_revision=spec.hw_revision,
    )


def _build_fake_box(world: World, spec: BoxSpec, roots: BoxRoots, adversary: AdversarySpec) -> FakeTpmBox:
    net = world.net
    params = adversary.params
    mode = params.get("mode", "stolen_ek")
    victim = world.boxes.get(params["victim"]) if params.get("victim") else None
    if mode != "self_signed" and victim is None:
        raise ConfigError(f"FakeTpm mode {mode} needs a victim box")
    # Same manufacturer id, different root key.
    rogue = Manufacturer(spec.manufacturer, net.rng_for(f"rogue:{spec.manufacturer}"))
    tpm = rogue.manufacture_tpm(spec.model, net.rng_for(f"tpm:{spec.name}"))
    manifest = BootManifest.from_yaml(world.config.resolve(spec.manifest))
    logger.info("FakeTpm: %s substituted (%s)", spec.name, mode)
    return FakeTpmBox(
        spec.name, tpm, manifest, net.rng_for(f"box:{spec.name}"), spec.customer_id, roots,
        initial_deposit=spec.deposit, charging=spec.charging, hw_revision=spec.hw_revision,
        mode=mode, victim=victim,
    )


def make_adversary(spec: AdversarySpec, net: SimNetwork) -> Adversary:
    cls = ADVERSARY_KINDS.get(spec.kind)
    if cls is None:
        raise ConfigError(f"unknown adversary kind {spec.kind!r}; choose from {sorted(ADVERSARY_KINDS)}")
    params = spec.params
    try:
        if cls is FakeTpm:
            if spec.target is None:
                raise ConfigError("FakeTpm needs a target box")
            adversary = FakeTpm(spec.target, params.get("mode", "stolen_ek"), params.get("victim"))
        elif spec.kind == "Replay":
            adversary = cls(spec.target, copies=int(params.get("copies", 1)))
        elif spec.kind == "TamperLog":
            adversary = cls(spec.target, params.get("event_index"), net.rng_for("adversary:tamper"))
        else:
            adversary = cls(spec.target)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {spec.kind} parameters: {exc}") from exc
    adversary.install(net)
    return adversary


def parse_charging_model(value: str) -> ChargingModel:
    wanted = value.replace("_", "").replace("-", "").lower()
    for model in ChargingModel:
        if model.value.lower() == wanted:
            return model
    raise ConfigError(f"unknown charging model {value!r}")


# === Events ===

def _require(params: dict, *names: str) -> list:
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"missing event parameter(s): {', '.join(missing)}")
    return [params[n] for n in names]


def _take_ownership(world: World, p: dict) -> str:
    (box,) = _require(p, "box")
    return world.box(box).take_ownership_online(p.get("via")).identity_label


def _certify_bind_key(world: World, p: dict) -> str:
    (box,) = _require(p, "box")
    world.box(box).certify_bind_key()
    return ""


def _register(world: World, p: dict) -> str:
    box, provider, stream = _require(p, "box", "provider", "stream")
    receipt = world.box(box).register(provider, int(stream), parse_charging_model(p.get("model", "prepaid")))
    return f"tariff {receipt.tariff}"


def _open_contract(world: World, p: dict) -> str:
    box, charging = _require(p, "box", "charging")
    world.box(box).open_contract(charging)
    return ""


def _top_up(world: World, p: dict) -> str:
    box, charging, amount = _require(p, "box", "charging", "amount")
    return f"deposit {world.box(box).top_up(charging, int(amount))}"


def _request_entitlement(world: World, p: dict) -> str:
    box, provider, stream = _require(p, "box", "provider", "stream")
    now = world.net.now()
    valid_from = now + int(p.get("valid_from", 0))
    hours = p.get("hours")
    constraints = UsageConstraints(
        valid_from,
        valid_from + int(p.get("valid_for", SECONDS_PER_DAY)),
        p.get("daily_max"),
        frozenset(int(h) for h in hours) if hours is not None else None,
    )
    installed = world.box(box).request_entitlement(provider, int(stream), constraints)
    return installed.credential.cas_id


def _request_permit(world: World, p: dict) -> str:
    box, provider, stream = _require(p, "box", "provider", "stream")
    permit = world.box(box).request_permit(provider, int(stream), int(p.get("first", 0)), int(p.get("last", 0)))
    return f"periods {permit.first_period}-{permit.last_period}"


def _acl_grant(world: World, p: dict) -> str:
    provider, stream, box = _require(p, "provider", "stream", "box")
    world.provider(provider).acl_grant(int(stream), world.label_of(box))
    return ""


def _acl_revoke(world: World, p: dict) -> str:
    provider, stream, box = _require(p, "provider", "stream", "box")
    world.provider(provider).acl_revoke(int(stream), world.label_of(box))
    return ""


def _watch(world: World, p: dict) -> str:
    box, provider, stream = _require(p, "box", "provider", "stream")
    originals, scrambled = world.provider(provider).broadcast(int(stream), int(p.get("packets", 100)),
                                                              int(p.get("first_period", 0)))
    try:
        result = world.box(box).watch(provider, int(stream), scrambled)
    except StbError as exc:
        world.playbacks.append(Playback(box, provider, int(stream), originals, exc.output, exc.periods_played))
        raise
    world.playbacks.append(Playback(box, provider, int(stream), originals, result.output, result.periods))
    return f"{result.periods} periods, charged {result.charged}"


def _advance_clock(world: World, p: dict) -> str:
    delta = int(p.get("delta", 0)) + int(p.get("days", 0)) * SECONDS_PER_DAY
    world.net.advance_clock(delta)
    return f"t={world.net.now()}"


def _transfer(world: World, p: dict) -> str:
    box, charging = _require(p, "box", "charging")
    invoice = world.box(box).transfer_consumption(charging)
    return f"accepted {invoice.accepted}, rejected {len(invoice.rejects)}"


def _pull(world: World, p: dict) -> str:
    charging, box = _require(p, "charging", "box")
    try:
        scope = PullScope(p.get("scope", "pending"))
    except ValueError as exc:
        raise ConfigError(f"unknown pull scope {p.get('scope')!r}") from exc
    invoice = world.charging_provider(charging).pull(box, scope)
    return f"accepted {invoice.accepted}, rejected {len(invoice.rejects)}"


def _schedule_pull(world: World, p: dict) -> str:
    charging, box = _require(p, "charging", "box")
    at = world.net.now() + int(p.get("after", 0))
    index = len(world.outcomes)

    def fire() -> None:
        _run_one(world, index, "scheduled_pull", {k: v for k, v in p.items() if k != "after"}, _pull)

    world.net.schedule(at, fire, f"pull {box} by {charging}")
    return f"at t={at}"


def _revoke(world: World, p: dict) -> str:
    (box,) = _require(p, "box")
    world.pca.revoke(world.label_of(box))
    return ""


def _reveal(world: World, p: dict) -> str:
    (box,) = _require(p, "box")
    if world.auditor is None:
        raise ConfigError("reveal needs an auditor endpoint")
    world.auditor.request_reveal(world.pca.name, world.label_of(box))
    return ""


def _request_update(world: World, p: dict) -> str:
    box, service = _require(p, "box", "service")
    return f"firmware {world.box(box).request_update(service)}"


def _tamper_boot(world: World, p: dict) -> str:
    box, component = _require(p, "box", "component")
    world.box(box).tamper_boot(component)
    return ""


def _reboot(world: World, p: dict) -> str:
    (box,) = _require(p, "box")
    world.box(box).reboot()
    return ""


def _cross_request(world: World, p: dict) -> str:
    """Ask one CAS instance for a CW of a stream it was not provisioned for."""
    box, cas_id, stream = _require(p, "box", "cas_id", "stream")
    world.box(box).request_cw_from(cas_id, int(stream), int(p.get("period", 0)))
    return "CW released"


EVENT_OPS: dict[str, Callable[[World, dict], str]] = {
    "take_ownership": _take_ownership,
    "certify_bind_key": _certify_bind_key,
    "register": _register,
    "open_contract": _open_contract,
    "top_up": _top_up,
    "request_entitlement": _request_entitlement,
    "request_permit": _request_permit,
    "acl_grant": _acl_grant,
    "acl_revoke": _acl_revoke,
    "watch": _watch,
    "advance_clock": _advance_clock,
    "transfer": _transfer,
    "pull": _pull,
    "schedule_pull": _schedule_pull,
    "revoke": _revoke,
    "reveal": _reveal,
    "request_update": _request_update,
    "tamper_boot": _tamper_boot,
    "reboot": _reboot,
    "cross_request": _cross_request,
}


def _run_one(
    world: World,
    index: int,
    op: str,
    params: dict,
    handler: Callable[[World, dict], str],
    event: EventSpec | None = None,
) -> Outcome:
    outcome = Outcome(index, op, event_id=event.id if event else None, expect=event.expect if event else None)
    try:
        outcome.detail = handler(world, params)
        world.net.run_until_quiet()
    except ConfigError:
        raise
    except StbError as exc:
        outcome.result = exc.code
        outcome.detail = exc.detail
        world.net.run_until_quiet()
    world.outcomes.append(outcome)
    level = logging.INFO if outcome.result == OK or outcome.result == outcome.expect else logging.WARNING
    logger.log(level, "%s -> %s %s", outcome.label, outcome.result, outcome.detail)
    return outcome


def run_events(world: World) -> list[Outcome]:
    """Run every scripted event to quiescence, in order."""
    for index, event in enumerate(world.config.events, start=1):
        handler = EVENT_OPS.get(event.op)
        if handler is None:
            raise ConfigError(f"event #{index}: unknown op {event.op!r}")
        _run_one(world, index, event.op, event.params, handler, event)
    world.net.run_until_quiet()
    return world.outcomes
