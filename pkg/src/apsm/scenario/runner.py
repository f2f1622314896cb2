"""Step a device world through a parsed scenario and record a trace."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from apsm import device
from apsm.authn import Modality, Tier, TokenStrength
from apsm.boot.attestation import verify_attestation
from apsm.boot.images import build_images, default_partitions
from apsm.boot.lineage import make_lineage
from apsm.core import lifecycle
from apsm.core.consent import (
    FOREGROUND_SERVICE,
    AccessScope,
    Action,
    ConsentResponse,
    Party,
    PartyClass,
    Verdict,
    evaluate_consent,
    grant_scope,
)
from apsm.errors import (
    BackgroundRequest,
    BadSignature,
    ConsentMissing,
    FrpAccessDenied,
    KeyMaterialUnavailable,
    KeystoreUnavailable,
    MissingConsent,
    ModelError,
    NotEnrolled,
    NotRequestable,
    NotUserRevocable,
    ProfileExists,
    ScopeViolation,
    SharedUidKeyMismatch,
    TierLockout,
    UnknownKey,
    UnknownPermission,
)
from apsm.keystore import (
    KeyEntry,
    confirmation_key_id,
    kernel_forge_confirmation,
    kernel_read_key,
    key_gate,
    protected_confirm,
    provision_confirmation,
    use_key,
)
from apsm.permissions import (
    BACKGROUND,
    Manifest,
    PermissionDef,
    PermStatus,
    ProtectionLevel,
    check_permission,
    context_of,
    expire_one_time,
    permission_state,
    request_runtime,
    revoke,
    set_from_settings,
    settings_toggle,
    status,
)
from apsm.sandbox import (
    DpcPolicy,
    check_access,
    create_work_profile,
    new_object,
    parties_for,
    query_packages,
)
from apsm.scenario.dsl import Event, Scenario
from apsm.world import DeviceWorld, SystemImage

ALLOW, DENY, OK, PASS, FAIL, ERROR = "allow", "deny", "ok", "pass", "fail", "error"

# verbs that need a running OS; on a device that failed to boot they are denied
NEEDS_OS = frozenset({
    "install", "update", "uninstall", "grant", "revoke", "request", "settings-toggle",
    "write", "access", "share", "act", "query-packages", "enroll", "lock", "unlock",
    "create-profile", "set-foreground", "set-frp", "read-frp", "keygen", "use-key",
    "confirm", "exploit", "trh-update", "ota",
})


@dataclass(frozen=True)
class Outcome:
    decision: str
    reasons: tuple[str, ...] = ()
    detail: dict = field(default_factory=dict)


def allow(**detail) -> Outcome:
    return Outcome(ALLOW, (), detail)


def deny(*reasons: str, **detail) -> Outcome:
    return Outcome(DENY, tuple(reasons), detail)


def ok(**detail) -> Outcome:
    return Outcome(OK, (), detail)


@dataclass(frozen=True)
class TraceRecord:
    index: int
    time: int
    verb: str
    args: dict
    decision: str
    reasons: tuple[str, ...]
    threats: tuple[str, ...]
    digest: str
    detail: dict

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "t": self.time,
            "verb": self.verb,
            "args": dict(sorted(self.args.items())),
            "decision": self.decision,
            "reasons": list(self.reasons),
            "threats": list(self.threats),
            "digest": self.digest,
            "detail": self.detail,
        }


@dataclass
class Trace:
    scenario: str
    threats: tuple[str, ...]
    records: list[TraceRecord]
    prompts: int = 0
    final_digest: str = ""

    @property
    def failures(self) -> list[TraceRecord]:
        return [r for r in self.records if r.decision == FAIL]

    @property
    def passed(self) -> bool:
        return not self.failures


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "on", "yes", "1"):
        return True
    if t in ("false", "off", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text: Optional[str]) -> list[str]:
    return [x for x in (text or "").split(",") if x]


def _kebab(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "-", name).lower()


def _reason_matches(wanted: str, reasons: tuple[str, ...]) -> bool:
    return any(r == wanted or r.startswith(wanted + ":") for r in reasons)


class Runner:
    """Holds the world plus the scripted pieces that are not device state:
    queued consent responses and the last auth token per user."""

    def __init__(self, scenario: Scenario, seed: int = 0):
        self.scenario = scenario
        w = scenario.world
        image = SystemImage(os_version=int(w.get("os", 1)),
                            rollback_index=int(w.get("rollback", 1)))
        self.world = DeviceWorld.fresh(image, seed, locked=_bool(w.get("locked", "true")))
        group_deny = w.get("group-deny", "inherit")
        if group_deny not in ("inherit", "ask"):
            raise ValueError(f"group-deny must be inherit or ask, not {group_deny!r}")
        self.world.group_deny_covers_new_members = group_deny == "inherit"
        self.world.consents.responder = self._respond
        self.queue: dict[str, list[ConsentResponse]] = {}
        self.tokens: dict[int, object] = {}
        self.participants: set[str] = set()
        self.last: Optional[Outcome] = None

    # -- consent responder ----------------------------------------------

    def _respond(self, party: Party, action: Action) -> Optional[ConsentResponse]:
        """Scripted answers first. Otherwise the platform and the apps taking
        part in the interaction agree once; users and organizations are never
        answered for, so their silence is a denial."""
        if party.kind is PartyClass.USER:
            stats = self.world.stats
            stats["prompts"] = stats.get("prompts", 0) + 1
        q = self.queue.get(party.id)
        if q:
            return q.pop(0)
        if party.kind is PartyClass.PLATFORM:
            return ConsentResponse.ALLOW_ONCE
        if party.kind is PartyClass.DEVELOPER and party.id in self.participants:
            return ConsentResponse.ALLOW_ONCE
        return None

    # -- helpers ---------------------------------------------------------

    def _user(self, ev: Event) -> int:
        return int(ev.args.get("user", 0))

    def _uid(self, ev: Event, key: str = "app") -> int:
        if "uid" in ev.args:
            return int(ev.args["uid"])
        return self.world.uid_of(ev.args[key], self._user(ev))

    def _consent(self, cls: str, user: int, apps: list[str],
                 scope: AccessScope = AccessScope()) -> tuple[Outcome, Optional[Action], object]:
        w = self.world
        action = Action.new(w, cls, parties_for(w, user, *apps), scope)
        self.participants = {w.packages[a].party_id for a in apps}
        try:
            decision = evaluate_consent(action, w.consents, w)
        except MissingConsent as exc:
            return deny(f"missing-consent:{exc.party_id}"), action, None
        finally:
            self.participants = set()
        if not decision.allowed:
            refused = [p for p, v in decision.resolutions if v is Verdict.DENY]
            return deny(*(f"veto:{p}" for p in refused or decision.vetoes)), action, decision
        return allow(), action, decision

    # -- verbs -----------------------------------------------------------

    def do_install(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        name, user = a["app"], self._user(ev)
        lineage = make_lineage(_list(a["lineage"]), w.scheme) if "lineage" in a else None
        if name in w.packages:
            if user not in w.packages[name].users:
                uid = lifecycle.install_for_user(w, name, user)
                return allow(uid=uid)
            return self.do_update(ev)
        declared = []
        for spec in _list(a.get("declares")):
            pname, level, *group = spec.split(":")
            declared.append(PermissionDef(pname, ProtectionLevel(level), frozenset(),
                                          group[0] if group else None, name))
        manifest = Manifest(name, _list(a.get("perms")), declared, int(a.get("target", 30)),
                            a.get("shared-uid"), False, _list(a.get("queries")))
        try:
            lifecycle.register_app(w, a["key"], manifest, user_id=user, lineage=lineage)
        except SharedUidKeyMismatch:
            return deny("shared-uid-key-mismatch")
        except UnknownPermission as exc:
            return deny(f"unknown-permission:{exc.args[0]}")
        uid = w.uid_of(name, user)
        return allow(uid=uid, permissions={k: v.value for k, v in
                                           sorted(permission_state(w, uid).items())})

    def do_update(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        pkg = w.packages[a["app"]]
        lineage = make_lineage(_list(a["lineage"]), w.scheme) if "lineage" in a else None
        manifest = replace(pkg.manifest,
                           requested_permissions=_list(a["perms"]) if "perms" in a
                           else list(pkg.manifest.requested_permissions),
                           target_sdk=int(a.get("target", pkg.manifest.target_sdk)),
                           queries=_list(a["queries"]) if "queries" in a
                           else list(pkg.manifest.queries))
        verdict = lifecycle.update_app(w, a["key"], manifest, lineage)
        if verdict.value != ALLOW:
            return deny("signature-mismatch")
        return allow(key=a["key"])

    def do_uninstall(self, ev: Event) -> Outcome:
        user = int(ev.args["user"]) if "user" in ev.args else None
        lifecycle.uninstall(self.world, ev.args["app"], user)
        return ok()

    def do_grant(self, ev: Event) -> Outcome:
        w, uid, perm = self.world, self._uid(ev), ev.args["perm"]
        level = w.permission_def(perm).level
        if level is ProtectionLevel.DANGEROUS:
            set_from_settings(w, uid, perm, ev.args.get("value", "allow"))
        elif level is ProtectionLevel.SPECIAL:
            settings_toggle(w, uid, perm, True)
        else:
            return deny("not-user-grantable")
        return allow(status=status(w, uid, perm).value)

    def do_revoke(self, ev: Event) -> Outcome:
        w, uid, perm = self.world, self._uid(ev), ev.args["perm"]
        try:
            revoke(w, uid, perm)
        except NotUserRevocable:
            return deny("not-user-revocable")
        return allow(status=status(w, uid, perm).value)

    def do_request(self, ev: Event) -> Outcome:
        w, uid, perm = self.world, self._uid(ev), ev.args["perm"]
        ctx = BACKGROUND if _bool(ev.args.get("background", "false")) else None
        before = w.stats.get("prompts", 0)
        try:
            request_runtime(w, uid, perm, ev.args["response"], ctx)
        except BackgroundRequest:
            return deny("background-request")
        except NotRequestable:
            return deny("not-requestable")
        st = status(w, uid, perm)
        prompted = w.stats.get("prompts", 0) > before
        if st in (PermStatus.GRANTED, PermStatus.FOREGROUND_ONLY, PermStatus.ONE_TIME):
            return allow(status=st.value, prompted=prompted)
        return deny("user-denied", status=st.value, prompted=prompted)

    def do_settings_toggle(self, ev: Event) -> Outcome:
        w, uid, perm = self.world, self._uid(ev), ev.args["perm"]
        try:
            settings_toggle(w, uid, perm, _bool(ev.args["on"]))
        except NotRequestable:
            return deny("not-special-access")
        return allow(status=status(w, uid, perm).value)

    def do_write(self, ev: Event) -> Outcome:
        w, path = self.world, ev.args["path"]
        uid = self._uid(ev)
        data = ev.args.get("data", "").encode()
        obj = w.fs.get(path)
        if obj is None:
            obj = new_object(w, path, uid, data)
            d = check_access(w, uid, obj, "write")
            if not d.allowed:
                return deny(d.reason)
            w.add_object(obj)
            return allow(created=True)
        d = check_access(w, uid, obj, "write")
        if not d.allowed:
            return deny(d.reason)
        obj.data = data
        return allow(created=False)

    def do_access(self, ev: Event) -> Outcome:
        w, path = self.world, ev.args["path"]
        obj = w.fs.get(path)
        if obj is None:
            return deny("no-such-object")
        d = check_access(w, self._uid(ev), obj, ev.args["mode"])
        return allow() if d.allowed else deny(d.reason)

    def do_share(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        obj = w.fs.get(a["path"])
        if obj is None:
            return deny("no-such-object")
        scope = AccessScope(obj.id, frozenset({a.get("mode", "read")}))
        out, action, decision = self._consent(a.get("class", "share"), self._user(ev),
                                              [a["from"], a["to"]], scope)
        if out.decision != ALLOW:
            return out
        try:
            granted = grant_scope(w, action, obj.controller, decision)
        except (ConsentMissing, ScopeViolation):
            return deny("not-controller")
        return allow(grant=granted.grant_id, object=obj.id)

    def do_act(self, ev: Event) -> Outcome:
        out, _, _ = self._consent(ev.args["class"], self._user(ev), _list(ev.args["apps"]))
        return out

    def do_respond(self, ev: Event) -> Outcome:
        resp = ConsentResponse(ev.args["value"])
        self.queue.setdefault(ev.args["party"], []).append(resp)
        return ok()

    def do_query_packages(self, ev: Event) -> Outcome:
        visible = query_packages(self.world, ev.args["app"], self._user(ev),
                                 _list(ev.args.get("filter")))
        return allow(visible=visible)

    def do_enroll(self, ev: Event) -> Outcome:
        auth, user = self.world.auth, self._user(ev)
        m = Modality.parse(ev.args["modality"])
        try:
            if m.tier is Tier.PRIMARY:
                auth.set_credential(user, m.kind, ev.args.get("factor", ""),
                                    _bool(ev.args.get("weaver", "false")))
            else:
                auth.enroll(user, m)
        except TierLockout:
            return deny("storage-locked")
        except NotEnrolled:
            return deny("no-primary-credential")
        return allow(modality=m.label)

    def do_lock(self, ev: Event) -> Outcome:
        self.world.auth.lock_screen(self._user(ev))
        return ok()

    def do_unlock(self, ev: Event) -> Outcome:
        w, user = self.world, self._user(ev)
        m = Modality.parse(ev.args["modality"])
        try:
            res = w.auth.authenticate(user, m, w.clock, ev.args.get("factor"),
                                      _bool(ev.args.get("match", "true")))
        except TierLockout as exc:
            return deny(exc.reason)
        except NotEnrolled:
            return deny("not-enrolled")
        if not res.success:
            return deny(res.reason)
        self.tokens[user] = res.token
        return allow(tier=res.tier.value, ce=w.auth.ce_available(user))

    def do_reboot(self, ev: Event) -> Outcome:
        self.tokens.clear()
        return self._boot_outcome(device.reboot(self.world))

    def _boot_outcome(self, result) -> Outcome:
        detail = {"color": result.color.value}
        if result.booted:
            return Outcome(ALLOW, result.reasons, detail)
        return Outcome(DENY, result.reasons, detail)

    def do_flash(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        if w.boot.locked:
            return deny("bootloader-locked")
        if "part" in a:
            blob = bytearray(w.images[a["part"]])
            pos = int(a.get("flip", 0)) % len(blob)
            blob[pos] ^= 0x01
            device.flash(w, {a["part"]: bytes(blob)})
            return allow(part=a["part"], flipped=pos)
        if "os" in a:
            img = w.image
            version = int(a["os"])
            index = int(a.get("rollback", img.rollback_index))
            images = build_images(default_partitions(version, img.block_size), w.scheme,
                                  img.keys, block_size=img.block_size,
                                  rollback_index=index, vbmeta_key=a.get("signer"))
            device.flash(w, images)
            w.image = replace(img, os_version=version, rollback_index=index)
            return allow(os=version)
        raise ValueError("flash needs part= or os=")

    def do_set_root(self, ev: Event) -> Outcome:
        if not device.set_user_root_key(self.world, ev.args["key"]):
            return deny("bootloader-locked")
        return allow()

    def do_unlock_bootloader(self, ev: Event) -> Outcome:
        self.tokens.clear()
        return self._boot_outcome(device.unlock_bootloader(self.world))

    def do_relock(self, ev: Event) -> Outcome:
        self.tokens.clear()
        return self._boot_outcome(device.relock_bootloader(self.world))

    def do_factory_reset(self, ev: Event) -> Outcome:
        self.tokens.clear()
        lifecycle.factory_reset(self.world)
        return self._boot_outcome(self.world.last_boot)

    def do_reset_party(self, ev: Event) -> Outcome:
        lifecycle.reset_party(self.world, ev.args["party"])
        return ok()

    def do_ota(self, ev: Event) -> Outcome:
        rb = int(ev.args["rollback"]) if "rollback" in ev.args else None
        device.ota(self.world, int(ev.args["os"]), rb)
        return ok(os=int(ev.args["os"]))

    def do_trh_update(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        fw = a["fw"].encode()
        sig = device.sign_trh_firmware(w, fw) if _bool(a.get("signed", "true")) else b""
        cred = (self._user(ev), a["factor"]) if "factor" in a else None
        try:
            kept = device.trh_update(w, fw, sig, cred)
        except BadSignature:
            return deny("bad-signature")
        return allow(secrets="preserved" if kept else "wiped")

    def do_create_profile(self, ev: Event) -> Outcome:
        policy = DpcPolicy(frozenset(_list(ev.args.get("allow"))),
                           frozenset(_list(ev.args.get("deny"))),
                           ev.args.get("owner", "profile") == "device")
        try:
            user = create_work_profile(self.world, ev.args["dpc"], policy)
        except ProfileExists:
            return deny("profile-exists")
        return allow(user=user)

    def do_set_foreground(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        user = self._user(ev)
        app = a.get("app", "none")
        before = {p.name: w.uid_of(p.name, u) for p in w.packages.values() for u in p.users}
        if "service" in a:
            if app == "none":
                raise ValueError("service= needs an app")
            attrs = w.parties[w.packages[app].party_id].state.attributes
            uids = set(attrs.get("foreground-service-uids", ()))
            uid = w.uid_of(app, user)
            if _bool(a["service"]):
                uids.add(uid)
            else:
                uids.discard(uid)
            if uids:
                attrs[FOREGROUND_SERVICE] = True
                attrs["foreground-service-uids"] = sorted(uids)
            else:
                attrs.pop(FOREGROUND_SERVICE, None)
                attrs.pop("foreground-service-uids", None)
        else:
            w.set_foreground(None if app == "none" else app, user)
        # sessions that just ended spend their one-time grants
        spent = 0
        for uid in sorted(set(before.values())):
            if not context_of(w, uid).active:
                spent += expire_one_time(w, uid)
        return ok(foreground=w.foreground_package(), expired=spent)

    def do_set_frp(self, ev: Event) -> Outcome:
        try:
            device.set_frp(self.world, ev.args.get("caller", self.world.platform_id),
                           ev.args["value"] or None)
        except FrpAccessDenied:
            return deny("frp-access-denied")
        return allow()

    def do_read_frp(self, ev: Event) -> Outcome:
        try:
            value = device.read_frp(self.world, ev.args.get("caller", self.world.platform_id))
        except FrpAccessDenied:
            return deny("frp-access-denied")
        return allow(frp=value)

    def do_keygen(self, ev: Event) -> Outcome:
        a = ev.args
        timeout = a.get("timeout", "30")
        entry = KeyEntry(a["id"], self._uid(ev), a.get("backing", "tee-keymaster"),
                         _bool(a.get("auth-bound", "false")), _bool(a.get("presence", "false")),
                         TokenStrength[a.get("min", "strong").upper()],
                         None if timeout == "none" else int(timeout))
        self.world.keystore.generate(entry)
        return allow(key=entry.id)

    def do_use_key(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        uid = self._uid(ev)
        token = self.tokens.get(uid // 100000)
        presence = _bool(a.get("presence", "false"))
        try:
            gate = key_gate(w.keystore, a["id"], token, presence, w.clock)
        except UnknownKey:
            return deny("unknown-key")
        if use_key(w, uid, a["id"], b"payload", token, presence) is None:
            return deny(gate.reason or "not-owner")
        return allow()

    def do_confirm(self, ev: Event) -> Outcome:
        w, uid = self.world, self._uid(ev)
        if confirmation_key_id(uid) not in w.keystore.entries:
            provision_confirmation(w, uid)
        conf = protected_confirm(w, uid, ev.args["message"].encode(), _bool(ev.args["button"]))
        if conf is None:
            return deny("no-user-presence")
        return allow(message_digest=conf.message_digest.hex())

    def do_exploit(self, ev: Event) -> Outcome:
        w, a = self.world, ev.args
        target = a["target"]
        if target == "kernel":
            device.exploit_kernel(w)
            return ok(kernel="compromised")
        if not w.kernel_compromised:
            return deny("not-privileged")
        if target == "key":
            try:
                kernel_read_key(w, a["id"])
            except KeyMaterialUnavailable:
                return deny("key-material-unavailable")
            return allow()
        if target == "confirm":
            if kernel_forge_confirmation(w, self._uid(ev), a.get("message", "").encode()) is None:
                return deny("no-user-presence")
            return allow()
        if target == "system":
            # a compromised kernel can write raw blocks of the system partition
            blob = bytearray(w.images["system"])
            blob[0] ^= 0x01
            w.images["system"] = bytes(blob)
            return allow(part="system")
        raise ValueError(f"unknown exploit target {target!r}")

    def do_attest(self, ev: Event) -> Outcome:
        w = self.world
        challenge = ev.args.get("challenge", "")
        try:
            record = device.attest(w, challenge)
        except KeystoreUnavailable:
            return deny("keystore-unavailable")
        if _bool(ev.args.get("tamper", "false")):
            record = replace(record, deviceLocked=not record.deviceLocked)
        check = verify_attestation(record, w.scheme, w.attestation_key,
                                   w.last_boot.vbmeta_digest, challenge)
        detail = {"verifiedBootState": record.verifiedBootState,
                  "deviceLocked": record.deviceLocked}
        if not check.ok:
            return deny(*check.reasons, **detail)
        return allow(**detail)

    # -- assertions ------------------------------------------------------

    def do_assert(self, ev: Event) -> Outcome:
        a = ev.args
        if "last" in a:
            if self.last is None:
                return Outcome(FAIL, ("no previous event",))
            expected, actual = a["last"], self.last.decision
            if actual != expected:
                return Outcome(FAIL, (f"expected {expected}, got {actual}",))
            if "reason" in a and not _reason_matches(a["reason"], self.last.reasons):
                return Outcome(FAIL, (f"expected reason {a['reason']}, got "
                                      f"{','.join(self.last.reasons) or 'none'}",))
            return Outcome(PASS)
        if "check" not in a or "expect" not in a:
            raise ValueError("assert needs last= or check= with expect=")
        actual = self._observe(a["check"], ev, self.world.snapshot())
        if actual != a["expect"]:
            return Outcome(FAIL, (f"expected {a['expect']}, got {actual}",))
        return Outcome(PASS)

    def _observe(self, what: str, ev: Event, w: DeviceWorld) -> str:
        """Read one fact from a snapshot, so assertions never change the world."""
        a = ev.args
        if what == "permission":
            uid = w.uid_of(a["app"], self._user(ev))
            return check_permission(w, uid, a["perm"]).value
        if what == "status":
            return status(w, w.uid_of(a["app"], self._user(ev)), a["perm"]).value
        if what == "access":
            obj = w.fs.get(a["path"])
            if obj is None:
                return "deny"
            return check_access(w, w.uid_of(a["app"], self._user(ev)), obj, a["mode"]).verdict.value
        if what == "boot":
            return w.last_boot.color.value if w.last_boot else "none"
        if what == "storage":
            return "unlocked" if w.auth.ce_available(self._user(ev)) else "locked"
        if what == "visible":
            return str(a["target"] in query_packages(w, a["app"], self._user(ev))).lower()
        if what == "exists":
            return str(a["path"] in w.fs).lower()
        if what == "installed":
            return str(a["app"] in w.packages).lower()
        if what == "frp":
            return str(w.boot.frp)
        if what == "os":
            return str(w.image.os_version)
        raise ValueError(f"unknown check {what!r}")

    # -- driver ----------------------------------------------------------

    def step(self, index: int, ev: Event) -> TraceRecord:
        w = self.world
        w.clock = ev.time
        handler: Callable[[Event], Outcome] = getattr(self, "do_" + ev.verb.replace("-", "_"))
        if ev.verb in NEEDS_OS and not w.running:
            out = deny("device-not-booted")
        else:
            try:
                out = handler(ev)
            except (ModelError, ValueError, KeyError) as exc:
                out = Outcome(ERROR, (_kebab(type(exc).__name__),), {"message": str(exc)})
        if ev.verb != "assert":
            self.last = out
        return TraceRecord(index, ev.time, ev.verb, dict(ev.args), out.decision, out.reasons,
                           ev.threats, w.digest(), out.detail)

    def run(self) -> Trace:
        records = [self.step(i, ev) for i, ev in enumerate(self.scenario.events)]
        return Trace(self.scenario.name, self.scenario.threats, records,
                     self.world.stats.get("prompts", 0), self.world.digest())


def run(scenario: Scenario, seed: int = 0) -> Trace:
    return Runner(scenario, seed).run()
