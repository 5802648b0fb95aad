"""Dolev-Yao adversary harness.

All parties run in one process on a ``VirtualNetwork`` where the attacker sees
every frame and decides what gets delivered. Runs use the symbolic provider so
that transcripts can be searched for secrets with a derivation closure.

Scenario files are line oriented (``#`` starts a comment)::

    suite L1
    seed 7
    max_time 3                      # client and server protocol-time ceiling
    ttl 1h                          # token lifetime
    lifetime 90d                    # signing key lifetime

    register alice
    stamp alice device=2 perms=00000000000000000000000000000000
    stamp alice @s2c=flip:40 expect=BadSignature
    replay 0 expect=DUPLICATE_ID
    reveal client alice
    advance 2h
    check alice expect=expired

Per-message directives: ``@c2s=`` / ``@s2c=`` followed by ``forward``,
``drop``, ``flip:<offset>``, ``modify:<offset>:<hex>`` or (replies only)
``forge``. ``impersonate`` makes the attacker answer the next stamp itself.
``expect=`` compares against the step label: ``ok``, an error code name, an
exception class name, a check verdict, or ``fail`` for any failure.
"""

import json
import logging
import random
import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple

from pqtoken.config import ConfigError, parse_duration
from pqtoken.protocol.admin import RegisterAdmin
from pqtoken.protocol.client import CycleClient, StampClient
from pqtoken.protocol.identity import AdminIdentity, ClientIdentity, FinalToken, ProtocolTime, ServerIdentity
from pqtoken.protocol.machine import (
    Ready,
    RequestRejected,
    ServerRejected,
    StateMachine,
    TimeResync,
    TransportError,
    run_with_store,
)
from pqtoken.protocol.server import CheckResult, ServerContext, ServerPolicy, open_request
from pqtoken.providers.symbolic import SymbolicProvider
from pqtoken.state import AdminRecord, ManualClock, MemoryStore
from pqtoken.suite import get_suite
from pqtoken.wire import (
    PERMS_SIZE,
    TOKEN_SIZE,
    U64_MAX,
    ErrorCode,
    Stamp,
    Stamped,
    Token,
    WireError,
    decode_message,
    encode_message,
    signing_bytes,
)

logger = logging.getLogger(__name__)

DEFAULT_START_TIME = 1_700_000_000.0


class ScenarioError(RuntimeError):
    pass


# ─────────────────────────────────────────────
# SCENARIO MODEL
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class Directive:
    kind: str = "forward"
    offset: int = 0
    data: bytes = b""

    def apply(self, body: bytes) -> Optional[bytes]:
        """What gets delivered; None means nothing does."""
        if self.kind == "forward":
            return body
        if self.kind in ("drop", "forge"):
            return None
        if self.offset >= len(body):
            raise ScenarioError(f"offset {self.offset} is beyond a {len(body)}-byte message")
        if self.kind == "flip":
            return body[:self.offset] + bytes([body[self.offset] ^ 0xFF]) + body[self.offset + 1:]
        if self.kind == "modify":
            end = self.offset + len(self.data)
            if end > len(body):
                raise ScenarioError(f"modification ends at {end}, beyond a {len(body)}-byte message")
            return body[:self.offset] + self.data + body[end:]
        raise ScenarioError(f"unknown directive {self.kind!r}")


FORWARD = Directive()


def parse_directive(text: str) -> Directive:
    parts = text.split(":")
    kind = parts[0].lower()
    try:
        if kind in ("forward", "drop", "forge") and len(parts) == 1:
            return Directive(kind)
        if kind == "flip" and len(parts) == 2:
            return Directive(kind, int(parts[1], 0))
        if kind == "modify" and len(parts) == 3:
            return Directive(kind, int(parts[1], 0), bytes.fromhex(parts[2]))
    except ValueError:
        pass
    raise ScenarioError(f"bad directive {text!r}")


@dataclass(frozen=True)
class Step:
    action: str
    args: Tuple[str, ...] = ()
    options: Tuple[Tuple[str, str], ...] = ()
    c2s: Directive = FORWARD
    s2c: Directive = FORWARD
    expect: Optional[str] = None
    text: str = ""
    line: int = 0

    def option(self, name: str, default: Optional[str] = None) -> Optional[str]:
        return dict(self.options).get(name, default)


@dataclass
class Scenario:
    name: str = "scenario"
    suite: str = "L1"
    seed: int = 0
    max_time: int = U64_MAX
    token_ttl: float = 3600.0
    key_lifetime: float = 90 * 86400.0
    steps: List[Step] = field(default_factory=list)


_ACTIONS = {
    "register": 1, "cycle": 1, "stamp": 1, "check": (1, 2), "advance": 1,
    "reveal": (1, 2), "replay": 1, "inject": 1, "impersonate": 0,
}


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    scenario = Scenario(name=name)
    for number, raw in enumerate(text.splitlines(), 1):
        try:
            words = shlex.split(raw, comments=True)
        except ValueError as e:
            raise ScenarioError(f"{name}:{number}: {e}") from None
        if not words:
            continue
        head, rest = words[0].lower(), words[1:]
        try:
            if head == "suite":
                scenario.suite = get_suite(rest[0]).level.value
            elif head == "seed":
                scenario.seed = int(rest[0], 0)
            elif head == "max_time":
                scenario.max_time = int(rest[0], 0)
            elif head == "ttl":
                scenario.token_ttl = parse_duration(rest[0])
            elif head == "lifetime":
                scenario.key_lifetime = parse_duration(rest[0])
            elif head in _ACTIONS:
                scenario.steps.append(_parse_step(head, rest, raw.strip(), number))
            else:
                raise ScenarioError(f"unknown action {head!r}")
        except (IndexError, ValueError, ConfigError, ScenarioError) as e:
            raise ScenarioError(f"{name}:{number}: {e or 'missing argument'}") from None
    return scenario


def _parse_step(action: str, words: List[str], text: str, number: int) -> Step:
    args, options = [], []
    c2s = s2c = FORWARD
    expect = None
    for word in words:
        if word.startswith("@c2s="):
            c2s = parse_directive(word[5:])
        elif word.startswith("@s2c="):
            s2c = parse_directive(word[5:])
        elif word.startswith("expect="):
            expect = word[7:]
        elif "=" in word:
            key, val = word.split("=", 1)
            options.append((key.lower(), val))
        else:
            args.append(word)
    arity = _ACTIONS[action]
    low, high = arity if isinstance(arity, tuple) else (arity, arity)
    if not low <= len(args) <= high:
        raise ScenarioError(f"{action} takes {low if low == high else f'{low}-{high}'} argument(s)")
    if c2s.kind == "forge":
        raise ScenarioError("only replies can be forged")
    return Step(action, tuple(args), tuple(options), c2s, s2c, expect, text, number)


def load_scenario(path: str) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    return parse_scenario(p.read_text(), name=p.stem)


# ─────────────────────────────────────────────
# DEPLOYMENT
# ─────────────────────────────────────────────

def _copy_client(client: ClientIdentity) -> ClientIdentity:
    return ClientIdentity(client.uuid, client.signing_keypair, client.server_public_key, client.suite,
                          ProtocolTime(client.protocol_time.counter, client.protocol_time.max))


class Deployment:
    """One server, one admin and any number of clients sharing a symbolic universe."""

    def __init__(self, suite="L1", seed: int = 0, max_protocol_time: int = U64_MAX, token_ttl: float = 3600.0,
                 key_lifetime: float = 90 * 86400.0, start_time: float = DEFAULT_START_TIME):
        self.suite = get_suite(suite)
        self.rng = random.Random(seed)
        self.provider = SymbolicProvider(self.suite, randbytes=self.rng.randbytes)
        self.clock = ManualClock(start_time)
        self.store = MemoryStore()
        self.max_protocol_time = max_protocol_time
        self.server = ServerIdentity(self.provider.generate_signing_keypair(), self.suite)
        self.ctx = ServerContext(self.server, self.provider,
                                 ServerPolicy(key_lifetime, token_ttl, max_protocol_time), self.clock)
        self.admin = AdminIdentity(self.random_bytes(16), self.provider.generate_signing_keypair(),
                                   self.server.keypair.public_key, self.suite)
        self.store.add_admin(AdminRecord(self.admin.admin_uuid, self.admin.keypair.public_key))
        self.clients: Dict[str, ClientIdentity] = {}

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> "Deployment":
        return cls(scenario.suite, scenario.seed, scenario.max_time, scenario.token_ttl, scenario.key_lifetime)

    def random_bytes(self, n: int) -> bytes:
        return self.rng.randbytes(n)

    def fork(self) -> "Deployment":
        """Independent copy of clients, store, clock and random stream; the symbolic universe stays shared."""
        other = Deployment.__new__(Deployment)
        other.__dict__.update(self.__dict__)
        other.rng = random.Random()
        other.rng.setstate(self.rng.getstate())
        other.provider = self.provider.with_randbytes(other.rng.randbytes)
        other.clock = ManualClock(self.clock.now)
        other.store = self.store.clone()
        other.ctx = ServerContext(self.server, other.provider, self.ctx.policy, other.clock)
        other.clients = {name: _copy_client(c) for name, c in self.clients.items()}
        return other

    def client(self, name: str) -> ClientIdentity:
        try:
            return self.clients[name]
        except KeyError:
            raise ScenarioError(f"unknown client {name!r}") from None

    def register_machine(self) -> RegisterAdmin:
        return RegisterAdmin(self.admin, self.random_bytes(16), self.provider.generate_signing_keypair(),
                             self.provider, self.max_protocol_time)

    def cycle_machine(self, name: str) -> CycleClient:
        return CycleClient(self.client(name), self.provider)

    def stamp_machine(self, name: str, device: int = 0, perms: bytes = bytes(PERMS_SIZE)) -> StampClient:
        return StampClient(self.client(name), device, perms, self.provider, random_bytes=self.random_bytes)

    def machine_for(self, action: str, name: str, step: Optional[Step] = None) -> StateMachine:
        if action == "register":
            return self.register_machine()
        if action == "cycle":
            return self.cycle_machine(name)
        if action == "stamp":
            device = int(step.option("device", "0"), 0) if step else 0
            perms = bytes.fromhex(step.option("perms", "00" * PERMS_SIZE)) if step else bytes(PERMS_SIZE)
            return self.stamp_machine(name, device, perms)
        raise ScenarioError(f"{action} is not a client action")


# ─────────────────────────────────────────────
# NETWORK AND ATTACKER
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class TranscriptEntry:
    index: int
    direction: str
    step: int
    body: bytes
    delivered: Optional[bytes]
    injected: bool = False


class Attacker:
    def __init__(self, deployment: Deployment):
        self.deployment = deployment
        self.keypair = deployment.provider.generate_signing_keypair()
        self.revealed: List[Tuple[str, bytes]] = []
        self.generated: List[bytes] = []
        self.server_key: Optional[bytes] = None

    def reveal(self, label: str, item: bytes):
        logger.debug(f"Attacker learns {label}")
        self.revealed.append((label, item))

    def forge_stamped(self, request_body: bytes) -> bytes:
        """Answer a STAMP as the server would, signing with the best key known."""
        provider = self.deployment.provider
        request = decode_message(request_body, provider.params)
        if not isinstance(request, Stamp):
            raise ScenarioError("only STAMP requests can be answered with a forged reply")
        encapsulation = provider.kem_encapsulate(request.encapsulation_key)
        self.generated.append(encapsulation.secret)
        preview = request.preview_token
        final = preview.with_payload(encapsulation.secret)
        reply = Stamped(approval_hash=provider.hash(final.encode() + preview.encode()),
                        ciphertext=encapsulation.ciphertext)
        signature = provider.sign(signing_bytes(reply), self.server_key or self.keypair.private_key)
        return encode_message(replace(reply, sig_server=signature), provider.params)


class VirtualNetwork:
    """Carries one client machine's request to the server and the reply back."""

    def __init__(self, deployment: Deployment):
        self.deployment = deployment
        self.attacker = Attacker(deployment)
        self.transcript: List[TranscriptEntry] = []

    def _record(self, direction: str, step: int, body: bytes, delivered: Optional[bytes], injected=False):
        self.transcript.append(TranscriptEntry(len(self.transcript), direction, step, body, delivered, injected))

    def _serve(self, body: bytes) -> Tuple[Ready, Optional[bytes]]:
        machine = open_request(body, self.deployment.ctx)
        result, replies = run_with_store(machine, self.deployment.store)
        return result, replies[0] if replies else None

    def exchange(self, machine: StateMachine, step: int = 0, c2s: Directive = FORWARD,
                 s2c: Directive = FORWARD) -> Tuple[Ready, Optional[Ready]]:
        item = machine.poll_transmit()
        if item is None:
            return machine.poll_result(), None
        request = item.body
        delivered = c2s.apply(request)
        self._record("c2s", step, request, delivered)
        if delivered is None:
            machine.abort(TransportError("request dropped in transit"))
            return machine.poll_result(), None

        server_result, reply = self._serve(delivered)
        if s2c.kind == "forge":
            if reply is not None:
                self._record("s2c", step, reply, None)
            reply = self.attacker.forge_stamped(request)
            self._record("s2c", step, reply, reply, injected=True)
            answer = reply
        elif reply is None:
            answer = None
        else:
            answer = s2c.apply(reply)
            self._record("s2c", step, reply, answer)

        if answer is None:
            machine.abort(TransportError("reply dropped in transit"))
        else:
            machine.recv(answer)
        return machine.poll_result(), server_result

    def inject(self, body: bytes, step: int = 0) -> Ready:
        """A fresh connection carrying attacker-chosen bytes to the server."""
        self._record("c2s", step, body, body, injected=True)
        result, reply = self._serve(body)
        if reply is not None:
            self._record("s2c", step, reply, None)
        return result

    def present(self, token_bytes: bytes) -> CheckResult:
        """Token presentation over a channel the attacker does not observe."""
        machine = open_request(token_bytes, self.deployment.ctx)
        result, _ = run_with_store(machine, self.deployment.store)
        return result.unwrap()


# ─────────────────────────────────────────────
# RUNNING SCENARIOS
# ─────────────────────────────────────────────

def outcome_label(ready: Optional[Ready]) -> str:
    if ready is None:
        return "none"
    if ready.ok:
        return "ok"
    error = ready.error
    if isinstance(error, (ServerRejected, RequestRejected)):
        try:
            return ErrorCode(error.code).name
        except ValueError:
            return f"code{error.code}"
    return type(error).__name__


@dataclass
class StepResult:
    index: int
    text: str
    action: str
    client: Optional[Ready] = None
    server: Optional[Ready] = None
    check: Optional[CheckResult] = None
    label: str = ""
    expected: Optional[str] = None

    @property
    def matched(self) -> bool:
        if self.expected is None:
            return True
        expected = self.expected.lower()
        if expected == "fail":
            return self.label not in ("ok", "valid")
        return expected == self.label.lower()


@dataclass(frozen=True)
class SessionSecret:
    step: int
    client: str
    party: str
    secret: bytes

    def __repr__(self):
        return f"SessionSecret(step={self.step}, client={self.client}, party={self.party})"


@dataclass
class Outcome:
    scenario: Scenario
    deployment: Deployment
    steps: List[StepResult]
    transcript: List[TranscriptEntry]
    session_secrets: List[SessionSecret]
    final_tokens: Dict[str, List[FinalToken]]
    revealed: List[Tuple[str, bytes]]
    attacker_generated: List[bytes]

    @property
    def provider(self) -> SymbolicProvider:
        return self.deployment.provider

    @property
    def store_snapshot(self) -> dict:
        return self.deployment.store.snapshot()

    @property
    def ok(self) -> bool:
        return all(s.matched for s in self.steps)

    def failures(self) -> List[StepResult]:
        return [s for s in self.steps if not s.matched]


def run_scenario(scenario: Scenario, deployment: Optional[Deployment] = None) -> Outcome:
    """Execute every step; failures are recorded, never raised."""
    dep = deployment or Deployment.for_scenario(scenario)
    net = VirtualNetwork(dep)
    attacker = net.attacker
    steps: List[StepResult] = []
    secrets: List[SessionSecret] = []
    tokens: Dict[str, List[FinalToken]] = {}
    forge_next = False

    for index, step in enumerate(scenario.steps):
        result = StepResult(index, step.text, step.action, expected=step.expect)
        try:
            if step.action in ("register", "cycle", "stamp"):
                name = step.args[0]
                s2c = step.s2c
                if step.action == "stamp" and forge_next:
                    s2c, forge_next = Directive("forge"), False
                machine = dep.machine_for(step.action, name, step)
                result.client, result.server = net.exchange(machine, index, step.c2s, s2c)
                result.label = outcome_label(result.client)
                if step.action == "register" and result.client.ok:
                    dep.clients[name] = result.client.value
                if step.action == "stamp":
                    if result.client.ok:
                        tokens.setdefault(name, []).append(result.client.value)
                        secrets.append(SessionSecret(index, name, "client", result.client.value.token.payload))
                    if result.server is not None and result.server.ok:
                        secrets.append(SessionSecret(index, name, "server", result.server.value.token.payload))
            elif step.action == "check":
                name = step.args[0]
                issued = tokens.get(name) or []
                position = int(step.args[1]) if len(step.args) > 1 else -1
                if not issued:
                    raise ScenarioError(f"{name} holds no token")
                result.check = net.present(issued[position].encode())
                result.label = "valid" if result.check.valid else result.check.reason
            elif step.action == "advance":
                dep.clock.advance(parse_duration(step.args[0]))
                result.label = "ok"
            elif step.action == "reveal":
                _reveal(dep, attacker, tokens, step.args)
                result.label = "ok"
            elif step.action == "replay":
                entry = net.transcript[int(step.args[0])]
                if entry.direction != "c2s":
                    raise ScenarioError("only client-to-server messages can be replayed")
                result.server = net.inject(entry.body, index)
                result.label = outcome_label(result.server)
            elif step.action == "inject":
                result.server = net.inject(bytes.fromhex(step.args[0]), index)
                result.label = outcome_label(result.server)
            elif step.action == "impersonate":
                forge_next = True
                result.label = "ok"
        except (ScenarioError, ConfigError, IndexError, ValueError) as e:
            result.label = f"error: {e}"
        if not result.matched:
            logger.warning(f"{scenario.name} step {index} ({step.text}): expected {step.expect}, got {result.label}")
        steps.append(result)

    return Outcome(scenario, dep, steps, net.transcript, secrets, tokens, attacker.revealed, attacker.generated)


def _reveal(dep: Deployment, attacker: Attacker, tokens: Dict[str, List[FinalToken]], args: Tuple[str, ...]):
    kind = args[0].lower()
    if kind == "client":
        if len(args) < 2:
            raise ScenarioError("reveal client needs a client name")
        attacker.reveal(f"client:{args[1]}", dep.client(args[1]).signing_keypair.private_key)
    elif kind == "server":
        attacker.server_key = dep.server.keypair.private_key
        attacker.reveal("server", attacker.server_key)
    elif kind == "admin":
        attacker.reveal("admin", dep.admin.keypair.private_key)
    elif kind == "token":
        if len(args) < 2 or not tokens.get(args[1]):
            raise ScenarioError("reveal token needs a client holding a token")
        attacker.reveal(f"token:{args[1]}", tokens[args[1]][-1].encode())
    else:
        raise ScenarioError(f"cannot reveal {kind!r}")


# ─────────────────────────────────────────────
# SECRECY
# ─────────────────────────────────────────────

def _destruct(term: bytes, provider: SymbolicProvider) -> Iterable[bytes]:
    """One-step projections the attacker can apply to a term."""
    if len(term) == TOKEN_SIZE:
        try:
            token = Token.decode(term)
            yield token.payload
            yield token.uuid
            yield token.perms
        except WireError:
            pass
    try:
        message = decode_message(term, provider.params)
    except WireError:
        return
    for value in vars(message).values():
        if isinstance(value, Token):
            yield value.encode()
        elif isinstance(value, bytes):
            yield value


def attacker_knowledge(outcome: Outcome) -> Set[bytes]:
    """Fixed point of everything derivable from the transcript and reveals."""
    provider = outcome.provider
    seeds = [b for entry in outcome.transcript for b in (entry.body, entry.delivered) if b]
    seeds += [item for _, item in outcome.revealed]
    seeds += list(outcome.attacker_generated)

    known: Set[bytes] = set()
    pending = list(seeds)
    while pending:
        while pending:
            term = pending.pop()
            if term in known:
                continue
            known.add(term)
            pending.extend(t for t in _destruct(term, provider) if t not in known)
        # kemdecaps with any known decapsulation key
        ciphertexts = [t for t in known if provider.is_ciphertext(t)]
        keys = [t for t in known if provider.is_decapsulation_key(t)]
        for ct in ciphertexts:
            for dk in keys:
                secret = provider.open_ciphertext(ct, dk)
                if secret is not None and secret not in known:
                    pending.append(secret)
    return known


@dataclass
class SecrecyVerdict:
    ok: bool
    witnesses: List[SessionSecret]
    knowledge_size: int

    def __bool__(self):
        return self.ok


def assert_secrecy(outcome: Outcome) -> SecrecyVerdict:
    """Fails iff some session secret is derivable or appears on the wire."""
    knowledge = attacker_knowledge(outcome)
    wire = [b for entry in outcome.transcript for b in (entry.body, entry.delivered) if b]
    witnesses = [
        s for s in outcome.session_secrets
        if s.secret in knowledge or any(s.secret in body for body in wire)
    ]
    return SecrecyVerdict(ok=not witnesses, witnesses=witnesses, knowledge_size=len(knowledge))


def scan_store(snapshot: dict, secrets: Iterable[bytes]) -> List[bytes]:
    """Secrets (or raw token bytes) that appear in a store dump."""
    dump = json.dumps(snapshot)
    return [s for s in secrets if s.hex() in dump]


# ─────────────────────────────────────────────
# TAMPER SWEEP
# ─────────────────────────────────────────────

@dataclass
class SweepReport:
    action: str
    attempts: int = 0
    message_sizes: Dict[str, int] = field(default_factory=dict)
    acceptances: List[Tuple[str, int]] = field(default_factory=list)
    mutations: List[Tuple[str, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.acceptances and not self.mutations


def _prepared(action: str, suite, seed: int) -> Deployment:
    dep = Deployment(suite, seed)
    if action in ("cycle", "stamp"):
        net = VirtualNetwork(dep)
        client, _ = net.exchange(dep.register_machine())
        dep.clients["alice"] = client.unwrap()
    return dep


def tamper_sweep(action: str, suite="L1", seed: int = 0, directions: Tuple[str, ...] = ("c2s", "s2c"),
                 stride: int = 1) -> SweepReport:
    """Flip every byte of the request and the reply of one action, one at a time."""
    if action not in ("register", "cycle", "stamp"):
        raise ScenarioError(f"cannot sweep {action!r}")
    base = _prepared(action, suite, seed)
    report = SweepReport(action)

    trial = base.fork()
    net = VirtualNetwork(trial)
    client, _ = net.exchange(trial.machine_for(action, "alice"))
    client.unwrap()
    for entry in net.transcript:
        report.message_sizes[entry.direction] = len(entry.body)

    for direction in directions:
        for offset in range(0, report.message_sizes.get(direction, 0), stride):
            fork = base.fork()
            before = fork.store.snapshot()
            flip = Directive("flip", offset)
            c2s, s2c = (flip, FORWARD) if direction == "c2s" else (FORWARD, flip)
            client, server = VirtualNetwork(fork).exchange(fork.machine_for(action, "alice"), 0, c2s, s2c)
            report.attempts += 1
            if client.ok or (direction == "c2s" and server is not None and server.ok):
                report.acceptances.append((direction, offset))
            if direction == "c2s" and fork.store.snapshot() != before:
                report.mutations.append((direction, offset))
    logger.info(f"Tamper sweep of {action}: {report.attempts} attempts, {len(report.acceptances)} accepted")
    return report


# ─────────────────────────────────────────────
# INTERLEAVED SESSIONS
# ─────────────────────────────────────────────

@dataclass
class _Flight:
    name: str
    epoch: int
    machine: StampClient
    reply: Optional[bytes] = None


@dataclass
class InterleavingReport:
    client_tokens: List[Tuple[str, int, FinalToken]] = field(default_factory=list)
    server_times: Dict[Tuple[bytes, int], List[int]] = field(default_factory=dict)
    store_token_hashes: Set[bytes] = field(default_factory=set)
    client_token_hashes: List[bytes] = field(default_factory=list)
    resyncs: int = 0
    cycles: int = 0

    @property
    def injective(self) -> bool:
        hashes = self.client_token_hashes
        return len(hashes) == len(set(hashes)) and set(hashes) == self.store_token_hashes

    @property
    def consecutive(self) -> bool:
        return all(times == list(range(len(times))) for times in self.server_times.values())


def run_interleaved(n_clients: int = 4, sessions: int = 100, seed: int = 0, cycle_probability: float = 0.0,
                    suite="L1") -> InterleavingReport:
    """Many stamps in flight at once, delivered in a seeded random order."""
    dep = Deployment(suite, seed)
    net = VirtualNetwork(dep)
    scheduler = random.Random(seed)
    report = InterleavingReport()
    names = [f"client{i}" for i in range(n_clients)]
    epochs = {}
    for name in names:
        client, _ = net.exchange(dep.register_machine())
        dep.clients[name] = client.unwrap()
        epochs[name] = 0

    in_flight: List[_Flight] = []
    started = 0
    while started < sessions or in_flight:
        choices = list(range(len(in_flight)))
        if started < sessions:
            choices.append(-1)
        pick = scheduler.choice(choices)

        if pick == -1:
            name = scheduler.choice(names)
            busy = any(f.name == name for f in in_flight)
            if not busy and cycle_probability and scheduler.random() < cycle_probability:
                cycled, _ = net.exchange(dep.cycle_machine(name))
                if cycled.ok:
                    epochs[name] += 1
                    report.cycles += 1
            in_flight.append(_Flight(name, epochs[name], dep.stamp_machine(name)))
            started += 1
            continue

        flight = in_flight[pick]
        if flight.reply is None:
            request = flight.machine.poll_transmit()
            if request is None:
                in_flight.remove(flight)
                continue
            server_machine = open_request(request.body, dep.ctx)
            result, replies = run_with_store(server_machine, dep.store)
            if result.ok:
                final = result.value
                uuid = final.token.uuid
                report.server_times.setdefault((uuid, flight.epoch), []).append(final.token.time)
                report.store_token_hashes.add(dep.provider.hash(final.encode()))
            flight.reply = replies[0]
        else:
            in_flight.remove(flight)
            flight.machine.recv(flight.reply)
            outcome = flight.machine.poll_result()
            if outcome.ok:
                report.client_tokens.append((flight.name, flight.epoch, outcome.value))
                report.client_token_hashes.append(dep.provider.hash(outcome.value.encode()))
            elif isinstance(outcome.error, TimeResync):
                report.resyncs += 1
    return report
