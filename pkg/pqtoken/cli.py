"""Command-line entry point.

    pqtoken server init|run|add-admin|set-scope
    pqtoken admin keygen|register
    pqtoken client cycle|stamp|check
    pqtoken attack --scenario FILE
    pqtoken bench [--device-report]
    pqtoken overhead [--level L1] [--alpha A --beta B --gamma G --hours T]

Exit codes are listed in docs/wire-format.md and in ``EXIT_*`` below.
"""

import argparse
import logging
import os
import secrets
import sys
from typing import List, Optional

from pqtoken import __version__
from pqtoken.config import Config, ConfigError, load_config, parse_overrides
from pqtoken.credentials import (
    Credential,
    CredentialError,
    CredentialKind,
    load_protocol_time,
    pending_path,
    read_credential,
    read_public,
    read_token,
    save_protocol_time,
    state_path,
    write_credential,
    write_public,
    write_token,
)
from pqtoken.providers import ProviderUnavailable, get_provider
from pqtoken.protocol.admin import RegisterAdmin
from pqtoken.protocol.client import CheckClient, CycleClient, StampClient
from pqtoken.protocol.machine import (
    BadSignature,
    CycleRequired,
    HashMismatch,
    ServerRejected,
    TimeResync,
    TransportError,
    UnexpectedMessage,
)
from pqtoken.protocol.server import ServerContext
from pqtoken.state import AdminRecord, InsertResult, MemoryStore, get_store
from pqtoken.suite import suite_from_wire_byte
from pqtoken.transport import listen, run_over_tcp
from pqtoken.wire import (
    PERM_CODE_SIZE,
    PERMS_SIZE,
    CheckStatus,
    ErrorCode,
    WireError,
    perms_disabled,
    perms_lookup,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NETWORK = 4
EXIT_REJECTED = 5
EXIT_CYCLE_REQUIRED = 6
EXIT_TIME_RESYNC = 7
EXIT_VERIFICATION = 8
EXIT_TOKEN_INVALID = 9


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, CycleRequired):
        return EXIT_CYCLE_REQUIRED
    if isinstance(error, TimeResync):
        return EXIT_TIME_RESYNC
    if isinstance(error, ServerRejected):
        return EXIT_REJECTED
    if isinstance(error, TransportError):
        return EXIT_NETWORK
    if isinstance(error, (BadSignature, HashMismatch, UnexpectedMessage, WireError)):
        return EXIT_VERIFICATION
    if isinstance(error, (ConfigError, CredentialError, ProviderUnavailable)):
        return EXIT_CONFIG
    return EXIT_FAILURE


# ─────────────────────────────────────────────
# SERVER
# ─────────────────────────────────────────────

def _provider(config: Config):
    return get_provider(config.provider, config.suite_id)


def cmd_server_init(args, config: Config) -> int:
    provider = _provider(config)
    path = args.out or config.server_key_path
    credential = Credential(CredentialKind.SERVER, config.suite_id, bytes(16), provider.generate_signing_keypair())
    write_credential(path, credential)
    write_public(f"{path}.pub", credential.public())
    print(f"server key: {path}\npublic key: {path}.pub")
    return EXIT_OK


def _server_context(config: Config) -> ServerContext:
    credential = read_credential(config.server_key_path, CredentialKind.SERVER)
    if credential.suite != config.suite_id:
        raise ConfigError(f"server key is for {credential.suite.level.value}, config says {config.suite}")
    return ServerContext(credential.server_identity(), _provider(config), config.server_policy())


def cmd_server_run(args, config: Config) -> int:
    ctx = _server_context(config)
    store = get_store(config)
    try:
        listen(config, ctx, store)
    finally:
        store.close()
    return EXIT_OK


def _provisioning_store(config: Config):
    """Store for offline provisioning; it must be the one `server run` will open."""
    store = get_store(config)
    if type(store) is MemoryStore:
        store.close()
        raise ConfigError("provisioning needs persistent state: set store_path or redis_url")
    return store


def cmd_server_add_admin(args, config: Config) -> int:
    identity = read_public(args.public, CredentialKind.ADMIN)
    if identity.suite != config.suite_id:
        raise ConfigError(f"admin key is for {identity.suite.level.value}, config says {config.suite}")
    store = _provisioning_store(config)
    try:
        result = store.add_admin(AdminRecord(identity.uuid, identity.public_key))
    finally:
        store.close()
    if result != InsertResult.OK:
        print(f"admin {identity.uuid.hex()} not added: {result.value}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"admin {identity.uuid.hex()} added")
    return EXIT_OK


def cmd_server_set_scope(args, config: Config) -> int:
    code = _hex(args.code, PERM_CODE_SIZE, "--code")
    store = _provisioning_store(config)
    try:
        store.set_perm_code(code, args.scope)
    finally:
        store.close()
    print(f"permission code {code.hex()} -> {args.scope}")
    return EXIT_OK


# ─────────────────────────────────────────────
# ADMIN
# ─────────────────────────────────────────────

def cmd_admin_keygen(args, config: Config) -> int:
    server = read_public(args.server_public, CredentialKind.SERVER)
    provider = get_provider(config.provider, server.suite)
    credential = Credential(CredentialKind.ADMIN, server.suite, secrets.token_bytes(16),
                            provider.generate_signing_keypair(), server.public_key)
    write_credential(args.out, credential)
    write_public(f"{args.out}.pub", credential.public())
    print(f"admin {credential.uuid.hex()}: {args.out} (give {args.out}.pub to the server operator)")
    return EXIT_OK


def cmd_admin_register(args, config: Config) -> int:
    admin = read_credential(args.credentials, CredentialKind.ADMIN).admin_identity()
    provider = get_provider(config.provider, admin.suite)
    machine = RegisterAdmin(admin, secrets.token_bytes(16), provider.generate_signing_keypair(), provider,
                            max_protocol_time=config.max_protocol_time)
    client = run_over_tcp(machine, _address(args, config), config.max_frame_size, config.idle_timeout).unwrap()
    write_credential(args.out, Credential.for_client(client))
    save_protocol_time(state_path(args.out), client.signing_keypair.public_key, client.protocol_time)
    print(f"client {client.uuid.hex()}: {args.out}")
    return EXIT_OK


# ─────────────────────────────────────────────
# CLIENT
# ─────────────────────────────────────────────

def _load_client(path: str, config: Config):
    credential = read_credential(path, CredentialKind.CLIENT)
    protocol_time = load_protocol_time(state_path(path), credential.keypair.public_key, config.max_protocol_time)
    return credential.client_identity(protocol_time)


def cmd_client_cycle(args, config: Config) -> int:
    """Rotate the signing key.

    The new key pair is written to ``<credentials>.pending`` before the CYCLE
    goes out. If the run dies before CYCLEOK arrives, the next run resends the
    same key pair; a BAD_SIGNATURE answer to that resend means the server
    already installed it, and the pending key is adopted.
    """
    client = _load_client(args.credentials, config)
    provider = get_provider(config.provider, client.suite)
    pending = pending_path(args.credentials)
    resuming = os.path.exists(pending)
    if resuming:
        new_keypair = read_credential(pending, CredentialKind.CLIENT).keypair
        if new_keypair == client.signing_keypair:
            os.remove(pending)
            print(f"client {client.uuid.hex()} already uses the pending key")
            return EXIT_OK
        logger.warning(f"Resuming interrupted key cycle from {pending}")
    else:
        new_keypair = provider.generate_signing_keypair()
        write_credential(pending, Credential(CredentialKind.CLIENT, client.suite, client.uuid, new_keypair,
                                             client.server_public_key))
    result = run_over_tcp(CycleClient(client, provider, new_keypair), _address(args, config),
                          config.max_frame_size, config.idle_timeout)
    try:
        result.unwrap()
    except ServerRejected as e:
        if not (resuming and e.code == ErrorCode.BAD_SIGNATURE):
            raise
        # the key on file is no longer the old one: the earlier CYCLE went through
        logger.warning(f"Server already holds the pending key of {client.uuid.hex()}; adopting it")
        client.signing_keypair = new_keypair
        client.protocol_time.reset()
    write_credential(args.credentials, Credential.for_client(client))
    save_protocol_time(state_path(args.credentials), client.signing_keypair.public_key, client.protocol_time)
    os.remove(pending)
    print(f"client {client.uuid.hex()} cycled its key")
    return EXIT_OK


def cmd_client_stamp(args, config: Config) -> int:
    client = _load_client(args.credentials, config)
    provider = get_provider(config.provider, client.suite)
    if args.perm_code:
        perms = perms_lookup(_hex(args.perm_code, PERM_CODE_SIZE, "--perm-code"))
    elif args.perms:
        perms = _hex(args.perms, PERMS_SIZE, "--perms")
    else:
        perms = perms_disabled()
    machine = StampClient(client, args.device, perms, provider)
    try:
        result = run_over_tcp(machine, _address(args, config), config.max_frame_size, config.idle_timeout)
    finally:
        # the counter moved (or was resynchronised) whatever the outcome
        save_protocol_time(state_path(args.credentials), client.signing_keypair.public_key, client.protocol_time)
    final = result.unwrap()
    write_token(args.out, final.encode())
    print(f"token for {client.uuid.hex()} at protocol time {final.token.time}: {args.out}")
    return EXIT_OK


def cmd_client_check(args, config: Config) -> int:
    token = read_token(args.token)
    params = suite_from_wire_byte(token[0]).params
    reply = run_over_tcp(CheckClient(token, params), _address(args, config), config.max_frame_size,
                         config.idle_timeout).unwrap()
    if reply.status != CheckStatus.VALID:
        try:
            reason = CheckStatus(reply.status).name.lower()
        except ValueError:
            reason = f"status {reply.status}"
        print(f"token invalid: {reason}")
        return EXIT_TOKEN_INVALID
    print(f"token valid, perms {reply.perms.hex()}")
    return EXIT_OK


# ─────────────────────────────────────────────
# ATTACK / BENCH / OVERHEAD
# ─────────────────────────────────────────────

def cmd_attack(args, config: Config) -> int:
    from pqtoken.harness import assert_secrecy, load_scenario, run_scenario

    scenario = load_scenario(args.scenario)
    outcome = run_scenario(scenario)
    for step in outcome.steps:
        mark = "ok " if step.matched else "FAIL"
        expected = f" (expected {step.expected})" if step.expected else ""
        print(f"[{mark}] {step.index:3d} {step.text:<50} -> {step.label}{expected}")
    verdict = assert_secrecy(outcome)
    if verdict.ok:
        print(f"secrecy: no session secret derivable ({verdict.knowledge_size} terms known)")
    else:
        for w in verdict.witnesses:
            print(f"secrecy: {w.party} secret of step {w.step} ({w.client}) is derivable")
    if args.expect_leak:
        return EXIT_OK if outcome.ok and not verdict.ok else EXIT_FAILURE
    return EXIT_OK if outcome.ok and verdict.ok else EXIT_FAILURE


def cmd_bench(args, config: Config) -> int:
    from pqtoken import bench
    from pqtoken.utils.system_info import device_label, format_device_info

    levels = ["L1", "L3", "L5"] if args.level == "all" else [args.level or config.suite]
    device = args.device or device_label()
    rows = []
    for level in levels:
        provider = get_provider(args.provider or config.provider, level)
        rows.extend(bench.bench(level, provider, args.runs, device=f"{device} {level}"))
    if args.device_report:
        print(format_device_info())
        print()
    print(bench.format_csv(rows) if args.format == "csv" else bench.format_table(rows))
    return EXIT_OK


def cmd_overhead(args, config: Config) -> int:
    from pqtoken import overhead

    levels = None if args.level == "all" else [args.level]
    workload = overhead.Workload(args.alpha, args.beta, args.gamma, args.hours)
    rows = overhead.report_rows(levels, workload)
    print(overhead.format_csv(rows) if args.format == "csv" else overhead.format_table(rows))
    return EXIT_OK


# ─────────────────────────────────────────────
# PARSER
# ─────────────────────────────────────────────

def _hex(text: str, size: int, flag: str) -> bytes:
    try:
        value = bytes.fromhex(text)
    except ValueError:
        raise ConfigError(f"{flag} must be hex") from None
    if len(value) != size:
        raise ConfigError(f"{flag} must be {size} bytes, got {len(value)}")
    return value


def _address(args, config: Config):
    if not getattr(args, "server", None):
        return config.listen_address
    host, sep, port = args.server.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"--server must be host:port, got {args.server!r}")
    return host, int(port)


def _non_negative(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pqtoken", description="Post-quantum M2M token protocol")
    parser.add_argument("--version", action="version", version=f"pqtoken {__version__}")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    server = sub.add_parser("server", help="run and provision the token server").add_subparsers(dest="action",
                                                                                                required=True)
    p = server.add_parser("init", help="generate the server key pair")
    p.add_argument("--out", help="server credential path (default: server_key_path)")
    p.set_defaults(handler=cmd_server_init)
    p = server.add_parser("run", help="serve until interrupted")
    p.add_argument("--config", default=argparse.SUPPRESS, help="same as the global --config")
    p.set_defaults(handler=cmd_server_run)
    p = server.add_parser("add-admin", help="trust an admin public identity")
    p.add_argument("--public", required=True, help="admin .pub file")
    p.set_defaults(handler=cmd_server_add_admin)
    p = server.add_parser("set-scope", help="map a permission code to a scope")
    p.add_argument("--code", required=True, help="15-byte permission code, hex")
    p.add_argument("--scope", required=True)
    p.set_defaults(handler=cmd_server_set_scope)

    admin = sub.add_parser("admin", help="admin actions").add_subparsers(dest="action", required=True)
    p = admin.add_parser("keygen", help="create an admin credential")
    p.add_argument("--server-public", required=True, help="server .pub file")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_admin_keygen)
    p = admin.add_parser("register", help="register a new client")
    p.add_argument("--credentials", required=True, help="admin credential file")
    p.add_argument("--server", help="host:port (default: listen)")
    p.add_argument("--out", required=True, help="client credential file to write")
    p.set_defaults(handler=cmd_admin_register)

    client = sub.add_parser("client", help="client actions").add_subparsers(dest="action", required=True)
    p = client.add_parser("cycle", help="rotate the client signing key")
    p.add_argument("--credentials", required=True)
    p.add_argument("--server")
    p.set_defaults(handler=cmd_client_cycle)
    p = client.add_parser("stamp", help="obtain a fresh token")
    p.add_argument("--credentials", required=True)
    p.add_argument("--server")
    p.add_argument("--out", default="token.bin")
    p.add_argument("--device", type=int, default=0, choices=range(256), metavar="0-255")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--perms", help="16 raw permission bytes, hex")
    group.add_argument("--perm-code", help="15-byte lookup code, hex")
    p.set_defaults(handler=cmd_client_stamp)
    p = client.add_parser("check", help="present a token to the server")
    p.add_argument("--token", required=True)
    p.add_argument("--server")
    p.add_argument("--credentials", help="accepted for symmetry; not needed")
    p.set_defaults(handler=cmd_client_check)

    p = sub.add_parser("attack", help="replay an adversary scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--expect-leak", action="store_true", help="succeed only if a session secret leaks")
    p.set_defaults(handler=cmd_attack)

    p = sub.add_parser("bench", help="time every protocol action per role")
    p.add_argument("--level", choices=["L1", "L3", "L5", "all"])
    p.add_argument("--provider", choices=["liboqs", "symbolic"])
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--device", help="label for the device column")
    p.add_argument("--device-report", action="store_true")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("overhead", help="communication cost model")
    p.add_argument("--level", choices=["L1", "L3", "L5", "all"], default="all")
    p.add_argument("--alpha", type=_non_negative, default=1.0, help="key cycles per hour")
    p.add_argument("--beta", type=_non_negative, default=1.0, help="token renewals per hour")
    p.add_argument("--gamma", type=_non_negative, default=1.0, help="token checks per hour")
    p.add_argument("--hours", type=_non_negative, default=1.0)
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(handler=cmd_overhead)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, parse_overrides(args.set))
        return args.handler(args, config)
    except RuntimeError as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        return code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        return EXIT_FAILURE
