"""Per-role operation timings.

Client and server run in one process against an in-memory store; each action is
split into the time spent inside the client machine and the time spent inside
the server machine. Rows follow the usual device / role / operation / mean / std
layout. Clients never verify tokens, so that row is reported as N/A.

Server verification is a hash of the presented token plus one store lookup;
each sample is the mean over ``VERIFY_BATCH`` of them, after one full CHECK
exchange has confirmed the token is live.
"""

import csv
import io
import logging
import secrets
import statistics
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from pqtoken.providers import CryptoProvider, get_provider
from pqtoken.protocol.admin import RegisterAdmin
from pqtoken.protocol.client import CycleClient, StampClient
from pqtoken.protocol.identity import AdminIdentity, ServerIdentity
from pqtoken.protocol.machine import StateMachine, run_with_store
from pqtoken.protocol.server import ServerContext, open_request
from pqtoken.state import AdminRecord, MemoryStore, TokenStatus
from pqtoken.suite import get_suite
from pqtoken.wire import PERMS_SIZE

logger = logging.getLogger(__name__)

DEFAULT_RUNS = 50
VERIFY_BATCH = 100
OPERATIONS = ("register", "cycle", "stamp", "verify")
ROLES = ("client", "server")


@dataclass(frozen=True)
class BenchRow:
    device: str
    role: str
    operation: str
    mean_ms: Optional[float]
    std_ms: Optional[float]

    @property
    def cells(self) -> Tuple[str, str, str, str, str]:
        if self.mean_ms is None:
            return self.device, self.role, self.operation, "N/A", "N/A"
        return self.device, self.role, self.operation, f"{self.mean_ms:.4f}", f"{self.std_ms:.4f}"


def _ms(start: float, end: float) -> float:
    return (end - start) * 1000.0


def _timed_exchange(make_client: Callable[[], StateMachine], ctx: ServerContext, store) -> Tuple[float, float, object]:
    """(client ms, server ms, client result) for one request/reply action."""
    t0 = time.perf_counter()
    machine = make_client()
    request = machine.poll_transmit()
    t1 = time.perf_counter()
    server = open_request(request.body, ctx)
    _, replies = run_with_store(server, store)
    t2 = time.perf_counter()
    machine.recv(replies[0])
    result = machine.poll_result()
    t3 = time.perf_counter()
    return _ms(t0, t1) + _ms(t2, t3), _ms(t1, t2), result.unwrap()


def _timed_verify(token: bytes, ctx: ServerContext, store, batch: int = VERIFY_BATCH) -> float:
    """Mean ms of one token verification: hash, then look the hash up."""
    now = ctx.clock()
    t0 = time.perf_counter()
    for _ in range(batch):
        lookup = store.lookup_token(ctx.provider.hash(token), now)
    elapsed = _ms(t0, time.perf_counter())
    if lookup.status != TokenStatus.LIVE:
        raise RuntimeError(f"freshly stamped token looked up as {lookup.status.value}")
    return elapsed / batch


def _summary(samples: List[float]) -> Tuple[float, float]:
    if len(samples) < 2:
        return (samples[0] if samples else 0.0), 0.0
    return statistics.mean(samples), statistics.stdev(samples)


def bench(suite="L1", provider: Optional[CryptoProvider] = None, runs: int = DEFAULT_RUNS,
          device: str = "local") -> List[BenchRow]:
    """Time every action ``runs`` times and return one row per role and operation."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    suite = get_suite(suite)
    provider = provider or get_provider("liboqs", suite)
    store = MemoryStore()
    server = ServerIdentity(provider.generate_signing_keypair(), suite)
    ctx = ServerContext(server, provider)
    admin = AdminIdentity(secrets.token_bytes(16), provider.generate_signing_keypair(),
                          server.keypair.public_key, suite)
    store.add_admin(AdminRecord(admin.admin_uuid, admin.keypair.public_key))

    samples = {(role, op): [] for role in ROLES for op in OPERATIONS}

    def record(op: str, client_ms: float, server_ms: float):
        samples[("client", op)].append(client_ms)
        samples[("server", op)].append(server_ms)

    logger.info(f"Benchmarking {suite.level.value} with the {provider.name} provider, {runs} runs")
    for _ in range(runs):
        client_ms, server_ms, client = _timed_exchange(
            lambda: RegisterAdmin(admin, secrets.token_bytes(16), provider.generate_signing_keypair(), provider),
            ctx, store)
        record("register", client_ms, server_ms)

        client_ms, server_ms, client = _timed_exchange(lambda: CycleClient(client, provider), ctx, store)
        record("cycle", client_ms, server_ms)

        client_ms, server_ms, final = _timed_exchange(
            lambda: StampClient(client, 0, bytes(PERMS_SIZE), provider), ctx, store)
        record("stamp", client_ms, server_ms)

        token = final.encode()
        checked = run_with_store(open_request(token, ctx), store)[0].unwrap()
        if not checked.valid:
            raise RuntimeError(f"freshly stamped token rejected: {checked.reason}")
        samples[("server", "verify")].append(_timed_verify(token, ctx, store))

    rows = []
    for role in ROLES:
        for op in OPERATIONS:
            if role == "client" and op == "verify":
                rows.append(BenchRow(device, role, op, None, None))
                continue
            mean, std = _summary(samples[(role, op)])
            rows.append(BenchRow(device, role, op, mean, std))
    return rows


def find_row(rows: List[BenchRow], role: str, operation: str) -> BenchRow:
    for row in rows:
        if row.role == role and row.operation == operation:
            return row
    raise KeyError(f"no {role} {operation} row")


BENCH_FIELDS = ("device", "role", "operation", "mean_ms", "std_ms")


def format_csv(rows: List[BenchRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BENCH_FIELDS)
    for row in rows:
        writer.writerow(row.cells)
    return out.getvalue()


def format_table(rows: List[BenchRow]) -> str:
    cells = [BENCH_FIELDS] + [row.cells for row in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(BENCH_FIELDS))]
    lines = []
    for n, line in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) if i < 3 else cell.rjust(widths[i])
                               for i, cell in enumerate(line)))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
