"""Closed-form communication cost of the protocol, in bytes on the wire.

Transport framing and TLS are left out. The formulas are checked against real
encoded messages in the tests.
"""

import csv
import io
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

from pqtoken.suite import SUITES, SuiteId, SuiteParams, get_suite, suite_params
from pqtoken.wire import TOKEN_SIZE

KEMTLS_BYTES = 5556
JWS_FIXED_BYTES = 42
# size-independent bytes: discriminators, uuid and the embedded token
KEY_CYCLE_FIXED_BYTES = 18
TOKEN_RENEWAL_FIXED_BYTES = 76


@dataclass(frozen=True)
class Workload:
    alpha: float = 0.0  # key cycles per hour
    beta: float = 0.0  # token renewals per hour
    gamma: float = 0.0  # token checks per hour
    hours: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "hours"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _params(p: Union[SuiteParams, SuiteId, str]) -> SuiteParams:
    return p if isinstance(p, SuiteParams) else suite_params(p)


def cost_key_cycle(p) -> int:
    """CYCLE plus CYCLEOK."""
    p = _params(p)
    return KEY_CYCLE_FIXED_BYTES + p.s_key + 3 * p.s_sig + p.s_hash


def cost_token_renewal(p) -> int:
    """STAMP plus STAMPED."""
    p = _params(p)
    return TOKEN_RENEWAL_FIXED_BYTES + p.s_ek + p.s_hash + p.s_ct + 2 * p.s_sig


def cost_check() -> int:
    return TOKEN_SIZE


def cost_total(w: Workload, p) -> float:
    return w.hours * (w.alpha * cost_key_cycle(p) + w.beta * cost_token_renewal(p) + w.gamma * cost_check())


def jws_check_lower_bound(s_sig: Union[int, SuiteParams, SuiteId, str]) -> int:
    """Smallest possible compact JWS carrying one signature of ``s_sig`` bytes."""
    if not isinstance(s_sig, int):
        s_sig = _params(s_sig).s_sig
    return JWS_FIXED_BYTES + s_sig


def savings_vs_jws(p) -> float:
    return 1 - cost_check() / jws_check_lower_bound(p)


@dataclass(frozen=True)
class KemtlsComparison:
    token_renewal: int
    kemtls: int

    @property
    def ratio(self) -> float:
        return self.token_renewal / self.kemtls


def compare_kemtls() -> KemtlsComparison:
    """Token renewal at level 1 against a KEMTLS handshake at the same level."""
    return KemtlsComparison(token_renewal=cost_token_renewal("L1"), kemtls=KEMTLS_BYTES)


# ─────────────────────────────────────────────
# REPORTS
# ─────────────────────────────────────────────

REPORT_FIELDS = ("level", "key_cycle", "token_renewal", "check", "jws_check", "jws_savings", "total")


def report_rows(levels: Optional[List[str]] = None, workload: Optional[Workload] = None) -> List[Dict[str, object]]:
    workload = workload or Workload(1, 1, 1, 1)
    rows = []
    for level in levels or list(SUITES):
        suite = get_suite(level)
        p = suite.params
        rows.append({
            "level": suite.level.value,
            "key_cycle": cost_key_cycle(p),
            "token_renewal": cost_token_renewal(p),
            "check": cost_check(),
            "jws_check": jws_check_lower_bound(p),
            "jws_savings": f"{savings_vs_jws(p) * 100:.1f}%",
            "total": f"{cost_total(workload, p):g}",
        })
    return rows


def format_csv(rows: List[Dict[str, object]]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def format_table(rows: List[Dict[str, object]]) -> str:
    widths = {f: max(len(f), *(len(str(r[f])) for r in rows)) for f in REPORT_FIELDS}
    lines = ["  ".join(f.ljust(widths[f]) for f in REPORT_FIELDS)]
    lines.append("  ".join("-" * widths[f] for f in REPORT_FIELDS))
    for row in rows:
        lines.append("  ".join(str(row[f]).rjust(widths[f]) if f != "level" else str(row[f]).ljust(widths[f])
                               for f in REPORT_FIELDS))
    kemtls = compare_kemtls()
    lines.append("")
    lines.append(f"KEMTLS handshake: {kemtls.kemtls} bytes; token renewal at L1: {kemtls.token_renewal} bytes "
                 f"(ratio {kemtls.ratio:.2f})")
    return "\n".join(lines)
