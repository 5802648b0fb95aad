"""Security-level registry.

Each suite bundles a DSA, a KEM and a hash function together with the byte
sizes every variable-length wire field must have. A deployment runs exactly one
suite; its ``wire_byte`` is what goes into the token's protocol field.
"""

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Union


class UnknownSuite(RuntimeError):
    pass


class SuiteLevel(str, Enum):
    L1 = "L1"
    L3 = "L3"
    L5 = "L5"


@dataclass(frozen=True)
class SuiteParams:
    s_key: int
    s_sig: int
    s_ek: int
    s_ct: int
    s_hash: int

    def __post_init__(self):
        for name in ("s_key", "s_sig", "s_ek", "s_ct", "s_hash"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SuiteId:
    level: SuiteLevel
    wire_byte: int
    dsa: str
    kem: str
    hash_name: str
    params: SuiteParams

    def digest(self, data: bytes) -> bytes:
        return hashlib.new(self.hash_name, data).digest()


# ─────────────────────────────────────────────
# REGISTRY (FIPS 203 / 204 / 202 sizes)
# ─────────────────────────────────────────────

SUITES: Dict[SuiteLevel, SuiteId] = {
    SuiteLevel.L1: SuiteId(
        SuiteLevel.L1, 0x01, "ML-DSA-44", "ML-KEM-512", "sha3_256",
        SuiteParams(s_key=1312, s_sig=2420, s_ek=800, s_ct=768, s_hash=32),
    ),
    SuiteLevel.L3: SuiteId(
        SuiteLevel.L3, 0x03, "ML-DSA-65", "ML-KEM-768", "sha3_384",
        SuiteParams(s_key=1952, s_sig=3309, s_ek=1184, s_ct=1088, s_hash=48),
    ),
    SuiteLevel.L5: SuiteId(
        SuiteLevel.L5, 0x05, "ML-DSA-87", "ML-KEM-1024", "sha3_512",
        SuiteParams(s_key=2592, s_sig=4627, s_ek=1568, s_ct=1568, s_hash=64),
    ),
}

_BY_WIRE_BYTE = {s.wire_byte: s for s in SUITES.values()}


def get_suite(level: Union[str, SuiteLevel, SuiteId]) -> SuiteId:
    """Look a suite up by level name ("L1", "l3", "5") or enum."""
    if isinstance(level, SuiteId):
        return level
    try:
        key = SuiteLevel(level) if isinstance(level, SuiteLevel) else SuiteLevel(_normalize(level))
    except ValueError:
        raise UnknownSuite(f"unknown suite level: {level!r}") from None
    return SUITES[key]


def _normalize(name: str) -> str:
    name = str(name).strip().upper()
    if not name.startswith("L"):
        name = "L" + name
    return name


def suite_params(suite: Union[str, SuiteLevel, SuiteId]) -> SuiteParams:
    return get_suite(suite).params


def suite_from_wire_byte(value: int) -> SuiteId:
    try:
        return _BY_WIRE_BYTE[value]
    except KeyError:
        raise UnknownSuite(f"unregistered suite wire byte 0x{value:02x}") from None
