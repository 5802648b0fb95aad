"""Crypto providers: one interface over DSA, KEM and hash.

Two implementations live here:

- ``liboqs``: ML-DSA / ML-KEM through liboqs-python, used for real deployments
  and benchmarks.
- ``symbolic``: deterministic structured terms, used by the adversary harness to
  inspect transcripts for secret leakage.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

from pqtoken.suite import SuiteId, get_suite

logger = logging.getLogger(__name__)

SHARED_SECRET_SIZE = 32


class ProviderError(RuntimeError):
    pass


class ProviderUnavailable(ProviderError):
    pass


class DecapsulationError(ProviderError):
    pass


@dataclass(frozen=True)
class SigningKeyPair:
    private_key: bytes
    public_key: bytes

    def __repr__(self):
        return f"SigningKeyPair(public_key={self.public_key[:8].hex()}..)"


@dataclass(frozen=True)
class KemKeyPair:
    decapsulation_key: bytes
    encapsulation_key: bytes

    def __repr__(self):
        return f"KemKeyPair(encapsulation_key={self.encapsulation_key[:8].hex()}..)"


@dataclass(frozen=True)
class Encapsulation:
    ciphertext: bytes
    secret: bytes


class CryptoProvider(ABC):
    name = "abstract"

    def __init__(self, suite):
        self.suite: SuiteId = get_suite(suite)
        self.params = self.suite.params

    # ───────── signatures ─────────

    @abstractmethod
    def generate_signing_keypair(self) -> SigningKeyPair:
        pass

    @abstractmethod
    def sign(self, message: bytes, private_key: bytes) -> bytes:
        pass

    @abstractmethod
    def verify(self, signature: bytes, message: bytes, public_key: bytes) -> bool:
        """Must accept arbitrary attacker bytes and return False, never raise."""

    # ───────── KEM ─────────

    @abstractmethod
    def kem_generate(self) -> KemKeyPair:
        pass

    @abstractmethod
    def kem_encapsulate(self, encapsulation_key: bytes) -> Encapsulation:
        pass

    @abstractmethod
    def kem_decapsulate(self, ciphertext: bytes, decapsulation_key: bytes) -> bytes:
        pass

    # ───────── hash ─────────

    def hash(self, data: bytes) -> bytes:
        return self.suite.digest(data)

    def _check_secret(self, secret: bytes) -> bytes:
        if len(secret) != SHARED_SECRET_SIZE:
            raise ProviderError(f"shared secret must be {SHARED_SECRET_SIZE} bytes, got {len(secret)}")
        return secret


# ─────────────────────────────────────────────
# FACTORY
# ─────────────────────────────────────────────

def get_provider(name: str, suite, **kwargs) -> CryptoProvider:
    """Build a provider by name ("liboqs" or "symbolic")."""
    name = (name or "liboqs").strip().lower()
    if name in ("liboqs", "oqs"):
        from pqtoken.providers.liboqs import LiboqsProvider
        return LiboqsProvider(suite)
    if name == "symbolic":
        from pqtoken.providers.symbolic import SymbolicProvider
        return SymbolicProvider(suite, **kwargs)
    raise ProviderError(f"unknown crypto provider: {name!r}")


def liboqs_available() -> bool:
    try:
        from pqtoken.providers.liboqs import oqs
    except Exception as e:
        logger.debug(f"liboqs import failed: {e}")
        return False
    return oqs is not None
