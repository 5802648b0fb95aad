"""Symbolic provider.

Keys, signatures and ciphertexts are structured terms packed into byte strings
of exactly the suite's sizes, so every codec and cost law still holds. The
equations mirrored here are

    verify(sign(m, sk), m, pk(sk)) = true
    kemdecaps(kemencaps(ss, kempk(sk)), sk) = ss

Public keys carry a fingerprint of the private key and nothing else; a
ciphertext carries the fingerprint of its target key and an opaque handle, never
the secret itself. The provider instance is the term universe: it remembers which
private key belongs to a fingerprint and which secret a handle stands for, so it
only works when every party runs in the same process (tests, the adversary
harness, single-process benchmarks).

Corrupted ciphertexts decapsulate to a pseudo-random secret (implicit rejection,
as ML-KEM does).
"""

import hashlib
import os
import threading
from typing import Callable, Dict, Optional, Tuple

from pqtoken.providers import (
    CryptoProvider,
    DecapsulationError,
    Encapsulation,
    KemKeyPair,
    ProviderError,
    SigningKeyPair,
)

FINGERPRINT_SIZE = 32
HANDLE_SIZE = 16
SECRET_SIZE = 32

TAG_SIGNING_KEY = b"sk"
TAG_PUBLIC_KEY = b"PK"
TAG_SIGNATURE = b"SG"
TAG_DECAPS_KEY = b"dk"
TAG_ENCAPS_KEY = b"EK"
TAG_CIPHERTEXT = b"CT"


def _pad(data: bytes, size: int) -> bytes:
    if len(data) > size:
        raise ProviderError(f"term of {len(data)} bytes does not fit a {size}-byte field")
    return data + bytes(size - len(data))


def _split(term: bytes, tag: bytes, body: int, size: int) -> Optional[bytes]:
    """Return the term body if ``term`` is a well-formed tagged, zero-padded term."""
    if len(term) != size or term[:2] != tag:
        return None
    if any(term[2 + body:]):
        return None
    return term[2:2 + body]


class SymbolicProvider(CryptoProvider):
    name = "symbolic"

    def __init__(self, suite, randbytes: Optional[Callable[[int], bytes]] = None):
        super().__init__(suite)
        self._randbytes = randbytes or os.urandom
        self._lock = threading.Lock()
        self._signing_keys: Dict[bytes, bytes] = {}
        self._handles: Dict[bytes, Tuple[bytes, bytes]] = {}

    def with_randbytes(self, randbytes: Callable[[int], bytes]) -> "SymbolicProvider":
        """Same symbolic universe, different random source."""
        other = SymbolicProvider(self.suite, randbytes)
        other._lock, other._signing_keys, other._handles = self._lock, self._signing_keys, self._handles
        return other

    def _fingerprint(self, label: bytes, secret: bytes) -> bytes:
        # the suite byte folds the KEM shared parameter into every term
        return hashlib.sha3_256(label + bytes([self.suite.wire_byte]) + secret).digest()

    # ───────── signatures ─────────

    def generate_signing_keypair(self) -> SigningKeyPair:
        private_key = TAG_SIGNING_KEY + self._randbytes(32)
        return SigningKeyPair(private_key=private_key, public_key=self.public_key_of(private_key))

    def public_key_of(self, private_key: bytes) -> bytes:
        if private_key[:2] != TAG_SIGNING_KEY or len(private_key) != 34:
            raise ProviderError("malformed symbolic signing key")
        fingerprint = self._fingerprint(b"pk", private_key)
        with self._lock:
            self._signing_keys[fingerprint] = private_key
        return _pad(TAG_PUBLIC_KEY + fingerprint, self.params.s_key)

    def sign(self, message: bytes, private_key: bytes) -> bytes:
        public_key = self.public_key_of(private_key)
        fingerprint = public_key[2:2 + FINGERPRINT_SIZE]
        mac = hashlib.sha3_256(b"sig" + private_key + message).digest()
        return _pad(TAG_SIGNATURE + fingerprint + mac, self.params.s_sig)

    def verify(self, signature: bytes, message: bytes, public_key: bytes) -> bool:
        try:
            fingerprint = _split(public_key, TAG_PUBLIC_KEY, FINGERPRINT_SIZE, self.params.s_key)
            body = _split(signature, TAG_SIGNATURE, FINGERPRINT_SIZE * 2, self.params.s_sig)
            if fingerprint is None or body is None or body[:FINGERPRINT_SIZE] != fingerprint:
                return False
            with self._lock:
                private_key = self._signing_keys.get(fingerprint)
            if private_key is None:
                return False
            return body[FINGERPRINT_SIZE:] == hashlib.sha3_256(b"sig" + private_key + message).digest()
        except Exception:
            return False

    # ───────── KEM ─────────

    def kem_generate(self) -> KemKeyPair:
        decapsulation_key = TAG_DECAPS_KEY + self._randbytes(32)
        fingerprint = self._fingerprint(b"ek", decapsulation_key)
        return KemKeyPair(
            decapsulation_key=decapsulation_key,
            encapsulation_key=_pad(TAG_ENCAPS_KEY + fingerprint, self.params.s_ek),
        )

    def kem_encapsulate(self, encapsulation_key: bytes) -> Encapsulation:
        fingerprint = _split(encapsulation_key, TAG_ENCAPS_KEY, FINGERPRINT_SIZE, self.params.s_ek)
        if fingerprint is None:
            raise ProviderError("malformed symbolic encapsulation key")
        secret = self._randbytes(SECRET_SIZE)
        handle = self._randbytes(HANDLE_SIZE)
        with self._lock:
            self._handles[handle] = (fingerprint, secret)
        ciphertext = _pad(TAG_CIPHERTEXT + fingerprint + handle, self.params.s_ct)
        return Encapsulation(ciphertext=ciphertext, secret=self._check_secret(secret))

    def kem_decapsulate(self, ciphertext: bytes, decapsulation_key: bytes) -> bytes:
        if len(ciphertext) != self.params.s_ct:
            raise DecapsulationError(f"ciphertext must be {self.params.s_ct} bytes, got {len(ciphertext)}")
        secret = self.open_ciphertext(ciphertext, decapsulation_key)
        if secret is None:
            secret = hashlib.sha3_256(b"reject" + decapsulation_key + ciphertext).digest()
        return secret

    # ───────── deconstructors (attacker rules) ─────────

    def open_ciphertext(self, ciphertext: bytes, decapsulation_key: bytes) -> Optional[bytes]:
        """kemdecaps without implicit rejection: the secret, or None."""
        body = _split(ciphertext, TAG_CIPHERTEXT, FINGERPRINT_SIZE + HANDLE_SIZE, self.params.s_ct)
        if body is None or decapsulation_key[:2] != TAG_DECAPS_KEY:
            return None
        fingerprint, handle = body[:FINGERPRINT_SIZE], body[FINGERPRINT_SIZE:]
        if self._fingerprint(b"ek", decapsulation_key) != fingerprint:
            return None
        with self._lock:
            entry = self._handles.get(handle)
        if entry is None or entry[0] != fingerprint:
            return None
        return entry[1]

    def is_ciphertext(self, term: bytes) -> bool:
        return _split(term, TAG_CIPHERTEXT, FINGERPRINT_SIZE + HANDLE_SIZE, self.params.s_ct) is not None

    def is_decapsulation_key(self, term: bytes) -> bool:
        return len(term) == 34 and term[:2] == TAG_DECAPS_KEY
