"""ML-DSA / ML-KEM provider backed by liboqs-python.

Requires the ``liboqs-python`` package (imported as ``oqs``) built against a
liboqs that enables the FIPS 203/204 mechanisms named in the suite registry.
"""

import logging

from pqtoken.providers import (
    CryptoProvider,
    DecapsulationError,
    Encapsulation,
    KemKeyPair,
    ProviderError,
    ProviderUnavailable,
    SigningKeyPair,
)

logger = logging.getLogger(__name__)

try:
    import oqs
except (ImportError, OSError, RuntimeError, SystemExit):
    oqs = None


class LiboqsProvider(CryptoProvider):
    name = "liboqs"

    def __init__(self, suite):
        super().__init__(suite)
        if oqs is None:
            raise ProviderUnavailable("liboqs-python is not installed (pip install liboqs-python)")
        if self.suite.dsa not in oqs.get_enabled_sig_mechanisms():
            raise ProviderUnavailable(f"{self.suite.dsa} is not enabled in this liboqs build")
        if self.suite.kem not in oqs.get_enabled_kem_mechanisms():
            raise ProviderUnavailable(f"{self.suite.kem} is not enabled in this liboqs build")
        logger.debug(f"liboqs provider ready: {self.suite.dsa} / {self.suite.kem} / {self.suite.hash_name}")

    def generate_signing_keypair(self) -> SigningKeyPair:
        with oqs.Signature(self.suite.dsa) as signer:
            public_key = signer.generate_keypair()
            private_key = signer.export_secret_key()
        return SigningKeyPair(private_key=bytes(private_key), public_key=bytes(public_key))

    def sign(self, message: bytes, private_key: bytes) -> bytes:
        try:
            with oqs.Signature(self.suite.dsa, secret_key=private_key) as signer:
                signature = signer.sign(message)
        except Exception:
            # never let the key material end up in the exception context
            raise ProviderError(f"{self.suite.dsa} signing failed") from None
        return bytes(signature)

    def verify(self, signature: bytes, message: bytes, public_key: bytes) -> bool:
        if len(signature) != self.params.s_sig or len(public_key) != self.params.s_key:
            return False
        try:
            with oqs.Signature(self.suite.dsa) as verifier:
                return bool(verifier.verify(message, signature, public_key))
        except Exception:
            return False

    def kem_generate(self) -> KemKeyPair:
        with oqs.KeyEncapsulation(self.suite.kem) as kem:
            encapsulation_key = kem.generate_keypair()
            decapsulation_key = kem.export_secret_key()
        return KemKeyPair(decapsulation_key=bytes(decapsulation_key), encapsulation_key=bytes(encapsulation_key))

    def kem_encapsulate(self, encapsulation_key: bytes) -> Encapsulation:
        if len(encapsulation_key) != self.params.s_ek:
            raise ProviderError(f"encapsulation key must be {self.params.s_ek} bytes")
        try:
            with oqs.KeyEncapsulation(self.suite.kem) as kem:
                ciphertext, secret = kem.encap_secret(encapsulation_key)
        except Exception:
            raise ProviderError(f"{self.suite.kem} encapsulation failed") from None
        return Encapsulation(ciphertext=bytes(ciphertext), secret=self._check_secret(bytes(secret)))

    def kem_decapsulate(self, ciphertext: bytes, decapsulation_key: bytes) -> bytes:
        # ML-KEM rejects implicitly: a corrupted ciphertext of the right length
        # yields an unrelated secret, caught later by the approval hash.
        if len(ciphertext) != self.params.s_ct:
            raise DecapsulationError(f"ciphertext must be {self.params.s_ct} bytes, got {len(ciphertext)}")
        try:
            with oqs.KeyEncapsulation(self.suite.kem, secret_key=decapsulation_key) as kem:
                secret = kem.decap_secret(ciphertext)
        except Exception:
            raise DecapsulationError(f"{self.suite.kem} decapsulation failed") from None
        return self._check_secret(bytes(secret))
