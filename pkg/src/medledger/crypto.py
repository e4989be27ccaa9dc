"""Keys, signatures, content hashing, and sealed record envelopes.

One 32-byte master seed yields two deterministic subkeys: an Ed25519
signing key and an X25519 agreement key. The public identity is the
64-byte concatenation of both public halves, and an account address is
the first 20 bytes of SHA-256 over that identity, rendered as 0x-hex.

A sealed envelope encrypts a record once with a random content key
(AES-256-GCM) and wraps that content key separately for every recipient
via an ephemeral X25519 agreement + HKDF. Anyone holding a wrapped key
can add further recipients without touching the ciphertext; nobody else
can read a byte.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

SEED_LEN = 32
PUBLIC_KEY_LEN = 64  # ed25519 verify key (32) || x25519 public key (32)
SIGNATURE_LEN = 64
ADDRESS_BYTES = 20

_SIGN_INFO = b"medledger/sign/v1"
_WRAP_INFO = b"medledger/wrap/v1"
_KEK_INFO = b"medledger/kek/v1/"


class CryptoError(Exception):
    """Base class for key and envelope failures."""


class SeedTooShort(CryptoError):
    pass


class MalformedKey(CryptoError):
    pass


class NotARecipient(CryptoError):
    pass


class CiphertextTampered(CryptoError):
    pass


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest of the input."""
    return hashlib.sha256(data).digest()


def address_of(public_key: bytes) -> str:
    if len(public_key) != PUBLIC_KEY_LEN:
        raise MalformedKey(f"public key must be {PUBLIC_KEY_LEN} bytes")
    return "0x" + hash_bytes(public_key)[:ADDRESS_BYTES].hex()


def _hkdf(key_material: bytes, info: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=32, salt=None, info=info
    ).derive(key_material)


@dataclass(frozen=True)
class KeyPair:
    """Signing + agreement identity derived from one master seed.

    private_key is the master seed and never appears in any serialized
    ledger or state artifact; everything public derives from public_key.
    """

    public_key: bytes
    private_key: bytes
    address: str

    def signing_key(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(
            _hkdf(self.private_key, _SIGN_INFO)
        )

    def agreement_key(self) -> X25519PrivateKey:
        return X25519PrivateKey.from_private_bytes(
            _hkdf(self.private_key, _WRAP_INFO)
        )


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Derive a keypair from the seed, or from fresh OS entropy."""
    if seed is None:
        master = os.urandom(SEED_LEN)
    else:
        if len(seed) < SEED_LEN:
            raise SeedTooShort(f"seed must be at least {SEED_LEN} bytes")
        master = seed if len(seed) == SEED_LEN else hash_bytes(seed)
    sign_pub = (
        Ed25519PrivateKey.from_private_bytes(_hkdf(master, _SIGN_INFO))
        .public_key()
        .public_bytes_raw()
    )
    wrap_pub = (
        X25519PrivateKey.from_private_bytes(_hkdf(master, _WRAP_INFO))
        .public_key()
        .public_bytes_raw()
    )
    public = sign_pub + wrap_pub
    return KeyPair(public_key=public, private_key=master, address=address_of(public))


def sign(private_key: bytes, message: bytes) -> bytes:
    """Ed25519 signature over the message; deterministic per (key, message)."""
    if len(private_key) != SEED_LEN:
        raise MalformedKey(f"private key must be {SEED_LEN} bytes")
    return Ed25519PrivateKey.from_private_bytes(
        _hkdf(private_key, _SIGN_INFO)
    ).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    if len(public_key) != PUBLIC_KEY_LEN:
        raise MalformedKey(f"public key must be {PUBLIC_KEY_LEN} bytes")
    if len(signature) != SIGNATURE_LEN:
        raise MalformedKey(f"signature must be {SIGNATURE_LEN} bytes")
    try:
        Ed25519PublicKey.from_public_bytes(public_key[:32]).verify(
            signature, message
        )
        return True
    except InvalidSignature:
        return False


@dataclass(frozen=True)
class WrappedKey:
    """Content key encrypted to one recipient: ephemeral pub + AEAD blob."""

    ephemeral_public: bytes
    nonce: bytes
    ciphertext: bytes

    def to_dict(self) -> dict:
        return {
            "epk": self.ephemeral_public.hex(),
            "nonce": self.nonce.hex(),
            "ct": self.ciphertext.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WrappedKey":
        return cls(
            ephemeral_public=bytes.fromhex(d["epk"]),
            nonce=bytes.fromhex(d["nonce"]),
            ciphertext=bytes.fromhex(d["ct"]),
        )


@dataclass(frozen=True)
class SealedEnvelope:
    """AEAD ciphertext plus per-recipient wrapped content keys."""

    ciphertext: bytes
    wrapped_keys: dict[str, WrappedKey]  # recipient address -> wrap
    plaintext_digest: bytes
    nonce_material: bytes

    def recipients(self) -> list[str]:
        return sorted(self.wrapped_keys)

    def to_dict(self) -> dict:
        return {
            "ciphertext": self.ciphertext.hex(),
            "wrapped_keys": {
                addr: self.wrapped_keys[addr].to_dict()
                for addr in sorted(self.wrapped_keys)
            },
            "plaintext_digest": self.plaintext_digest.hex(),
            "nonce_material": self.nonce_material.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SealedEnvelope":
        return cls(
            ciphertext=bytes.fromhex(d["ciphertext"]),
            wrapped_keys={
                addr: WrappedKey.from_dict(w)
                for addr, w in d["wrapped_keys"].items()
            },
            plaintext_digest=bytes.fromhex(d["plaintext_digest"]),
            nonce_material=bytes.fromhex(d["nonce_material"]),
        )


def _kek_for(recipient_address: str, shared_secret: bytes) -> bytes:
    # Bind the wrap to the recipient address so blobs are not interchangeable.
    return _hkdf(shared_secret, _KEK_INFO + recipient_address.encode("ascii"))


def _wrap_content_key(content_key: bytes, recipient_public: bytes) -> WrappedKey:
    if len(recipient_public) != PUBLIC_KEY_LEN:
        raise MalformedKey(f"recipient key must be {PUBLIC_KEY_LEN} bytes")
    recipient_x = X25519PublicKey.from_public_bytes(recipient_public[32:])
    eph = X25519PrivateKey.generate()
    shared = eph.exchange(recipient_x)
    kek = _kek_for(address_of(recipient_public), shared)
    nonce = os.urandom(12)
    ct = AESGCM(kek).encrypt(nonce, content_key, None)
    return WrappedKey(
        ephemeral_public=eph.public_key().public_bytes_raw(),
        nonce=nonce,
        ciphertext=ct,
    )


def _unwrap_content_key(wrap: WrappedKey, keypair: KeyPair) -> bytes:
    shared = keypair.agreement_key().exchange(
        X25519PublicKey.from_public_bytes(wrap.ephemeral_public)
    )
    kek = _kek_for(keypair.address, shared)
    try:
        return AESGCM(kek).decrypt(wrap.nonce, wrap.ciphertext, None)
    except InvalidTag as exc:
        raise CiphertextTampered("wrapped key failed authentication") from exc


def seal(plaintext: bytes, recipients: list[bytes]) -> SealedEnvelope:
    """Encrypt plaintext so that exactly the listed recipients can open it."""
    if not recipients:
        raise CryptoError("recipient list must not be empty")
    content_key = os.urandom(32)
    nonce = os.urandom(12)
    ciphertext = AESGCM(content_key).encrypt(nonce, plaintext, None)
    wrapped = {}
    for pub in recipients:
        wrapped[address_of(pub)] = _wrap_content_key(content_key, pub)
    return SealedEnvelope(
        ciphertext=ciphertext,
        wrapped_keys=wrapped,
        plaintext_digest=hash_bytes(plaintext),
        nonce_material=nonce,
    )


def open_envelope(envelope: SealedEnvelope, keypair: KeyPair) -> bytes:
    """Recover the plaintext; only listed recipients hold a usable wrap."""
    wrap = envelope.wrapped_keys.get(keypair.address)
    if wrap is None:
        raise NotARecipient(f"{keypair.address} holds no wrapped key")
    content_key = _unwrap_content_key(wrap, keypair)
    try:
        return AESGCM(content_key).decrypt(
            envelope.nonce_material, envelope.ciphertext, None
        )
    except InvalidTag as exc:
        raise CiphertextTampered("ciphertext failed authentication") from exc


def rewrap(
    envelope: SealedEnvelope, granter: KeyPair, new_recipient: bytes
) -> SealedEnvelope:
    """Extend the recipient set without re-encrypting the record."""
    wrap = envelope.wrapped_keys.get(granter.address)
    if wrap is None:
        raise NotARecipient("granter is not a recipient of this envelope")
    content_key = _unwrap_content_key(wrap, granter)
    wrapped = dict(envelope.wrapped_keys)
    wrapped[address_of(new_recipient)] = _wrap_content_key(
        content_key, new_recipient
    )
    return SealedEnvelope(
        ciphertext=envelope.ciphertext,
        wrapped_keys=wrapped,
        plaintext_digest=envelope.plaintext_digest,
        nonce_material=envelope.nonce_material,
    )


def save_private_key(path, keypair: KeyPair) -> None:
    """Write the master seed as hex with owner-only permissions."""
    import pathlib

    p = pathlib.Path(path)
    p.write_text(keypair.private_key.hex() + "\n")
    p.chmod(0o600)


def load_keypair(path) -> KeyPair:
    import pathlib

    raw = pathlib.Path(path).read_text().strip()
    try:
        seed = bytes.fromhex(raw)
    except ValueError as exc:
        raise MalformedKey(f"key file is not hex: {path}") from exc
    if len(seed) != SEED_LEN:
        raise MalformedKey(f"key file must hold {SEED_LEN} bytes")
    return generate_keypair(seed)
