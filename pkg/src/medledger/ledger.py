"""Transactions, blocks, hash-chain validation, and fork choice.

Every transaction is signed over its canonical bytes and carries a hash
of the same bytes; every block hashes a header that commits to parent,
producer, transaction root, and consensus proof. Flip one byte anywhere
and either decoding or validation rejects the artifact.

Fork choice is longest-chain with a lexicographic tip-hash tie-break,
which makes the rule total and order-independent.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import commands, crypto
from .consensus import ConsensusConfig, ConsensusProof, Mode, verify_proof
from .encoding import (
    DecodeError,
    Reader,
    encode_bytes,
    encode_str,
    encode_u32,
    encode_u64,
)

ZERO_HASH = b"\x00" * 32
_TX_TAG = b"MLTX1"
_BLOCK_TAG = b"MLBK1"

# transaction reject reasons
BAD_SIGNATURE = "BadSignature"
BAD_HASH = "BadHash"
NONCE_MISMATCH = "NonceMismatch"

# block reject reasons
BROKEN_HASH_LINK = "BrokenHashLink"
BAD_PROOF = "BadProof"
BAD_TX_ROOT = "BadTxRoot"
BAD_TIMESTAMP = "BadTimestamp"
INVALID_TX = "InvalidTx"

CLOCK_SKEW_MS = 5_000


class AssemblyError(Exception):
    """Block assembly violated a header rule (proof or timestamp)."""


def tx_signing_bytes(sender: str, nonce: int, command: bytes, timestamp: int) -> bytes:
    return (
        _TX_TAG
        + encode_str(sender)
        + encode_u64(nonce)
        + encode_bytes(command)
        + encode_u64(timestamp)
    )


@dataclass(frozen=True)
class SignedTransaction:
    sender: str
    nonce: int
    command: bytes
    timestamp: int
    signature: bytes
    tx_hash: bytes

    def signing_bytes(self) -> bytes:
        return tx_signing_bytes(self.sender, self.nonce, self.command, self.timestamp)

    def encode(self) -> bytes:
        return (
            self.signing_bytes()
            + encode_bytes(self.signature)
            + encode_bytes(self.tx_hash)
        )

    @classmethod
    def decode(cls, reader: Reader) -> "SignedTransaction":
        reader.expect_tag(_TX_TAG)
        sender = reader.str_()
        nonce = reader.u64()
        command = reader.bytes_()
        timestamp = reader.u64()
        signature = reader.bytes_()
        tx_hash = reader.bytes_()
        tx = cls(sender, nonce, command, timestamp, signature, tx_hash)
        if tx_hash != crypto.hash_bytes(tx.signing_bytes()):
            raise DecodeError("transaction hash does not match its fields")
        return tx

    def to_dict(self) -> dict:
        return {
            "sender": self.sender,
            "nonce": self.nonce,
            "command": self.command.decode("utf-8", errors="replace"),
            "timestamp": self.timestamp,
            "signature": self.signature.hex(),
            "tx_hash": self.tx_hash.hex(),
        }


def build_transaction(
    keypair: crypto.KeyPair, nonce: int, command: bytes, timestamp: int
) -> SignedTransaction:
    body = tx_signing_bytes(keypair.address, nonce, command, timestamp)
    return SignedTransaction(
        sender=keypair.address,
        nonce=nonce,
        command=command,
        timestamp=timestamp,
        signature=crypto.sign(keypair.private_key, body),
        tx_hash=crypto.hash_bytes(body),
    )


def validate_transaction(
    tx: SignedTransaction, sender_public_key: bytes, expected_nonce: int
) -> str | None:
    """None means accepted; otherwise the reject reason."""
    if tx.tx_hash != crypto.hash_bytes(tx.signing_bytes()):
        return BAD_HASH
    try:
        ok = crypto.verify(sender_public_key, tx.signing_bytes(), tx.signature)
    except crypto.MalformedKey:
        return BAD_SIGNATURE
    if not ok:
        return BAD_SIGNATURE
    if tx.nonce != expected_nonce:
        return NONCE_MISMATCH
    return None


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    timestamp: int
    producer: str
    tx_root: bytes

    def core_bytes(self) -> bytes:
        """The bytes consensus proofs bind to (everything but the proof)."""
        return (
            encode_u64(self.height)
            + encode_bytes(self.prev_hash)
            + encode_u64(self.timestamp)
            + encode_str(self.producer)
            + encode_bytes(self.tx_root)
        )


def compute_tx_root(transactions) -> bytes:
    """Digest over the ordered transaction hashes; order-sensitive."""
    h = hashlib.sha256()
    for tx in transactions:
        h.update(tx.tx_hash)
    return h.digest()


def compute_block_hash(header: BlockHeader, proof: ConsensusProof) -> bytes:
    return crypto.hash_bytes(header.core_bytes() + proof.encode())


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    timestamp: int
    producer: str
    tx_root: bytes
    transactions: tuple[SignedTransaction, ...]
    proof: ConsensusProof
    block_hash: bytes

    @property
    def header(self) -> BlockHeader:
        return BlockHeader(
            self.height, self.prev_hash, self.timestamp, self.producer, self.tx_root
        )

    def encode(self) -> bytes:
        out = (
            _BLOCK_TAG
            + self.header.core_bytes()
            + self.proof.encode()
            + encode_bytes(self.block_hash)
            + encode_u32(len(self.transactions))
        )
        for tx in self.transactions:
            out += tx.encode()
        return out

    @classmethod
    def decode(cls, reader: Reader) -> "Block":
        reader.expect_tag(_BLOCK_TAG)
        height = reader.u64()
        prev_hash = reader.bytes_()
        timestamp = reader.u64()
        producer = reader.str_()
        tx_root = reader.bytes_()
        proof = ConsensusProof.decode(reader)
        block_hash = reader.bytes_()
        count = reader.u32()
        txs = tuple(SignedTransaction.decode(reader) for _ in range(count))
        header = BlockHeader(height, prev_hash, timestamp, producer, tx_root)
        if block_hash != compute_block_hash(header, proof):
            raise DecodeError("block hash does not match its header")
        # The genesis tx_root pins the genesis spec hash instead of a
        # transaction digest; chain loading checks it against the spec.
        if proof.mode != Mode.GENESIS and tx_root != compute_tx_root(txs):
            raise DecodeError("tx root does not match transactions")
        return cls(
            height, prev_hash, timestamp, producer, tx_root, txs, proof, block_hash
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        reader = Reader(data)
        block = cls.decode(reader)
        reader.require_done()
        return block

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "timestamp": self.timestamp,
            "producer": self.producer,
            "tx_root": self.tx_root.hex(),
            "proof": self.proof.to_dict(),
            "block_hash": self.block_hash.hex(),
            "transactions": [tx.to_dict() for tx in self.transactions],
        }


def assemble_block(
    parent: Block,
    transactions,
    producer: str,
    proof: ConsensusProof,
    timestamp: int,
    config: ConsensusConfig,
) -> Block:
    if timestamp <= parent.timestamp:
        raise AssemblyError("block timestamp must exceed the parent's")
    txs = tuple(transactions)
    header = BlockHeader(
        height=parent.height + 1,
        prev_hash=parent.block_hash,
        timestamp=timestamp,
        producer=producer,
        tx_root=compute_tx_root(txs),
    )
    reason = verify_proof(header, proof, config)
    if reason is not None:
        raise AssemblyError(f"proof invalid for assembled header: {reason}")
    return Block(
        height=header.height,
        prev_hash=header.prev_hash,
        timestamp=header.timestamp,
        producer=header.producer,
        tx_root=header.tx_root,
        transactions=txs,
        proof=proof,
        block_hash=compute_block_hash(header, proof),
    )


def resolve_sender_key(tx: SignedTransaction, state) -> bytes | None:
    """Public key the signature must verify under.

    Registered senders use their on-ledger key; a self-registration is
    validated against the key it is registering, provided that key
    derives the sender address.
    """
    pk = state.public_key_of(tx.sender)
    if pk is not None:
        return pk
    reg_pk = commands.registration_public_key(tx.command)
    if reg_pk is not None and crypto.address_of(reg_pk) == tx.sender:
        return reg_pk
    return None


def validate_block(
    block: Block,
    parent: Block | None,
    config: ConsensusConfig,
    state,
    now_ms: int | None = None,
) -> str | None:
    """None means accepted. `state` supplies expected nonces and sender keys
    as of the parent block."""
    header = block.header
    if block.block_hash != compute_block_hash(header, block.proof):
        return BROKEN_HASH_LINK
    if block.proof.mode != Mode.GENESIS and block.tx_root != compute_tx_root(
        block.transactions
    ):
        return BAD_TX_ROOT
    if parent is None:
        if block.height != 0 or block.prev_hash != ZERO_HASH:
            return BROKEN_HASH_LINK
        if block.proof.mode != Mode.GENESIS:
            return f"{BAD_PROOF}:WrongMode"
        if block.transactions:
            return f"{INVALID_TX}:0:GenesisCarriesNoTransactions"
        return None
    if block.height != parent.height + 1:
        return BROKEN_HASH_LINK
    if block.prev_hash != parent.block_hash:
        return BROKEN_HASH_LINK
    if block.timestamp <= parent.timestamp:
        return BAD_TIMESTAMP
    if now_ms is not None and block.timestamp > now_ms + CLOCK_SKEW_MS:
        return BAD_TIMESTAMP
    reason = verify_proof(header, block.proof, config)
    if reason is not None:
        return f"{BAD_PROOF}:{reason}"
    in_block_nonces: dict[str, int] = {}
    in_block_keys: dict[str, bytes] = {}
    for index, tx in enumerate(block.transactions):
        pk = state.public_key_of(tx.sender) or in_block_keys.get(tx.sender)
        if pk is None:
            reg_pk = commands.registration_public_key(tx.command)
            if reg_pk is not None and crypto.address_of(reg_pk) == tx.sender:
                pk = reg_pk
        if pk is None:
            return f"{INVALID_TX}:{index}:{BAD_SIGNATURE}"
        expected = in_block_nonces.get(tx.sender)
        if expected is None:
            expected = state.expected_nonce(tx.sender)
        tx_reason = validate_transaction(tx, pk, expected)
        if tx_reason is not None:
            return f"{INVALID_TX}:{index}:{tx_reason}"
        in_block_nonces[tx.sender] = expected + 1
        # an account registered earlier in this block may transact later
        # in the same block; remember the key it registered under
        reg_pk = commands.registration_public_key(tx.command)
        if reg_pk is not None:
            in_block_keys.setdefault(crypto.address_of(reg_pk), reg_pk)
    return None


@dataclass
class Chain:
    """Ordered blocks from genesis; append-only in normal operation."""

    blocks: list[Block]

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    def __len__(self) -> int:
        return len(self.blocks)


def fork_choice(candidates: list[Chain]) -> Chain:
    """Longest chain wins; equal lengths fall back to the smaller tip hash."""
    if not candidates:
        raise ValueError("no valid candidate chain")
    return min(candidates, key=lambda c: (-len(c.blocks), c.tip.block_hash))
