"""Pluggable block-production rules: hash-puzzle work, stake-weighted
selection, and round-robin delegate slots.

Every rule produces a proof that any node can verify against the block
header and the shared consensus configuration alone; no trust in the
producer is required. Proof creation and verification are pure
functions, so proofs survive serialization and replay unchanged.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .encoding import (
    DecodeError,
    Reader,
    encode_bytes,
    encode_str,
    encode_u64,
)

_PROOF_TAG = b"MLPF1"

# verify_proof reject reasons
WRONG_MODE = "WrongMode"
INSUFFICIENT_WORK = "InsufficientWork"
WRONG_STAKEHOLDER = "WrongStakeholder"
WRONG_SLOT_PRODUCER = "WrongSlotProducer"


class Mode(str, Enum):
    POW = "pow"
    POS = "pos"
    DPOS = "dpos"
    GENESIS = "genesis"  # the height-0 block carries this placeholder


class MiningExhausted(Exception):
    """Nonce search hit the configured attempt cap."""


@dataclass(frozen=True)
class ConsensusConfig:
    mode: Mode
    pow_difficulty_bits: int = 0
    stakes: dict[str, int] = field(default_factory=dict)
    delegates: tuple[str, ...] = ()
    target_block_interval_ms: int = 1000
    pow_max_attempts: int = 1 << 26

    def __post_init__(self):
        if self.mode == Mode.POW and not 0 <= self.pow_difficulty_bits <= 32:
            raise ValueError("pow_difficulty_bits must be in [0, 32]")
        if self.mode == Mode.POS:
            if not self.stakes or any(s <= 0 for s in self.stakes.values()):
                raise ValueError("pos requires a non-empty map of positive stakes")
        if self.mode == Mode.DPOS and not self.delegates:
            raise ValueError("dpos requires a non-empty delegate list")
        if self.target_block_interval_ms <= 0:
            raise ValueError("target_block_interval_ms must be positive")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "pow_difficulty_bits": self.pow_difficulty_bits,
            "stakes": dict(sorted(self.stakes.items())),
            "delegates": list(self.delegates),
            "target_block_interval_ms": self.target_block_interval_ms,
            "pow_max_attempts": self.pow_max_attempts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConsensusConfig":
        return cls(
            mode=Mode(d["mode"]),
            pow_difficulty_bits=int(d.get("pow_difficulty_bits", 0)),
            stakes={k: int(v) for k, v in d.get("stakes", {}).items()},
            delegates=tuple(d.get("delegates", ())),
            target_block_interval_ms=int(d.get("target_block_interval_ms", 1000)),
            pow_max_attempts=int(d.get("pow_max_attempts", 1 << 26)),
        )


@dataclass(frozen=True)
class ConsensusProof:
    """Mode-tagged evidence that a header was produced by the rules."""

    mode: Mode
    nonce: int = 0  # pow
    seed: bytes = b""  # pos: hash the selection was drawn from
    selected: str = ""  # pos: chosen stakeholder
    slot: int = 0  # dpos: height-indexed production slot
    producer: str = ""  # dpos: delegate owning the slot

    def encode(self) -> bytes:
        return (
            _PROOF_TAG
            + encode_str(self.mode.value)
            + encode_u64(self.nonce)
            + encode_bytes(self.seed)
            + encode_str(self.selected)
            + encode_u64(self.slot)
            + encode_str(self.producer)
        )

    @classmethod
    def decode(cls, reader: Reader) -> "ConsensusProof":
        reader.expect_tag(_PROOF_TAG)
        mode_raw = reader.str_()
        try:
            mode = Mode(mode_raw)
        except ValueError as exc:
            raise DecodeError(f"unknown consensus mode {mode_raw!r}") from exc
        return cls(
            mode=mode,
            nonce=reader.u64(),
            seed=reader.bytes_(),
            selected=reader.str_(),
            slot=reader.u64(),
            producer=reader.str_(),
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "nonce": self.nonce,
            "seed": self.seed.hex(),
            "selected": self.selected,
            "slot": self.slot,
            "producer": self.producer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConsensusProof":
        return cls(
            mode=Mode(d["mode"]),
            nonce=int(d.get("nonce", 0)),
            seed=bytes.fromhex(d.get("seed", "")),
            selected=d.get("selected", ""),
            slot=int(d.get("slot", 0)),
            producer=d.get("producer", ""),
        )


GENESIS_PROOF = ConsensusProof(mode=Mode.GENESIS)


def leading_zero_bits(digest: bytes) -> int:
    bits = 0
    for byte in digest:
        if byte == 0:
            bits += 8
            continue
        for shift in range(7, -1, -1):
            if byte >> shift:
                return bits + (7 - shift)
        return bits
    return bits


def _pow_digest(header_bytes: bytes, nonce: int) -> bytes:
    return hashlib.sha256(header_bytes + encode_u64(nonce)).digest()


def pow_check(header_bytes: bytes, nonce: int, difficulty_bits: int) -> bool:
    return leading_zero_bits(_pow_digest(header_bytes, nonce)) >= difficulty_bits


def pow_mine(
    header_bytes: bytes,
    difficulty_bits: int,
    nonce_start: int = 0,
    max_attempts: int = 1 << 26,
) -> ConsensusProof:
    """Scan nonces upward from nonce_start until the digest clears the bar.

    Returns the first qualifying nonce; attempts used is
    nonce - nonce_start + 1.
    """
    if not 0 <= difficulty_bits <= 32:
        raise ValueError("difficulty_bits must be in [0, 32]")
    # Reuse the hashed header prefix; only the nonce suffix changes. The
    # leading-zero test compares the first 32 digest bits against a
    # threshold, which is equivalent for difficulties up to 32.
    base = hashlib.sha256(header_bytes)
    threshold = 1 << (32 - difficulty_bits)
    from_bytes = int.from_bytes
    nonce = nonce_start
    end = nonce_start + max_attempts
    while nonce < end:
        h = base.copy()
        h.update(nonce.to_bytes(8, "big"))
        if from_bytes(h.digest()[:4], "big") < threshold:
            return ConsensusProof(mode=Mode.POW, nonce=nonce)
        nonce += 1
    raise MiningExhausted(
        f"no nonce below difficulty {difficulty_bits} in {max_attempts} attempts"
    )


def pos_select(prev_block_hash: bytes, stakes: dict[str, int]) -> ConsensusProof:
    """Stake-weighted deterministic draw seeded by the previous block hash.

    The draw is hash(prev_block_hash) mod total stake; holders own
    contiguous intervals in ascending address order.
    """
    if not stakes:
        raise ValueError("stakes must not be empty")
    total = sum(stakes.values())
    if total <= 0:
        raise ValueError("total stake must be positive")
    seed = hashlib.sha256(prev_block_hash).digest()
    r = int.from_bytes(seed, "big") % total
    cumulative = 0
    for addr in sorted(stakes):
        cumulative += stakes[addr]
        if r < cumulative:
            return ConsensusProof(mode=Mode.POS, seed=prev_block_hash, selected=addr)
    raise AssertionError("unreachable: r < total by construction")


def dpos_producer(height: int, delegates: tuple[str, ...]) -> ConsensusProof:
    """Round-robin slot assignment over the fixed delegate list."""
    if not delegates:
        raise ValueError("delegates must not be empty")
    return ConsensusProof(
        mode=Mode.DPOS,
        slot=height,
        producer=delegates[height % len(delegates)],
    )


def verify_proof(header, proof: ConsensusProof, config: ConsensusConfig) -> str | None:
    """Check the proof against exactly this header; None means accepted.

    `header` is a ledger BlockHeader (duck-typed here to keep the
    dependency one-directional).
    """
    if proof.mode != config.mode:
        return WRONG_MODE
    if config.mode == Mode.POW:
        if not pow_check(header.core_bytes(), proof.nonce, config.pow_difficulty_bits):
            return INSUFFICIENT_WORK
        return None
    if config.mode == Mode.POS:
        expected = pos_select(header.prev_hash, config.stakes)
        if proof.seed != header.prev_hash:
            return WRONG_STAKEHOLDER
        if proof.selected != expected.selected or header.producer != expected.selected:
            return WRONG_STAKEHOLDER
        return None
    if config.mode == Mode.DPOS:
        expected = dpos_producer(header.height, config.delegates)
        if proof.slot != header.height:
            return WRONG_SLOT_PRODUCER
        if proof.producer != expected.producer or header.producer != expected.producer:
            return WRONG_SLOT_PRODUCER
        return None
    return WRONG_MODE
