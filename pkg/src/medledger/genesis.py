"""Genesis: the height-0 block and the configuration it pins.

The genesis block carries no transactions; instead its tx_root is the
digest of the canonical genesis spec, so every node that accepts the
block has committed to the same first admin, consensus rules, and
scheduling grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto
from .consensus import GENESIS_PROOF, ConsensusConfig
from .encoding import canonical_json
from .ledger import Block, BlockHeader, ZERO_HASH, compute_block_hash
from .state import SystemVars


@dataclass(frozen=True)
class GenesisSpec:
    admin_address: str
    admin_public_key: bytes
    consensus: ConsensusConfig
    system_vars: SystemVars
    chain_id: str
    admin_profile: dict = field(default_factory=lambda: {"name": "admin"})

    def __post_init__(self):
        if crypto.address_of(self.admin_public_key) != self.admin_address:
            raise ValueError("admin address does not match the admin public key")
        self.system_vars.validate()

    def to_dict(self) -> dict:
        return {
            "admin_address": self.admin_address,
            "admin_public_key": self.admin_public_key.hex(),
            "consensus": self.consensus.to_dict(),
            "system_vars": self.system_vars.to_dict(),
            "chain_id": self.chain_id,
            "admin_profile": dict(sorted(self.admin_profile.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenesisSpec":
        return cls(
            admin_address=d["admin_address"],
            admin_public_key=bytes.fromhex(d["admin_public_key"]),
            consensus=ConsensusConfig.from_dict(d["consensus"]),
            system_vars=SystemVars.from_dict(d["system_vars"]),
            chain_id=d["chain_id"],
            admin_profile=dict(d.get("admin_profile", {"name": "admin"})),
        )

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    def spec_hash(self) -> bytes:
        return crypto.hash_bytes(self.canonical_bytes())


def make_genesis_block(spec: GenesisSpec) -> Block:
    header = BlockHeader(
        height=0,
        prev_hash=ZERO_HASH,
        timestamp=0,
        producer=spec.admin_address,
        tx_root=spec.spec_hash(),
    )
    return Block(
        height=header.height,
        prev_hash=header.prev_hash,
        timestamp=header.timestamp,
        producer=header.producer,
        tx_root=header.tx_root,
        transactions=(),
        proof=GENESIS_PROOF,
        block_hash=compute_block_hash(header, GENESIS_PROOF),
    )
