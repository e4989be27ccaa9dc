"""Single-node runtime: mempool, block production, durable storage, and
transaction receipts.

All mutation funnels through one lock: HTTP handlers enqueue
transactions, a producer loop turns the mempool into blocks at the
consensus cadence, and every applied transaction resolves its receipt
with the audit outcome so callers can distinguish "committed and
applied" from "committed but refused".
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from . import commands, crypto
from .consensus import Mode, dpos_producer, pos_select, pow_mine
from .genesis import GenesisSpec
from .ledger import (
    Block,
    BlockHeader,
    SignedTransaction,
    assemble_block,
    compute_tx_root,
    resolve_sender_key,
    validate_transaction,
)
from .state import State
from .storage import NodeStore

PENDING = "pending"
COMMITTED = "committed"
REJECTED = "rejected"

SENDER_MISMATCH = "SenderMismatch"
NONCE_MISMATCH = "NonceMismatch"


class SubmitRejected(Exception):
    def __init__(self, reason: str, conflict: bool = False):
        super().__init__(reason)
        self.reason = reason
        self.conflict = conflict  # maps to HTTP 409


def select_transactions(
    state: State, mempool: dict[bytes, SignedTransaction], cap: int
) -> list[SignedTransaction]:
    """Deterministic block fill: senders in address order, nonces
    contiguous from each sender's expected value."""
    by_sender: dict[str, list[SignedTransaction]] = {}
    for tx in mempool.values():
        by_sender.setdefault(tx.sender, []).append(tx)
    picked: list[SignedTransaction] = []
    for sender in sorted(by_sender):
        expected = state.expected_nonce(sender)
        for tx in sorted(by_sender[sender], key=lambda t: t.nonce):
            if len(picked) >= cap:
                return picked
            if tx.nonce == expected:
                picked.append(tx)
                expected += 1
    return picked


class Node:
    def __init__(
        self,
        store: NodeStore,
        genesis_spec: GenesisSpec,
        chain: list[Block],
        state: State,
        producer_address: str | None = None,
        snapshot_interval: int = 10,
        max_txs_per_block: int = 100,
    ):
        self.store = store
        self.genesis_spec = genesis_spec
        self.consensus = genesis_spec.consensus
        self.chain = chain
        self.state = state
        self.producer_address = producer_address or genesis_spec.admin_address
        self.snapshot_interval = snapshot_interval
        self.max_txs_per_block = max_txs_per_block
        self.mempool: dict[bytes, SignedTransaction] = {}
        self.receipts: dict[bytes, dict] = {}
        self.committed_index: dict[bytes, int] = {
            tx.tx_hash: block.height
            for block in chain
            for tx in block.transactions
        }
        self.lock = threading.RLock()
        self._stop = threading.Event()
        self._producer_thread: threading.Thread | None = None

    # ---- lifecycle ---------------------------------------------------------

    @classmethod
    def initialize(cls, data_dir: Path, genesis_spec: GenesisSpec) -> None:
        NodeStore.initialize(data_dir, genesis_spec)

    @classmethod
    def open(cls, data_dir: Path, **kwargs) -> "Node":
        store = NodeStore(data_dir)
        spec, chain, state = store.recover()
        return cls(store, spec, chain, state, **kwargs)

    @property
    def tip(self) -> Block:
        return self.chain[-1]

    def health(self) -> dict:
        with self.lock:
            return {
                "chain_id": self.genesis_spec.chain_id,
                "height": self.tip.height,
                "tip": self.tip.block_hash.hex(),
                "mempool": len(self.mempool),
                "mode": self.consensus.mode.value,
            }

    # ---- submission ---------------------------------------------------------

    def _pending_count(self, sender: str) -> int:
        return sum(1 for tx in self.mempool.values() if tx.sender == sender)

    def _pending_registration_key(self, address: str) -> bytes | None:
        """Key registered for `address` by a transaction still in the pool;
        lets dependent transactions queue behind their registration."""
        for tx in self.mempool.values():
            pk = commands.registration_public_key(tx.command)
            if pk is not None and crypto.address_of(pk) == address:
                return pk
        return None

    def submit(self, tx: SignedTransaction) -> dict:
        """Validate, dry-run against committed state, and enqueue."""
        with self.lock:
            if tx.tx_hash in self.committed_index:
                return self.receipt(tx.tx_hash)
            if tx.tx_hash in self.mempool:
                return self.receipt(tx.tx_hash)
            pk = resolve_sender_key(tx, self.state) or self._pending_registration_key(
                tx.sender
            )
            if pk is None:
                raise SubmitRejected("BadSignature")
            expected = self.state.expected_nonce(tx.sender) + self._pending_count(
                tx.sender
            )
            reason = validate_transaction(tx, pk, expected)
            if reason == NONCE_MISMATCH:
                raise SubmitRejected(NONCE_MISMATCH, conflict=True)
            if reason is not None:
                raise SubmitRejected(reason)
            # dry-run on a throwaway copy so obvious refusals fail fast;
            # races inside one block interval still surface via the receipt
            if self._pending_count(tx.sender) == 0:
                scratch = State.from_snapshot_dict(self.state.to_snapshot_dict())
                entry = scratch.apply(tx, self.tip.height + 1)
                if entry.outcome == "deny":
                    raise SubmitRejected(
                        entry.reason,
                        conflict=entry.reason in ("SlotTaken", "DuplicateActiveGrant"),
                    )
            self.mempool[tx.tx_hash] = tx
            self.receipts[tx.tx_hash] = {
                "tx_hash": tx.tx_hash.hex(),
                "status": PENDING,
            }
            return self.receipt(tx.tx_hash)

    def receipt(self, tx_hash: bytes) -> dict:
        with self.lock:
            if tx_hash in self.receipts:
                return dict(self.receipts[tx_hash])
            height = self.committed_index.get(tx_hash)
            if height is not None:
                return {
                    "tx_hash": tx_hash.hex(),
                    "status": COMMITTED,
                    "height": height,
                }
            return {"tx_hash": tx_hash.hex(), "status": "unknown"}

    # ---- block production ------------------------------------------------------

    def _next_proof(self, header_core: bytes, height: int):
        mode = self.consensus.mode
        if mode == Mode.DPOS:
            proof = dpos_producer(height, self.consensus.delegates)
            return proof if proof.producer == self.producer_address else None
        if mode == Mode.POS:
            proof = pos_select(self.tip.block_hash, self.consensus.stakes)
            return proof if proof.selected == self.producer_address else None
        return pow_mine(
            header_core,
            self.consensus.pow_difficulty_bits,
            max_attempts=self.consensus.pow_max_attempts,
        )

    def produce_block(self, now_ms: int | None = None) -> Block | None:
        """Build, persist, and apply one block from the mempool; returns
        None when there is nothing to do or this node is not scheduled."""
        with self.lock:
            txs = select_transactions(self.state, self.mempool, self.max_txs_per_block)
            if not txs:
                return None
            now = int(time.time() * 1000) if now_ms is None else now_ms
            timestamp = max(now, self.tip.timestamp + 1)
            height = self.tip.height + 1
            mode = self.consensus.mode
            if mode == Mode.POW:
                header = BlockHeader(
                    height=height,
                    prev_hash=self.tip.block_hash,
                    timestamp=timestamp,
                    producer=self.producer_address,
                    tx_root=compute_tx_root(txs),
                )
                proof = self._next_proof(header.core_bytes(), height)
            else:
                proof = self._next_proof(b"", height)
            if proof is None:
                return None  # another identity owns this slot
            block = assemble_block(
                self.tip, txs, self.producer_address, proof, timestamp, self.consensus
            )
            self.store.append_block(block)
            for tx in block.transactions:
                entry = self.state.apply(tx, block.height)
                self.mempool.pop(tx.tx_hash, None)
                self.committed_index[tx.tx_hash] = block.height
                self.receipts[tx.tx_hash] = {
                    "tx_hash": tx.tx_hash.hex(),
                    "status": COMMITTED,
                    "height": block.height,
                    "outcome": entry.outcome,
                    "reason": entry.reason,
                }
            self.chain.append(block)
            # anything left with a consumed nonce can never commit
            for tx_hash, pending in list(self.mempool.items()):
                if pending.nonce < self.state.expected_nonce(pending.sender):
                    del self.mempool[tx_hash]
                    self.receipts[tx_hash] = {
                        "tx_hash": tx_hash.hex(),
                        "status": REJECTED,
                        "reason": NONCE_MISMATCH,
                    }
            if block.height % self.snapshot_interval == 0:
                self.store.write_snapshot(block.height, self.state)
            return block

    # ---- background producer ------------------------------------------------------

    def start_producer(self) -> None:
        if self._producer_thread is not None:
            return
        self._stop.clear()
        interval_s = self.consensus.target_block_interval_ms / 1000.0

        def loop():
            while not self._stop.wait(interval_s):
                try:
                    self.produce_block()
                except Exception:  # pragma: no cover - keeps the loop alive
                    import logging

                    logging.getLogger(__name__).exception("block production failed")

        self._producer_thread = threading.Thread(
            target=loop, name="block-producer", daemon=True
        )
        self._producer_thread.start()

    def stop_producer(self) -> None:
        self._stop.set()
        if self._producer_thread is not None:
            self._producer_thread.join(timeout=5)
            self._producer_thread = None

    def close(self) -> None:
        """Flush a final snapshot and stop producing."""
        self.stop_producer()
        with self.lock:
            self.store.write_snapshot(self.tip.height, self.state)
