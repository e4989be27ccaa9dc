"""Deterministic discrete-event simulation of a multi-node network.

Virtual time only: every message and every block production is an event
in a single heap, ordered by (time, recipient, payload key, sequence),
and all randomness (latency draws, mining nonce starts) comes from
seeded generators consumed in event order. Two simulations with the
same config therefore produce byte-equal event logs and identical final
states.

Block production follows the active consensus mode. Hash-puzzle mining
really mines the candidate header; the virtual time charged is
attempts divided by the configured per-node hash rate. Stake selection
and delegate slots schedule a production timer only on the node that
owns the next block.

Fault models: a silent node stops emitting anything; an equivocating
node keeps extending a private branch and floods it when `heal` is
called. A partition drops cross-group deliveries until healed.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from . import crypto
from .consensus import (
    ConsensusConfig,
    Mode,
    dpos_producer,
    pos_select,
    pow_mine,
)
from .encoding import canonical_json
from .genesis import GenesisSpec, make_genesis_block
from .ledger import (
    Block,
    BlockHeader,
    Chain,
    SignedTransaction,
    assemble_block,
    compute_tx_root,
    fork_choice,
    resolve_sender_key,
    validate_block,
    validate_transaction,
)
from .state import State, SystemVars

SILENT = "silent"
EQUIVOCATING = "equivocating"


@dataclass
class SimConfig:
    node_count: int
    seed: int = 0
    latency_ms: tuple[float, float] = (1.0, 5.0)
    fanout: int = 0  # 0 = every peer
    faults: dict[int, str] = field(default_factory=dict)
    mode: Mode = Mode.DPOS
    pow_difficulty_bits: int = 12
    target_block_interval_ms: int = 100
    pow_hash_rate: float = 2.0  # attempts per simulated millisecond, per node
    stakes_by_node: dict[int, int] = field(default_factory=dict)
    max_txs_per_block: int = 20
    chain_id: str = "sim"

    def validate(self) -> None:
        if self.node_count < 1:
            raise ValueError("node_count must be at least 1")
        if self.mode not in (Mode.POW, Mode.POS, Mode.DPOS):
            raise ValueError(f"mode {self.mode} cannot drive block production")
        if not 0 < self.latency_ms[0] <= self.latency_ms[1]:
            raise ValueError("latency bounds must be positive and ordered")
        for node_id, kind in self.faults.items():
            if not 0 <= node_id < self.node_count:
                raise ValueError(f"faulty node {node_id} outside the node set")
            if kind not in (SILENT, EQUIVOCATING):
                raise ValueError(f"unknown fault kind {kind!r}")
        if self.pow_hash_rate <= 0:
            raise ValueError("pow_hash_rate must be positive")


def _det_keypair(label: str) -> crypto.KeyPair:
    return crypto.generate_keypair(crypto.hash_bytes(label.encode()))


class SimNode:
    def __init__(self, node_id: int, keypair: crypto.KeyPair, sim: "Simulation"):
        self.id = node_id
        self.keypair = keypair
        self.sim = sim
        self.peers: list[int] = []
        self.fault: str | None = None
        self.rng = random.Random(f"{sim.config.seed}/node/{node_id}")
        self.generation = 0

        self.blocks: dict[bytes, Block] = {sim.genesis.block_hash: sim.genesis}
        self.valid_blocks: set[bytes] = {sim.genesis.block_hash}
        self.orphans: dict[bytes, list[Block]] = {}  # prev_hash -> waiting blocks
        self.chain: list[Block] = [sim.genesis]
        self.state: State = State.from_genesis(sim.genesis_spec)
        self.mempool: dict[bytes, SignedTransaction] = {}
        self.committed: set[bytes] = set()
        self.seen_tx: set[bytes] = set()
        self.rejected_blocks: list[tuple[bytes, str]] = []
        self.last_nonce_start = 0
        self.healed_private: list[bytes] = []

    @property
    def tip(self) -> Block:
        return self.chain[-1]

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "tip": self.tip.block_hash.hex(),
            "height": self.tip.height,
            "mempool": len(self.mempool),
            "fault": self.fault,
        }


class Simulation:
    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.clock = 0.0
        self._heap: list = []
        self._seq = 0
        self.production_enabled = True
        self.rng = random.Random(f"{config.seed}/net")
        self.partition_groups: tuple[frozenset, frozenset] | None = None
        self.event_log: list[str] = []

        self.admin_kp = _det_keypair(f"sim-admin/{config.seed}")
        node_kps = [
            _det_keypair(f"sim-node/{config.seed}/{i}")
            for i in range(config.node_count)
        ]
        self.consensus = self._build_consensus(config, node_kps)
        self.genesis_spec = GenesisSpec(
            admin_address=self.admin_kp.address,
            admin_public_key=self.admin_kp.public_key,
            consensus=self.consensus,
            system_vars=SystemVars(start_date="2025-01-01"),
            chain_id=config.chain_id,
        )
        self.genesis = make_genesis_block(self.genesis_spec)
        self.nodes = [SimNode(i, kp, self) for i, kp in enumerate(node_kps)]
        self.address_to_node = {n.keypair.address: n.id for n in self.nodes}

        for node in self.nodes:
            node.fault = config.faults.get(node.id)
            node.peers = [p.id for p in self.nodes if p.id != node.id]
            # static announce round: peers are known, the messages document it
            for peer in node.peers:
                self._schedule_message(node.id, peer, ("announce", node.id))
        for node in self.nodes:
            self._schedule_production(node)

    @staticmethod
    def _build_consensus(config: SimConfig, node_kps) -> ConsensusConfig:
        addresses = [kp.address for kp in node_kps]
        if config.mode == Mode.POW:
            return ConsensusConfig(
                mode=Mode.POW,
                pow_difficulty_bits=config.pow_difficulty_bits,
                target_block_interval_ms=config.target_block_interval_ms,
            )
        if config.mode == Mode.POS:
            stakes = {
                addr: config.stakes_by_node.get(i, 1)
                for i, addr in enumerate(addresses)
            }
            return ConsensusConfig(
                mode=Mode.POS,
                stakes=stakes,
                target_block_interval_ms=config.target_block_interval_ms,
            )
        return ConsensusConfig(
            mode=Mode.DPOS,
            delegates=tuple(addresses),
            target_block_interval_ms=config.target_block_interval_ms,
        )

    # ---- event plumbing --------------------------------------------------

    def _push(self, time: float, recipient: int, key: str, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, recipient, key, self._seq, payload))

    def _payload_key(self, payload) -> str:
        kind = payload[0]
        if kind == "tx":
            return "tx:" + payload[1].tx_hash.hex()
        if kind == "block":
            return "blk:" + payload[1].block_hash.hex()
        if kind == "request":
            return "req:" + payload[1].hex()
        return f"timer:{kind}"

    def _schedule_message(self, sender: int, recipient: int, payload) -> None:
        if self.nodes[sender].fault == SILENT:
            return  # silent nodes emit nothing
        delay = self.rng.uniform(*self.config.latency_ms)
        self._push(
            self.clock + delay,
            recipient,
            self._payload_key(payload),
            payload + (sender,),
        )

    def _broadcast(self, node: SimNode, payload) -> None:
        if node.fault is not None:
            return  # silent and private-branch nodes emit nothing
        peers = sorted(node.peers)
        if self.config.fanout and self.config.fanout < len(peers):
            peers = sorted(self.rng.sample(peers, self.config.fanout))
        for peer in peers:
            self._schedule_message(node.id, peer, payload)

    def _delivery_allowed(self, sender: int, recipient: int) -> bool:
        if self.partition_groups is None:
            return True
        a, b = self.partition_groups
        return (sender in a and recipient in a) or (sender in b and recipient in b)

    def _log(self, recipient: int, kind: str, detail: dict) -> None:
        line = canonical_json(
            {"t": round(self.clock, 6), "node": recipient, "kind": kind, **detail}
        ).decode()
        self.event_log.append(line)

    # ---- public operations ------------------------------------------------

    def submit_tx(self, node_id: int, tx: SignedTransaction) -> None:
        node = self.nodes[node_id]
        self._receive_tx(node, tx, origin=None)

    def settle(self, grace_ms: float = 1000.0) -> "Simulation":
        """Stop block production and flush in-flight gossip so per-node
        views stop moving; convergence is then a stable property."""
        self.production_enabled = False
        return self.run_until(self.clock + grace_ms)

    def run_until(self, time_ms: float) -> "Simulation":
        if time_ms < self.clock:
            raise ValueError("cannot run backwards")
        while self._heap and self._heap[0][0] <= time_ms:
            event_time, recipient, _key, _seq, payload = heapq.heappop(self._heap)
            self.clock = event_time
            self._dispatch(self.nodes[recipient], payload)
        self.clock = time_ms
        return self

    def inject_fault(self, node_id: int, kind: str) -> None:
        if not 0 <= node_id < len(self.nodes):
            raise ValueError(f"unknown node id {node_id}")
        if kind not in (SILENT, EQUIVOCATING):
            raise ValueError(f"unknown fault kind {kind!r}")
        node = self.nodes[node_id]
        node.fault = kind
        node.generation += 1  # cancel pending production
        self._schedule_production(node)

    def partition(self, group_a, group_b) -> None:
        a, b = frozenset(group_a), frozenset(group_b)
        if a & b or a | b != set(range(len(self.nodes))):
            raise ValueError("groups must be disjoint and cover all nodes")
        self.partition_groups = (a, b)

    def heal(self) -> None:
        """Reconnect groups and flush private branches.

        Equivocators broadcast everything they withheld (fork choice on
        the honest side decides its fate) but stay out of honest
        production; silent nodes stay silent.
        """
        self.partition_groups = None
        for node in self.nodes:
            if node.fault == EQUIVOCATING:
                node.healed_private = [b.block_hash for b in node.chain[1:]]
                for block in node.chain[1:]:
                    for peer in sorted(node.peers):
                        self._schedule_message(node.id, peer, ("block", block))
        # groups may have diverged or stalled; tips restart the gossip
        for node in self.nodes:
            if node.fault is None:
                self._broadcast(node, ("block", node.tip))

    def convergence_report(self) -> dict:
        honest = [n for n in self.nodes if n.fault is None]
        tips = {n.tip.block_hash for n in honest}
        return {
            "nodes": [n.snapshot() for n in self.nodes],
            "all_honest_agree": len(tips) == 1,
        }

    def honest_nodes(self) -> list[SimNode]:
        return [n for n in self.nodes if n.fault is None]

    # ---- event handlers ------------------------------------------------------

    def _dispatch(self, node: SimNode, payload) -> None:
        kind = payload[0]
        if kind == "announce":
            origin = payload[1]
            self._log(node.id, "announce", {"from": origin})
            return
        if kind == "tx":
            tx, sender = payload[1], payload[2]
            if not self._delivery_allowed(sender, node.id):
                return
            self._log(node.id, "tx", {"hash": tx.tx_hash.hex(), "from": sender})
            self._receive_tx(node, tx, origin=sender)
            return
        if kind == "block":
            block, sender = payload[1], payload[2]
            if not self._delivery_allowed(sender, node.id):
                return
            self._log(node.id, "block", {"hash": block.block_hash.hex(), "from": sender})
            self._receive_block(node, block, sender)
            return
        if kind == "request":
            wanted, sender = payload[1], payload[2]
            if not self._delivery_allowed(sender, node.id):
                return
            held = node.blocks.get(wanted)
            if held is not None and node.fault is None:
                self._schedule_message(node.id, sender, ("block", held))
            return
        if kind == "produce":
            generation = payload[1]
            if not self.production_enabled:
                return
            if generation != node.generation or node.fault == SILENT:
                return
            self._log(node.id, "produce", {"height": node.tip.height + 1})
            self._produce_block(node)
            return
        if kind == "found":
            generation, block = payload[1], payload[2]
            if not self.production_enabled:
                return
            if generation != node.generation or node.fault == SILENT:
                return
            self._log(node.id, "found", {"hash": block.block_hash.hex()})
            self._adopt_own_block(node, block)
            return
        raise AssertionError(f"unknown event {kind}")

    def _receive_tx(self, node: SimNode, tx: SignedTransaction, origin) -> None:
        if tx.tx_hash in node.seen_tx:
            return
        node.seen_tx.add(tx.tx_hash)
        if tx.tx_hash in node.committed:
            return
        pk = resolve_sender_key(tx, node.state)
        if pk is None:
            return  # unresolvable sender, never forwarded
        reason = validate_transaction(tx, pk, tx.nonce)  # sig+hash only here
        if reason is not None:
            return
        if tx.nonce < node.state.expected_nonce(tx.sender):
            return  # stale
        node.mempool[tx.tx_hash] = tx
        self._broadcast(node, ("tx", tx))

    def _receive_block(self, node: SimNode, block: Block, sender: int | None) -> None:
        if block.block_hash in node.blocks:
            return
        node.blocks[block.block_hash] = block
        if node.fault == EQUIVOCATING:
            return  # private-branch nodes ignore the outside world
        if block.prev_hash not in node.blocks:
            node.orphans.setdefault(block.prev_hash, []).append(block)
            if sender is not None:
                self._schedule_message(node.id, sender, ("request", block.prev_hash))
            return
        self._connect(node, block)

    def _connect(self, node: SimNode, block: Block) -> None:
        queue = [block]
        adopted_any = False
        while queue:
            current = queue.pop(0)
            if self._consider_block(node, current):
                adopted_any = True
            for waiting in node.orphans.pop(current.block_hash, []):
                queue.append(waiting)
        if adopted_any:
            self._schedule_production(node)

    def _branch_of(self, node: SimNode, tip: Block) -> list[Block] | None:
        branch = [tip]
        cursor = tip
        while cursor.height > 0:
            parent = node.blocks.get(cursor.prev_hash)
            if parent is None:
                return None
            branch.append(parent)
            cursor = parent
        branch.reverse()
        if branch[0].block_hash != self.genesis.block_hash:
            return None
        return branch

    def _replay_branch(self, node: SimNode, branch: list[Block]):
        """Validate (once per block) and replay a full branch. Returns the
        resulting state or None if some block is invalid."""
        state = State.from_genesis(self.genesis_spec)
        parent = branch[0]
        for block in branch[1:]:
            if block.block_hash not in node.valid_blocks:
                reason = validate_block(block, parent, self.consensus, state)
                if reason is not None:
                    node.rejected_blocks.append((block.block_hash, reason))
                    return None
                node.valid_blocks.add(block.block_hash)
            for tx in block.transactions:
                state.apply(tx, block.height)
            parent = block
        return state

    def _consider_block(self, node: SimNode, block: Block) -> bool:
        """Adopt the branch ending at `block` if fork choice prefers it."""
        branch = self._branch_of(node, block)
        if branch is None:
            return False
        current = Chain(blocks=node.chain)
        candidate = Chain(blocks=branch)
        if fork_choice([current, candidate]) is not candidate:
            return False
        # fast path: plain extension of the current tip
        if block.prev_hash == node.tip.block_hash:
            if block.block_hash not in node.valid_blocks:
                reason = validate_block(block, node.tip, self.consensus, node.state)
                if reason is not None:
                    node.rejected_blocks.append((block.block_hash, reason))
                    return False
                node.valid_blocks.add(block.block_hash)
            for tx in block.transactions:
                node.state.apply(tx, block.height)
            node.chain.append(block)
            self._after_adoption(node, [block], [])
            return True
        new_state = self._replay_branch(node, branch)
        if new_state is None:
            return False
        old_chain = node.chain
        fork_height = 0
        for old, new in zip(old_chain, branch):
            if old.block_hash != new.block_hash:
                break
            fork_height = old.height
        abandoned = [b for b in old_chain if b.height > fork_height]
        node.chain = branch
        node.state = new_state
        self._after_adoption(node, branch[fork_height + 1 :], abandoned)
        return True

    def _after_adoption(self, node: SimNode, new_blocks, abandoned) -> None:
        node.generation += 1
        # a tx that lived only in the abandoned branch is uncommitted again
        new_hashes = {tx.tx_hash for block in new_blocks for tx in block.transactions}
        for block in abandoned:
            for tx in block.transactions:
                if tx.tx_hash not in new_hashes:
                    node.committed.discard(tx.tx_hash)
        for block in new_blocks:
            for tx in block.transactions:
                node.committed.add(tx.tx_hash)
                node.mempool.pop(tx.tx_hash, None)
        # orphaned transactions return to the pool when still applicable
        for block in abandoned:
            for tx in block.transactions:
                if tx.tx_hash in node.committed:
                    continue
                if tx.nonce >= node.state.expected_nonce(tx.sender):
                    node.mempool[tx.tx_hash] = tx
        # drop anything stale
        for tx_hash, tx in list(node.mempool.items()):
            if tx.nonce < node.state.expected_nonce(tx.sender):
                del node.mempool[tx_hash]
        self._broadcast(node, ("block", node.tip))

    # ---- block production ------------------------------------------------------

    def _select_txs(self, node: SimNode) -> list[SignedTransaction]:
        by_sender: dict[str, list[SignedTransaction]] = {}
        for tx in node.mempool.values():
            by_sender.setdefault(tx.sender, []).append(tx)
        picked: list[SignedTransaction] = []
        cap = self.config.max_txs_per_block
        for sender in sorted(by_sender):
            expected = node.state.expected_nonce(sender)
            for tx in sorted(by_sender[sender], key=lambda t: t.nonce):
                if len(picked) >= cap:
                    return picked
                if tx.nonce == expected:
                    picked.append(tx)
                    expected += 1
        return picked

    def _schedule_production(self, node: SimNode) -> None:
        if not self.production_enabled or node.fault == SILENT:
            return
        mode = self.consensus.mode
        next_height = node.tip.height + 1
        interval = self.consensus.target_block_interval_ms
        if mode == Mode.DPOS:
            proof = dpos_producer(next_height, self.consensus.delegates)
            if proof.producer != node.keypair.address:
                return
            self._push(
                self.clock + interval,
                node.id,
                "timer:produce",
                ("produce", node.generation),
            )
            return
        if mode == Mode.POS:
            proof = pos_select(node.tip.block_hash, self.consensus.stakes)
            if proof.selected != node.keypair.address:
                return
            self._push(
                self.clock + interval,
                node.id,
                "timer:produce",
                ("produce", node.generation),
            )
            return
        # hash-puzzle mode: really mine the candidate header now, charge the
        # attempt count against the node's hash rate as virtual time
        if self.consensus.mode != Mode.POW:
            raise AssertionError(f"unhandled mode {self.consensus.mode}")
        block = self._build_candidate(node, mined=True)
        attempts = block.proof.nonce - node.last_nonce_start + 1
        delay = attempts / self.config.pow_hash_rate
        self._push(
            self.clock + delay,
            node.id,
            "timer:found",
            ("found", node.generation, block),
        )

    def _build_candidate(self, node: SimNode, mined: bool = False) -> Block:
        parent = node.tip
        txs = self._select_txs(node)
        timestamp = max(int(self.clock), parent.timestamp + 1)
        if mined:
            header = BlockHeader(
                height=parent.height + 1,
                prev_hash=parent.block_hash,
                timestamp=timestamp,
                producer=node.keypair.address,
                tx_root=compute_tx_root(txs),
            )
            node.last_nonce_start = node.rng.getrandbits(48)
            proof = pow_mine(
                header.core_bytes(),
                self.consensus.pow_difficulty_bits,
                nonce_start=node.last_nonce_start,
                max_attempts=self.consensus.pow_max_attempts,
            )
        elif self.consensus.mode == Mode.POS:
            proof = pos_select(parent.block_hash, self.consensus.stakes)
        else:
            proof = dpos_producer(parent.height + 1, self.consensus.delegates)
        return assemble_block(
            parent, txs, node.keypair.address, proof, timestamp, self.consensus
        )

    def _produce_block(self, node: SimNode) -> None:
        block = self._build_candidate(node)
        self._adopt_own_block(node, block)

    def _adopt_own_block(self, node: SimNode, block: Block) -> None:
        node.blocks[block.block_hash] = block
        node.valid_blocks.add(block.block_hash)
        for tx in block.transactions:
            node.state.apply(tx, block.height)
        node.chain.append(block)
        self._after_adoption(node, [block], [])
        self._schedule_production(node)

def spawn_network(config: SimConfig) -> Simulation:
    return Simulation(config)
