"""Throughput and block-interval measurement over the simulator.

The harness floods a fault-free network with self-registration
transactions (each from a fresh keypair, so they commit independently),
runs the virtual clock for a fixed window, and reports how fast the
canonical chain absorbed the load. Elapsed time is the drain horizon:
the commit time of the last load transaction, or the whole window when
the load never drains. That keeps the throughput figure honest for
fast modes that finish early and slow modes that saturate.

Presets are tuned so the mode orderings are robust at desk scale:
hash-puzzle mining at 16 bits with 4 nodes at 25 attempts/ms gives a
mean interval around 650 ms, stake selection runs at 200 ms, and
delegate slots at 50 ms.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import commands, crypto
from .consensus import Mode
from .ledger import build_transaction
from .sim import SimConfig, Simulation, spawn_network

BENCH_PRESETS: dict[Mode, dict] = {
    Mode.POW: {"pow_difficulty_bits": 16, "pow_hash_rate": 25.0},
    Mode.POS: {"target_block_interval_ms": 200},
    Mode.DPOS: {"target_block_interval_ms": 50},
}


@dataclass(frozen=True)
class BenchReport:
    mode: str
    committed_tx_count: int
    elapsed_ms: float
    achieved_tps: float
    mean_block_interval_ms: float
    all_honest_agree: bool

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "committed_tx_count": self.committed_tx_count,
            "elapsed_ms": round(self.elapsed_ms, 3),
            "achieved_tps": round(self.achieved_tps, 3),
            "mean_block_interval_ms": round(self.mean_block_interval_ms, 3),
            "all_honest_agree": self.all_honest_agree,
        }

    def csv_row(self) -> str:
        d = self.to_dict()
        return ",".join(
            str(d[k])
            for k in (
                "mode",
                "committed_tx_count",
                "elapsed_ms",
                "achieved_tps",
                "mean_block_interval_ms",
                "all_honest_agree",
            )
        )


CSV_HEADER = "mode,committed_tx_count,elapsed_ms,achieved_tps,mean_block_interval_ms,all_honest_agree"


def _load_transactions(sim: Simulation, count: int) -> list:
    txs = []
    for i in range(count):
        kp = crypto.generate_keypair(
            crypto.hash_bytes(f"bench-load/{sim.config.seed}/{i}".encode())
        )
        cmd = commands.encode_command(
            commands.register_user(kp.public_key, "patient", {"name": f"load-{i}"})
        )
        txs.append(build_transaction(kp, 0, cmd, 1 + i))
    return txs


def bench_run(
    mode: Mode,
    tx_load: int,
    node_count: int = 4,
    duration_ms: float = 30_000.0,
    seed: int = 1,
    max_txs_per_block: int = 20,
) -> BenchReport:
    preset = BENCH_PRESETS[mode]
    config = SimConfig(
        node_count=node_count,
        seed=seed,
        mode=mode,
        max_txs_per_block=max_txs_per_block,
        **preset,
    )
    sim = spawn_network(config)
    load = _load_transactions(sim, tx_load)
    load_hashes = {tx.tx_hash for tx in load}
    for i, tx in enumerate(load):
        sim.submit_tx(i % node_count, tx)
    sim.run_until(duration_ms)
    sim.settle()

    report = sim.convergence_report()
    canonical = sim.honest_nodes()[0].chain

    committed = 0
    last_commit_time: float | None = None
    block_times = [b.timestamp for b in canonical]
    for block in canonical[1:]:
        in_block = sum(1 for tx in block.transactions if tx.tx_hash in load_hashes)
        if in_block:
            committed += in_block
            last_commit_time = float(block.timestamp)

    if committed == tx_load and last_commit_time is not None:
        elapsed_ms = last_commit_time
    else:
        elapsed_ms = duration_ms
    achieved_tps = committed / (elapsed_ms / 1000.0) if elapsed_ms > 0 else 0.0

    intervals = [b - a for a, b in zip(block_times, block_times[1:])]
    mean_interval = sum(intervals) / len(intervals) if intervals else 0.0

    return BenchReport(
        mode=mode.value,
        committed_tx_count=committed,
        elapsed_ms=elapsed_ms,
        achieved_tps=achieved_tps,
        mean_block_interval_ms=mean_interval,
        all_honest_agree=report["all_honest_agree"],
    )
