"""Operator command line: keys, genesis, node, benchmarks, simulations,
chain inspection, and admin export.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Read commands
take --json for machine consumption. The node config file is INI with
sections mirroring the module configs; MEDLEDGER_PORT and
MEDLEDGER_DATA_DIR override the [node] section from the environment.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import signal
import sys
from pathlib import Path

from . import crypto, export
from .bench import BENCH_PRESETS, CSV_HEADER, bench_run
from .consensus import ConsensusConfig, Mode
from .genesis import GenesisSpec
from .node import Node
from .sim import SimConfig, spawn_network
from .state import State, SystemVars
from .storage import NodeStore, StorageError

SCENARIO_DIR = Path(__file__).parent / "scenarios"


def _fail(message: str, code: int = 1) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---- keygen -------------------------------------------------------------


def cmd_keygen(args) -> int:
    out = Path(args.out)
    if out.exists():
        return _fail(f"refusing to overwrite existing key file {out}", 2)
    try:
        seed = bytes.fromhex(args.seed) if args.seed else None
    except ValueError:
        return _fail("--seed must be hex (at least 64 hex characters)", 2)
    try:
        kp = crypto.generate_keypair(seed)
    except crypto.CryptoError as exc:
        return _fail(str(exc))
    crypto.save_private_key(out, kp)
    if args.json:
        print(json.dumps({"address": kp.address, "public_key": kp.public_key.hex(), "key_file": str(out)}))
    else:
        print(f"key file: {out}")
        print(f"address:  {kp.address}")
        print(f"public:   {kp.public_key.hex()}")
    return 0


# ---- init ----------------------------------------------------------------


def _consensus_preset(mode: str, admin_address: str) -> ConsensusConfig:
    if mode == "pow":
        return ConsensusConfig(mode=Mode.POW, pow_difficulty_bits=12, target_block_interval_ms=500)
    if mode == "pos":
        return ConsensusConfig(mode=Mode.POS, stakes={admin_address: 1}, target_block_interval_ms=300)
    return ConsensusConfig(mode=Mode.DPOS, delegates=(admin_address,), target_block_interval_ms=300)


def cmd_init(args) -> int:
    if args.genesis:
        try:
            spec = GenesisSpec.from_dict(json.loads(Path(args.genesis).read_text()))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            return _fail(f"malformed genesis spec: {exc}")
    else:
        if not args.admin_key:
            return _fail("provide --genesis or --admin-key to synthesize one", 2)
        try:
            admin = crypto.load_keypair(args.admin_key)
        except crypto.CryptoError as exc:
            return _fail(str(exc))
        spec = GenesisSpec(
            admin_address=admin.address,
            admin_public_key=admin.public_key,
            consensus=_consensus_preset(args.mode, admin.address),
            system_vars=SystemVars(start_date=args.start_date),
            chain_id=args.chain_id,
        )
    try:
        Node.initialize(Path(args.data_dir), spec)
    except StorageError as exc:
        return _fail(str(exc))
    print(f"initialized {args.data_dir} (chain {spec.chain_id}, admin {spec.admin_address})")
    return 0


# ---- run -------------------------------------------------------------------


def _load_node_config(path: str | None) -> dict:
    settings = {
        "data_dir": "./medledger-data",
        "host": "127.0.0.1",
        "port": 8545,
        "producer_address": "",
        "snapshot_interval": 10,
    }
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise FileNotFoundError(path)
        if parser.has_section("node"):
            section = parser["node"]
            settings["data_dir"] = section.get("data_dir", settings["data_dir"])
            settings["host"] = section.get("host", settings["host"])
            settings["port"] = section.getint("port", settings["port"])
            settings["producer_address"] = section.get("producer_address", "")
            settings["snapshot_interval"] = section.getint(
                "snapshot_interval", settings["snapshot_interval"]
            )
    if os.environ.get("MEDLEDGER_DATA_DIR"):
        settings["data_dir"] = os.environ["MEDLEDGER_DATA_DIR"]
    if os.environ.get("MEDLEDGER_PORT"):
        settings["port"] = int(os.environ["MEDLEDGER_PORT"])
    return settings


def cmd_run(args) -> int:
    try:
        import uvicorn
    except ImportError:  # pragma: no cover
        return _fail("uvicorn is required to run the node service")
    from .service import create_app

    try:
        settings = _load_node_config(args.config)
    except (FileNotFoundError, ValueError, configparser.Error) as exc:
        return _fail(f"bad config: {exc}")
    if args.data_dir:
        settings["data_dir"] = args.data_dir
    if args.port:
        settings["port"] = args.port
    try:
        node = Node.open(
            Path(settings["data_dir"]),
            producer_address=settings["producer_address"] or None,
            snapshot_interval=settings["snapshot_interval"],
        )
    except StorageError as exc:
        return _fail(str(exc))
    app = create_app(node)
    node.start_producer()
    config = uvicorn.Config(
        app, host=settings["host"], port=settings["port"], log_level="warning"
    )
    server = uvicorn.Server(config)
    print(
        f"node {node.genesis_spec.chain_id} at height {node.tip.height} "
        f"listening on {settings['host']}:{settings['port']}"
    )

    # Own the termination signals: uvicorn re-raises them after its
    # graceful shutdown, and the default handlers would turn a clean
    # stop into a signal death instead of exit code 0.
    def _graceful(_sig, _frame):
        server.should_exit = True

    signal.signal(signal.SIGTERM, _graceful)
    signal.signal(signal.SIGINT, _graceful)
    try:
        server.run()
    finally:
        node.close()
    return 0


# ---- bench -----------------------------------------------------------------


def cmd_bench(args) -> int:
    modes = [Mode(args.mode)] if args.mode != "all" else [Mode.POW, Mode.POS, Mode.DPOS]
    reports = []
    for mode in modes:
        reports.append(
            bench_run(
                mode,
                tx_load=args.tx_load,
                node_count=args.nodes,
                duration_ms=args.duration_ms,
                seed=args.seed,
            )
        )
    if args.json:
        print(json.dumps([r.to_dict() for r in reports], indent=2))
    else:
        header = f"{'mode':>6} {'committed':>9} {'elapsed_ms':>11} {'tps':>9} {'interval_ms':>12} {'agree':>6}"
        print(header)
        for r in reports:
            d = r.to_dict()
            print(
                f"{d['mode']:>6} {d['committed_tx_count']:>9} {d['elapsed_ms']:>11} "
                f"{d['achieved_tps']:>9} {d['mean_block_interval_ms']:>12} {str(d['all_honest_agree']):>6}"
            )
    if args.csv:
        lines = [CSV_HEADER] + [r.csv_row() for r in reports]
        payload = "\n".join(lines) + "\n"
        if args.csv == "-":
            sys.stdout.write(payload)
        else:
            Path(args.csv).write_text(payload)
    return 0


# ---- sim ---------------------------------------------------------------------


def _resolve_scenario(name: str) -> Path:
    direct = Path(name)
    if direct.exists():
        return direct
    bundled = SCENARIO_DIR / f"{name}.json"
    if bundled.exists():
        return bundled
    raise FileNotFoundError(name)


def cmd_sim(args) -> int:
    try:
        path = _resolve_scenario(args.scenario)
        raw = path.read_text()
    except FileNotFoundError:
        return _fail(f"scenario not found: {args.scenario}")
    try:
        scenario = json.loads(raw)
    except json.JSONDecodeError as exc:
        return _fail(f"malformed scenario {path}: line {exc.lineno}: {exc.msg}")
    try:
        report, event_lines = run_scenario(scenario)
    except (ValueError, KeyError) as exc:
        return _fail(f"invalid scenario {path}: {exc}")
    if args.events:
        Path(args.events).write_text("\n".join(event_lines) + "\n")
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(f"{'node':>4} {'height':>7} {'mempool':>8} {'fault':>12} tip")
        for row in report["nodes"]:
            print(
                f"{row['id']:>4} {row['height']:>7} {row['mempool']:>8} "
                f"{str(row['fault'] or '-'):>12} {row['tip'][:16]}"
            )
        print(f"all honest agree: {report['all_honest_agree']}")
    return 0 if report["all_honest_agree"] else 1


def run_scenario(scenario: dict) -> tuple[dict, list[str]]:
    config = SimConfig(
        node_count=int(scenario["node_count"]),
        seed=int(scenario.get("seed", 0)),
        mode=Mode(scenario.get("mode", "dpos")),
        pow_difficulty_bits=int(scenario.get("pow_difficulty_bits", 12)),
        pow_hash_rate=float(scenario.get("pow_hash_rate", 2.0)),
        target_block_interval_ms=int(scenario.get("target_block_interval_ms", 100)),
        fanout=int(scenario.get("fanout", 0)),
        faults={int(k): v for k, v in scenario.get("faults", {}).items()},
    )
    sim = spawn_network(config)

    from . import commands as cmdmod
    from .ledger import build_transaction

    load = int(scenario.get("tx_load", 0))
    honest = [n.id for n in sim.nodes if n.fault is None]
    for i in range(load):
        kp = crypto.generate_keypair(
            crypto.hash_bytes(f"scenario-load/{config.seed}/{i}".encode())
        )
        cmd = cmdmod.encode_command(
            cmdmod.register_user(kp.public_key, "patient", {"name": f"load-{i}"})
        )
        sim.submit_tx(honest[i % len(honest)], build_transaction(kp, 0, cmd, 1 + i))

    events = scenario.get("events", [])
    for event in sorted(events, key=lambda e: e["at_ms"]):
        sim.run_until(float(event["at_ms"]))
        kind = event["kind"]
        if kind == "partition":
            sim.partition(event["group_a"], event["group_b"])
        elif kind == "heal":
            sim.heal()
        elif kind == "fault":
            sim.inject_fault(int(event["node"]), event["fault"])
        else:
            raise ValueError(f"unknown event kind {kind!r}")
    sim.run_until(float(scenario.get("end_ms", 10_000)))
    sim.settle()
    return sim.convergence_report(), sim.event_log


# ---- inspect --------------------------------------------------------------------


def cmd_inspect(args) -> int:
    try:
        _spec, chain, _state = NodeStore(Path(args.data_dir)).recover()
    except StorageError as exc:
        return _fail(str(exc))
    if not 0 <= args.height <= chain[-1].height:
        return _fail(f"height {args.height} out of range 0..{chain[-1].height}")
    block = chain[args.height]
    if args.json:
        print(json.dumps(block.to_dict(), indent=2))
    else:
        d = block.to_dict()
        print(f"height:     {d['height']}")
        print(f"hash:       {d['block_hash']}")
        print(f"prev:       {d['prev_hash']}")
        print(f"time:       {d['timestamp']}")
        print(f"producer:   {d['producer']}")
        print(f"proof:      {d['proof']['mode']}")
        print(f"tx count:   {len(d['transactions'])}")
        for tx in d["transactions"]:
            print(f"  tx {tx['tx_hash'][:16]} from {tx['sender'][:10]} nonce {tx['nonce']}: {tx['command']}")
    return 0


# ---- export ----------------------------------------------------------------------


def cmd_export(args) -> int:
    try:
        caller = crypto.load_keypair(args.key)
    except crypto.CryptoError as exc:
        return _fail(str(exc))
    try:
        _spec, _chain, state = NodeStore(Path(args.data_dir)).recover()
    except StorageError as exc:
        return _fail(str(exc))
    decision, payload = export.export(state, caller.address, args.dataset, args.format)
    if not decision.allowed:
        return _fail(f"export denied: {decision.reason}")
    if args.out:
        Path(args.out).write_bytes(payload)
    else:
        sys.stdout.buffer.write(payload)
    return 0


# ---- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medledger", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a keypair file and print its address")
    p.add_argument("--seed", help="hex seed (>= 64 hex chars) for deterministic keys")
    p.add_argument("--out", default="medledger.key", help="key file path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("init", help="initialize a data directory with a genesis block")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--genesis", help="genesis spec JSON file")
    p.add_argument("--admin-key", help="synthesize a genesis spec around this admin key")
    p.add_argument("--mode", choices=["pow", "pos", "dpos"], default="dpos")
    p.add_argument("--chain-id", default="medledger-dev")
    p.add_argument("--start-date", default="2025-01-01")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="run the HTTP node service and block producer")
    p.add_argument("--config", help="INI config file ([node] section)")
    p.add_argument("--data-dir", help="override data directory")
    p.add_argument("--port", type=int, help="override port")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="compare consensus throughput at the repo presets")
    p.add_argument("--mode", choices=["pow", "pos", "dpos", "all"], default="all")
    p.add_argument("--tx-load", type=int, default=2000)
    p.add_argument("--nodes", type=int, default=4)
    p.add_argument("--duration-ms", type=float, default=31_000.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--csv", help="write CSV to this path ('-' for stdout)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sim", help="run a simulation scenario file")
    p.add_argument("--scenario", required=True, help="path or bundled scenario name")
    p.add_argument("--events", help="write the event log as line-delimited JSON")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("inspect", help="dump one block from a data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export", help="admin data export from a data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--dataset", choices=list(export.DATASETS), required=True)
    p.add_argument("--format", choices=list(export.FORMATS), required=True)
    p.add_argument("--key", required=True, help="admin key file")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
