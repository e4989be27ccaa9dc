import json
import os
import signal
import socket
import subprocess
import sys
import time

import httpx
import pytest

from medledger import commands, crypto
from medledger.node import Node
from medledger.service import build_client_tx
from medledger.storage import NodeStore

from conftest import seed_kp

CLI = [sys.executable, "-m", "medledger"]
FIXED_SEED = "11" * 32


def run_cli(*args, **kw):
    return subprocess.run(
        [*CLI, *args], capture_output=True, text=True, timeout=120, **kw
    )


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def test_keygen_deterministic_with_seed(tmp_path):
    out = tmp_path / "a.key"
    result = run_cli("keygen", "--seed", FIXED_SEED, "--out", str(out), "--json")
    assert result.returncode == 0, result.stderr
    payload = json.loads(result.stdout)
    expected = crypto.generate_keypair(bytes.fromhex(FIXED_SEED))
    assert payload["address"] == expected.address
    assert crypto.load_keypair(out) == expected


def test_keygen_without_seed_differs(tmp_path):
    a = run_cli("keygen", "--out", str(tmp_path / "a.key"), "--json")
    b = run_cli("keygen", "--out", str(tmp_path / "b.key"), "--json")
    assert json.loads(a.stdout)["address"] != json.loads(b.stdout)["address"]


def test_keygen_rejects_bad_seed(tmp_path):
    result = run_cli("keygen", "--seed", "not-hex", "--out", str(tmp_path / "k"))
    assert result.returncode == 2
    short = run_cli("keygen", "--seed", "abcd", "--out", str(tmp_path / "k"))
    assert short.returncode == 1  # valid hex but too little entropy


def test_keygen_refuses_overwrite(tmp_path):
    out = tmp_path / "a.key"
    assert run_cli("keygen", "--out", str(out)).returncode == 0
    again = run_cli("keygen", "--out", str(out))
    assert again.returncode == 2
    assert "refusing" in again.stderr


def test_init_and_inspect_genesis(tmp_path):
    key = tmp_path / "admin.key"
    run_cli("keygen", "--seed", FIXED_SEED, "--out", str(key))
    data = tmp_path / "data"
    result = run_cli("init", "--data-dir", str(data), "--admin-key", str(key))
    assert result.returncode == 0, result.stderr
    spec, chain, state = NodeStore(data).recover()
    assert chain[-1].height == 0
    shown = run_cli("inspect", "--data-dir", str(data), "--height", "0", "--json")
    block = json.loads(shown.stdout)
    assert block["height"] == 0
    assert block["producer"] == spec.admin_address


def test_init_refuses_non_empty_dir(tmp_path):
    key = tmp_path / "admin.key"
    run_cli("keygen", "--out", str(key))
    data = tmp_path / "data"
    data.mkdir()
    (data / "junk").write_text("x")
    result = run_cli("init", "--data-dir", str(data), "--admin-key", str(key))
    assert result.returncode == 1
    assert "non-empty" in result.stderr


def test_init_rejects_malformed_genesis(tmp_path):
    bad = tmp_path / "genesis.json"
    bad.write_text('{"admin_address": "0xnope"}')
    result = run_cli("init", "--data-dir", str(tmp_path / "d"), "--genesis", str(bad))
    assert result.returncode == 1
    assert "malformed genesis" in result.stderr


def test_inspect_out_of_range(tmp_path):
    key = tmp_path / "admin.key"
    run_cli("keygen", "--out", str(key))
    data = tmp_path / "data"
    run_cli("init", "--data-dir", str(data), "--admin-key", str(key))
    result = run_cli("inspect", "--data-dir", str(data), "--height", "99")
    assert result.returncode == 1
    assert "out of range" in result.stderr


def _data_dir_with_medications(tmp_path, admin_kp, genesis_spec):
    Node.initialize(tmp_path / "data", genesis_spec)
    node = Node.open(tmp_path / "data")
    from medledger.ledger import build_transaction

    cmd = commands.encode_command(commands.add_medication("Amoxicillin", "capsule", "500mg"))
    node.submit(build_transaction(admin_kp, 0, cmd, 1_700_000_000_000))
    node.produce_block()
    node.close()
    return tmp_path / "data"


def test_export_csv_and_denied_for_patient(tmp_path, admin_kp, genesis_spec):
    data = _data_dir_with_medications(tmp_path, admin_kp, genesis_spec)
    admin_file = tmp_path / "admin.key"
    crypto.save_private_key(admin_file, admin_kp)
    result = run_cli(
        "export", "--data-dir", str(data), "--dataset", "medications",
        "--format", "csv", "--key", str(admin_file),
    )
    assert result.returncode == 0, result.stderr
    lines = result.stdout.splitlines()
    assert lines[0] == "id,name,form,strength,added_by"
    assert lines[1].startswith("1,Amoxicillin,capsule,500mg,0x")

    patient_file = tmp_path / "patient.key"
    crypto.save_private_key(patient_file, seed_kp("cli-patient"))
    denied = run_cli(
        "export", "--data-dir", str(data), "--dataset", "medications",
        "--format", "csv", "--key", str(patient_file),
    )
    assert denied.returncode == 1
    assert "denied" in denied.stderr


def test_bench_usage_error_on_unknown_mode():
    result = run_cli("bench", "--mode", "proof-of-vibes")
    assert result.returncode == 2


def test_bench_csv_stdout():
    result = run_cli(
        "bench", "--mode", "dpos", "--tx-load", "50", "--duration-ms", "2000",
        "--csv", "-", "--json",
    )
    assert result.returncode == 0, result.stderr
    csv_lines = [l for l in result.stdout.splitlines() if l.startswith(("mode,", "dpos,"))]
    assert len(csv_lines) == 2
    header, row = csv_lines
    assert len(row.split(",")) == len(header.split(","))


def test_sim_bundled_scenarios():
    for name in ("partition-heal", "two-silent-of-five"):
        result = run_cli("sim", "--scenario", name, "--json")
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["all_honest_agree"] is True


def test_sim_event_log_dump(tmp_path):
    out = tmp_path / "events.jsonl"
    result = run_cli("sim", "--scenario", "two-silent-of-five", "--events", str(out))
    assert result.returncode == 0, result.stderr
    lines = out.read_text().splitlines()
    assert len(lines) > 50
    for line in lines[:20]:
        event = json.loads(line)
        assert {"t", "node", "kind"} <= set(event)


def test_sim_malformed_scenario_reports_line(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text('{\n  "node_count": 3,\n  "mode" "dpos"\n}\n')
    result = run_cli("sim", "--scenario", str(bad))
    assert result.returncode == 1
    assert "line 3" in result.stderr


class RunningNode:
    def __init__(self, tmp_path, port, extra_env=None):
        self.port = port
        env = os.environ.copy() | (extra_env or {})
        self.proc = subprocess.Popen(
            [*CLI, "run", "--data-dir", str(tmp_path), "--port", str(port)],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            env=env,
        )
        self.base = f"http://127.0.0.1:{port}"
        deadline = time.time() + 15
        while time.time() < deadline:
            try:
                httpx.get(f"{self.base}/health", timeout=1)
                return
            except httpx.TransportError:
                if self.proc.poll() is not None:
                    raise RuntimeError(
                        f"node exited early: {self.proc.stdout.read()}"
                    )
                time.sleep(0.1)
        raise RuntimeError("node did not come up")

    def stop(self, sig=signal.SIGTERM, timeout=15):
        if self.proc.poll() is None:
            self.proc.send_signal(sig)
        return self.proc.wait(timeout=timeout)


@pytest.mark.slow
def test_run_serves_commits_and_survives_restart(tmp_path):
    key = tmp_path / "admin.key"
    run_cli("keygen", "--seed", FIXED_SEED, "--out", str(key))
    data = tmp_path / "data"
    run_cli("init", "--data-dir", str(data), "--admin-key", str(key))
    admin = crypto.load_keypair(key)
    patient = seed_kp("cli-run-patient")

    port = free_port()
    node = RunningNode(data, port)
    try:
        health = httpx.get(f"{node.base}/health").json()
        assert health["height"] == 0
        body = build_client_tx(
            patient, 0,
            commands.register_user(patient.public_key, "patient", {"name": "Pat"}),
            1_700_000_000_000,
        )
        receipt = httpx.post(f"{node.base}/tx", json=body).json()
        deadline = time.time() + 10
        status = None
        while time.time() < deadline:
            status = httpx.get(f"{node.base}/tx/{receipt['tx_hash']}").json()
            if status["status"] == "committed":
                break
            time.sleep(0.1)
        assert status and status["status"] == "committed", status
    finally:
        code = node.stop()
    assert code == 0  # graceful shutdown

    # restart: the committed registration must still be there
    node = RunningNode(data, free_port())
    try:
        health = httpx.get(f"{node.base}/health").json()
        assert health["height"] >= 1
        status = httpx.get(f"{node.base}/tx/{receipt['tx_hash']}").json()
        assert status["status"] == "committed"
    finally:
        node.stop()


@pytest.mark.slow
def test_run_reads_config_file_with_env_override(tmp_path):
    key = tmp_path / "admin.key"
    run_cli("keygen", "--seed", FIXED_SEED, "--out", str(key))
    data = tmp_path / "data"
    run_cli("init", "--data-dir", str(data), "--admin-key", str(key))
    config_port = free_port()
    env_port = free_port()
    ini = tmp_path / "node.ini"
    ini.write_text(
        f"[node]\ndata_dir = {data}\nhost = 127.0.0.1\nport = {config_port}\n"
        "snapshot_interval = 5\n"
    )
    proc = subprocess.Popen(
        [*CLI, "run", "--config", str(ini)],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
        env=os.environ.copy() | {"MEDLEDGER_PORT": str(env_port)},
    )
    try:
        deadline = time.time() + 15
        health = None
        while time.time() < deadline:
            try:
                health = httpx.get(f"http://127.0.0.1:{env_port}/health", timeout=1).json()
                break
            except httpx.TransportError:
                if proc.poll() is not None:
                    raise RuntimeError(proc.stdout.read())
                time.sleep(0.1)
        assert health is not None and health["chain_id"] == "medledger-dev"
        # the environment override won over the config file port
        with pytest.raises(httpx.TransportError):
            httpx.get(f"http://127.0.0.1:{config_port}/health", timeout=0.5)
    finally:
        proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=15) == 0


@pytest.mark.slow
def test_run_survives_hard_kill(tmp_path):
    key = tmp_path / "admin.key"
    run_cli("keygen", "--seed", FIXED_SEED, "--out", str(key))
    data = tmp_path / "data"
    run_cli("init", "--data-dir", str(data), "--admin-key", str(key))
    patient = seed_kp("kill-patient")

    node = RunningNode(data, free_port())
    try:
        body = build_client_tx(
            patient, 0,
            commands.register_user(patient.public_key, "patient", {"name": "P"}),
            1_700_000_000_000,
        )
        receipt = httpx.post(f"{node.base}/tx", json=body).json()
        deadline = time.time() + 10
        while time.time() < deadline:
            if httpx.get(f"{node.base}/tx/{receipt['tx_hash']}").json()["status"] == "committed":
                break
            time.sleep(0.1)
        pre_kill = httpx.get(f"{node.base}/health").json()["height"]
    finally:
        node.stop(sig=signal.SIGKILL)

    node = RunningNode(data, free_port())
    try:
        health = httpx.get(f"{node.base}/health").json()
        assert health["height"] == pre_kill
        assert httpx.get(f"{node.base}/tx/{receipt['tx_hash']}").json()["status"] == "committed"
    finally:
        node.stop()
