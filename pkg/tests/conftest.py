import hashlib

import pytest

from medledger import commands, crypto
from medledger.consensus import ConsensusConfig, Mode
from medledger.genesis import GenesisSpec, make_genesis_block
from medledger.ledger import build_transaction
from medledger.state import State, SystemVars


def seed_kp(label: str) -> crypto.KeyPair:
    return crypto.generate_keypair(hashlib.sha256(label.encode()).digest())


@pytest.fixture(scope="session")
def admin_kp():
    return seed_kp("admin")


@pytest.fixture(scope="session")
def doctor_kp():
    return seed_kp("doctor")


@pytest.fixture(scope="session")
def doctor2_kp():
    return seed_kp("doctor2")


@pytest.fixture(scope="session")
def patient_kp():
    return seed_kp("patient")


@pytest.fixture(scope="session")
def patient2_kp():
    return seed_kp("patient2")


@pytest.fixture()
def dpos_config(admin_kp):
    return ConsensusConfig(
        mode=Mode.DPOS,
        delegates=(admin_kp.address,),
        target_block_interval_ms=100,
    )


@pytest.fixture()
def genesis_spec(admin_kp, dpos_config):
    return GenesisSpec(
        admin_address=admin_kp.address,
        admin_public_key=admin_kp.public_key,
        consensus=dpos_config,
        system_vars=SystemVars(start_date="2025-01-01"),
        chain_id="testchain",
    )


@pytest.fixture()
def genesis_block(genesis_spec):
    return make_genesis_block(genesis_spec)


class StateDriver:
    """Feeds signed commands straight into a state machine, tracking nonces.

    Ledger-level validation is covered elsewhere; this drives apply()
    the way committed blocks would.
    """

    def __init__(self, spec: GenesisSpec):
        self.state = State.from_genesis(spec)
        self.height = 1
        self.ts = 1_000

    def send(self, kp: crypto.KeyPair, cmd: dict):
        tx = build_transaction(
            kp,
            self.state.expected_nonce(kp.address),
            commands.encode_command(cmd),
            self.ts,
        )
        self.ts += 1
        entry = self.state.apply(tx, self.height)
        self.height += 1
        return entry


@pytest.fixture()
def driver(genesis_spec):
    return StateDriver(genesis_spec)


@pytest.fixture()
def clinic(driver, admin_kp, doctor_kp, patient_kp):
    """State with an activated doctor and patient and a consent grant."""
    d = driver
    d.send(patient_kp, commands.register_user(patient_kp.public_key, "patient", {"name": "Pat"}))
    d.send(doctor_kp, commands.register_user(doctor_kp.public_key, "doctor", {"name": "Doc", "specialty": "gp"}))
    d.send(admin_kp, commands.set_user_status(patient_kp.address, "active"))
    d.send(admin_kp, commands.set_user_status(doctor_kp.address, "active"))
    d.send(patient_kp, commands.grant_access(doctor_kp.address))
    return d
