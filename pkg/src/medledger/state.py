"""The deterministic contract state machine.

Accounts, consent grants, appointments, prescriptions, lab results, and
sealed records live here. `apply` is the single entry point: it gates
every command through the permission matrix, executes it, and emits one
audit entry whether the command was applied or denied. Denied commands
change nothing except the audit trail, so the state root — a digest over
the domain state — is only moved by successful mutations.

Record payloads are stored exclusively as sealed envelopes; plaintext
never enters this module.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from enum import Enum

from . import commands, crypto
from .crypto import SealedEnvelope
from .encoding import canonical_json
from .rbac import AccountStatus, Decision, Op, Role, check_access

# domain failure reasons (audited verbatim)
MALFORMED = "Malformed"
DUPLICATE_ADDRESS = "DuplicateAddress"
INVALID_ROLE = "InvalidRole"
UNKNOWN_TARGET = "UnknownTarget"
NOT_YOUR_ACCOUNT = "NotYourAccount"
DUPLICATE_NAME = "DuplicateName"
INVALID_RANGE = "InvalidRange"
INVALID_SYSTEM_VARS = "InvalidSystemVars"
SLOT_TAKEN = "SlotTaken"
DOCTOR_UNKNOWN_OR_INACTIVE = "DoctorUnknownOrInactive"
SLOT_BEFORE_SYSTEM_START = "SlotBeforeSystemStart"
SLOT_OUT_OF_RANGE = "SlotOutOfRange"
UNKNOWN_APPOINTMENT = "UnknownAppointment"
NOT_YOUR_APPOINTMENT = "NotYourAppointment"
ILLEGAL_TRANSITION = "IllegalTransition"
UNKNOWN_MEDICATION = "UnknownMedication"
UNKNOWN_PARAMETER = "UnknownParameter"
NO_ACTIVE_GRANT = "NoActiveGrant"
DUPLICATE_ACTIVE_GRANT = "DuplicateActiveGrant"
PATIENT_NOT_A_RECIPIENT = "PatientNotARecipient"

ALLOW = "allow"
DENY = "deny"

_COMMAND_OPS = {
    commands.REGISTER_USER: Op.REGISTER_USER,
    commands.SET_USER_STATUS: Op.SET_USER_STATUS,
    commands.UPDATE_PROFILE: Op.UPDATE_PROFILE,
    commands.ADD_MEDICATION: Op.ADD_MEDICATION,
    commands.ADD_LAB_PARAMETER: Op.ADD_LAB_PARAMETER,
    commands.SET_SYSTEM_VARS: Op.SET_SYSTEM_VARS,
    commands.REQUEST_APPOINTMENT: Op.REQUEST_APPOINTMENT,
    commands.UPDATE_APPOINTMENT: Op.UPDATE_APPOINTMENT,
    commands.PRESCRIBE: Op.PRESCRIBE,
    commands.INPUT_LAB_RESULT: Op.INPUT_LAB_RESULT,
    commands.GRANT_ACCESS: Op.GRANT_ACCESS,
    commands.REVOKE_ACCESS: Op.REVOKE_ACCESS,
    commands.APPEND_RECORD: Op.APPEND_RECORD,
}


class DomainError(Exception):
    """A command that passed RBAC but violates a domain rule."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class AppointmentStatus(str, Enum):
    REQUESTED = "requested"
    CONFIRMED = "confirmed"
    RESCHEDULED = "rescheduled"
    COMPLETED = "completed"
    CANCELLED = "cancelled"


_TRANSITIONS = {
    "confirm": {AppointmentStatus.REQUESTED: AppointmentStatus.CONFIRMED},
    "reschedule": {
        AppointmentStatus.CONFIRMED: AppointmentStatus.RESCHEDULED,
        AppointmentStatus.RESCHEDULED: AppointmentStatus.RESCHEDULED,
    },
    "complete": {
        AppointmentStatus.CONFIRMED: AppointmentStatus.COMPLETED,
        AppointmentStatus.RESCHEDULED: AppointmentStatus.COMPLETED,
    },
    "cancel": {
        AppointmentStatus.REQUESTED: AppointmentStatus.CANCELLED,
        AppointmentStatus.CONFIRMED: AppointmentStatus.CANCELLED,
        AppointmentStatus.RESCHEDULED: AppointmentStatus.CANCELLED,
    },
}

_PRESCRIBABLE = {
    AppointmentStatus.CONFIRMED,
    AppointmentStatus.RESCHEDULED,
    AppointmentStatus.COMPLETED,
}


@dataclass
class Account:
    address: str
    public_key: bytes
    role: Role
    status: AccountStatus
    profile: dict
    registered_at: int

    def to_dict(self) -> dict:
        return {
            "address": self.address,
            "public_key": self.public_key.hex(),
            "role": self.role.value,
            "status": self.status.value,
            "profile": dict(sorted(self.profile.items())),
            "registered_at": self.registered_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Account":
        return cls(
            address=d["address"],
            public_key=bytes.fromhex(d["public_key"]),
            role=Role(d["role"]),
            status=AccountStatus(d["status"]),
            profile=dict(d["profile"]),
            registered_at=d["registered_at"],
        )


@dataclass
class Appointment:
    id: int
    patient: str
    doctor: str
    date: str  # ISO date
    slot: int
    status: AppointmentStatus
    notes: str = ""
    prescription_ids: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "patient": self.patient,
            "doctor": self.doctor,
            "date": self.date,
            "slot": self.slot,
            "status": self.status.value,
            "notes": self.notes,
            "prescription_ids": list(self.prescription_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Appointment":
        return cls(
            id=d["id"],
            patient=d["patient"],
            doctor=d["doctor"],
            date=d["date"],
            slot=d["slot"],
            status=AppointmentStatus(d["status"]),
            notes=d.get("notes", ""),
            prescription_ids=list(d.get("prescription_ids", [])),
        )


@dataclass
class Medication:
    id: int
    name: str
    form: str
    strength: str
    added_by: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "form": self.form,
            "strength": self.strength,
            "added_by": self.added_by,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Medication":
        return cls(d["id"], d["name"], d["form"], d["strength"], d["added_by"])


@dataclass
class LabParameter:
    id: int
    name: str
    unit: str
    low: float
    high: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "unit": self.unit,
            "low": self.low,
            "high": self.high,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabParameter":
        return cls(d["id"], d["name"], d["unit"], d["low"], d["high"])


@dataclass
class LabResult:
    id: int
    patient: str
    doctor: str
    parameter_id: int
    value: float
    flagged: bool
    issued_at: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "patient": self.patient,
            "doctor": self.doctor,
            "parameter_id": self.parameter_id,
            "value": self.value,
            "flagged": self.flagged,
            "issued_at": self.issued_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabResult":
        return cls(
            d["id"],
            d["patient"],
            d["doctor"],
            d["parameter_id"],
            d["value"],
            d["flagged"],
            d["issued_at"],
        )


@dataclass
class Prescription:
    id: int
    appointment_id: int
    doctor: str
    patient: str
    medication_id: int
    dosage: str
    issued_at: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "appointment_id": self.appointment_id,
            "doctor": self.doctor,
            "patient": self.patient,
            "medication_id": self.medication_id,
            "dosage": self.dosage,
            "issued_at": self.issued_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Prescription":
        return cls(
            d["id"],
            d["appointment_id"],
            d["doctor"],
            d["patient"],
            d["medication_id"],
            d["dosage"],
            d["issued_at"],
        )


@dataclass
class SealedRecord:
    id: int
    patient: str
    author: str
    envelope: SealedEnvelope
    created_at: int
    record_kind: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "patient": self.patient,
            "author": self.author,
            "envelope": self.envelope.to_dict(),
            "created_at": self.created_at,
            "record_kind": self.record_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SealedRecord":
        return cls(
            d["id"],
            d["patient"],
            d["author"],
            SealedEnvelope.from_dict(d["envelope"]),
            d["created_at"],
            d["record_kind"],
        )


@dataclass
class AccessGrant:
    patient: str
    doctor: str
    granted_at: int
    revoked_at: int | None = None

    @property
    def active(self) -> bool:
        return self.revoked_at is None

    def to_dict(self) -> dict:
        return {
            "patient": self.patient,
            "doctor": self.doctor,
            "granted_at": self.granted_at,
            "revoked_at": self.revoked_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AccessGrant":
        return cls(d["patient"], d["doctor"], d["granted_at"], d.get("revoked_at"))


@dataclass
class SystemVars:
    start_date: str = "2025-01-01"
    slots_per_day: int = 16
    slot_minutes: int = 30
    day_start: str = "09:00"

    def validate(self) -> None:
        _dt.date.fromisoformat(self.start_date)
        if self.slots_per_day < 1 or self.slot_minutes < 1:
            raise ValueError("slot grid must be positive")
        if self.slots_per_day * self.slot_minutes > 24 * 60:
            raise ValueError("slot grid exceeds one day")
        hh, mm = self.day_start.split(":")
        if not (0 <= int(hh) < 24 and 0 <= int(mm) < 60):
            raise ValueError("day_start out of range")

    def to_dict(self) -> dict:
        return {
            "start_date": self.start_date,
            "slots_per_day": self.slots_per_day,
            "slot_minutes": self.slot_minutes,
            "day_start": self.day_start,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemVars":
        return cls(
            d["start_date"], d["slots_per_day"], d["slot_minutes"], d["day_start"]
        )


@dataclass
class AuditEntry:
    tx_hash: str
    actor: str
    operation: str
    outcome: str  # allow | deny
    reason: str | None
    height: int
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "tx_hash": self.tx_hash,
            "actor": self.actor,
            "operation": self.operation,
            "outcome": self.outcome,
            "reason": self.reason,
            "height": self.height,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuditEntry":
        return cls(
            d["tx_hash"],
            d["actor"],
            d["operation"],
            d["outcome"],
            d.get("reason"),
            d["height"],
            d["timestamp"],
        )


class State:
    """Full contract state; mutated only through `apply`."""

    def __init__(self):
        self.accounts: dict[str, Account] = {}
        self.nonces: dict[str, int] = {}
        self.appointments: dict[int, Appointment] = {}
        self.medications: dict[int, Medication] = {}
        self.lab_parameters: dict[int, LabParameter] = {}
        self.lab_results: dict[int, LabResult] = {}
        self.prescriptions: dict[int, Prescription] = {}
        self.records: dict[int, SealedRecord] = {}
        self.grants: list[AccessGrant] = []
        self.system_vars = SystemVars()
        self.audit: list[AuditEntry] = []
        self.counters: dict[str, int] = {
            "appointment": 1,
            "medication": 1,
            "lab_parameter": 1,
            "lab_result": 1,
            "prescription": 1,
            "record": 1,
        }

    # ---- ledger hooks -------------------------------------------------

    def account_of(self, address: str) -> Account | None:
        return self.accounts.get(address)

    def public_key_of(self, address: str) -> bytes | None:
        account = self.accounts.get(address)
        return account.public_key if account else None

    def expected_nonce(self, address: str) -> int:
        return self.nonces.get(address, 0)

    # ---- bootstrap -----------------------------------------------------

    @classmethod
    def from_genesis(cls, genesis_spec) -> "State":
        state = cls()
        admin = Account(
            address=genesis_spec.admin_address,
            public_key=genesis_spec.admin_public_key,
            role=Role.ADMIN,
            status=AccountStatus.ACTIVE,
            profile=dict(genesis_spec.admin_profile),
            registered_at=0,
        )
        state.accounts[admin.address] = admin
        state.system_vars = genesis_spec.system_vars
        return state

    # ---- apply ---------------------------------------------------------

    def apply(self, tx, height: int) -> AuditEntry:
        """Execute one committed transaction; always emits an audit entry."""
        self.nonces[tx.sender] = tx.nonce + 1

        def entry(op_name: str, outcome: str, reason: str | None) -> AuditEntry:
            e = AuditEntry(
                tx_hash=tx.tx_hash.hex(),
                actor=tx.sender,
                operation=op_name,
                outcome=outcome,
                reason=reason,
                height=height,
                timestamp=tx.timestamp,
            )
            self.audit.append(e)
            return e

        try:
            cmd = commands.decode_command(tx.command)
        except commands.MalformedCommand:
            return entry("unknown", DENY, MALFORMED)

        op = _COMMAND_OPS[cmd["kind"]]
        session: str | None = tx.sender
        if op == Op.REGISTER_USER:
            # Self-registration is the pre-login flow: the sender either has
            # no account yet, or is retrying with the key that derives its
            # own address (answered with DuplicateAddress, not a role deny).
            # Registering a *different* address stays RBAC-gated.
            reg_pk = commands.registration_public_key(tx.command)
            registers_self = (
                reg_pk is not None and crypto.address_of(reg_pk) == tx.sender
            )
            if tx.sender not in self.accounts or registers_self:
                session = None
        decision = check_access(session, op, self)
        if not decision.allowed:
            return entry(op.value, DENY, decision.reason)

        handler = getattr(self, f"_do_{cmd['kind']}")
        try:
            handler(tx.sender, cmd, height)
        except DomainError as exc:
            return entry(op.value, DENY, exc.reason)
        return entry(op.value, ALLOW, None)

    # ---- command handlers ----------------------------------------------

    def _do_register_user(self, sender: str, cmd: dict, height: int) -> None:
        try:
            public_key = bytes.fromhex(cmd["public_key"])
            address = crypto.address_of(public_key)
        except (ValueError, crypto.MalformedKey):
            raise DomainError(MALFORMED)
        try:
            role = Role(cmd["role"])
        except ValueError:
            raise DomainError(INVALID_ROLE)
        profile = cmd["profile"]
        if not all(
            isinstance(k, str) and isinstance(v, str) for k, v in profile.items()
        ):
            raise DomainError(MALFORMED)
        sender_account = self.accounts.get(sender)
        if sender_account is None:
            # anonymous self-registration: key must derive the sender address
            if address != sender:
                raise DomainError(MALFORMED)
            if role == Role.ADMIN:
                raise DomainError(INVALID_ROLE)
        if address in self.accounts:
            raise DomainError(DUPLICATE_ADDRESS)
        self.accounts[address] = Account(
            address=address,
            public_key=public_key,
            role=role,
            status=AccountStatus.PENDING,
            profile=dict(profile),
            registered_at=height,
        )

    def _do_set_user_status(self, sender: str, cmd: dict, height: int) -> None:
        target = self.accounts.get(cmd["target"])
        if target is None:
            raise DomainError(UNKNOWN_TARGET)
        try:
            status = AccountStatus(cmd["status"])
        except ValueError:
            raise DomainError(MALFORMED)
        if status == AccountStatus.PENDING:
            raise DomainError(MALFORMED)
        target.status = status

    def _do_update_profile(self, sender: str, cmd: dict, height: int) -> None:
        if cmd.get("address", sender) != sender:
            raise DomainError(NOT_YOUR_ACCOUNT)
        profile = cmd["profile"]
        if not all(
            isinstance(k, str) and isinstance(v, str) for k, v in profile.items()
        ):
            raise DomainError(MALFORMED)
        self.accounts[sender].profile = dict(profile)

    def _do_add_medication(self, sender: str, cmd: dict, height: int) -> None:
        if any(m.name == cmd["name"] for m in self.medications.values()):
            raise DomainError(DUPLICATE_NAME)
        mid = self.counters["medication"]
        self.counters["medication"] += 1
        self.medications[mid] = Medication(
            id=mid,
            name=cmd["name"],
            form=cmd["form"],
            strength=cmd["strength"],
            added_by=sender,
        )

    def _do_add_lab_parameter(self, sender: str, cmd: dict, height: int) -> None:
        low, high = float(cmd["low"]), float(cmd["high"])
        if not low < high:
            raise DomainError(INVALID_RANGE)
        if any(p.name == cmd["name"] for p in self.lab_parameters.values()):
            raise DomainError(DUPLICATE_NAME)
        pid = self.counters["lab_parameter"]
        self.counters["lab_parameter"] += 1
        self.lab_parameters[pid] = LabParameter(
            id=pid, name=cmd["name"], unit=cmd["unit"], low=low, high=high
        )

    def _do_set_system_vars(self, sender: str, cmd: dict, height: int) -> None:
        candidate = SystemVars(
            start_date=cmd["start_date"],
            slots_per_day=cmd["slots_per_day"],
            slot_minutes=cmd["slot_minutes"],
            day_start=cmd["day_start"],
        )
        try:
            candidate.validate()
        except ValueError:
            raise DomainError(INVALID_SYSTEM_VARS)
        self.system_vars = candidate

    def _parse_slot_date(self, raw: str) -> _dt.date:
        try:
            return _dt.date.fromisoformat(raw)
        except ValueError:
            raise DomainError(MALFORMED)

    def _slot_occupied(self, doctor: str, date: str, slot: int) -> bool:
        return any(
            a.doctor == doctor
            and a.date == date
            and a.slot == slot
            and a.status != AppointmentStatus.CANCELLED
            for a in self.appointments.values()
        )

    def _do_request_appointment(self, sender: str, cmd: dict, height: int) -> None:
        doctor = self.accounts.get(cmd["doctor"])
        if (
            doctor is None
            or doctor.role != Role.DOCTOR
            or doctor.status != AccountStatus.ACTIVE
        ):
            raise DomainError(DOCTOR_UNKNOWN_OR_INACTIVE)
        date = self._parse_slot_date(cmd["date"])
        if date < _dt.date.fromisoformat(self.system_vars.start_date):
            raise DomainError(SLOT_BEFORE_SYSTEM_START)
        slot = cmd["slot"]
        if not 0 <= slot < self.system_vars.slots_per_day:
            raise DomainError(SLOT_OUT_OF_RANGE)
        if self._slot_occupied(cmd["doctor"], cmd["date"], slot):
            raise DomainError(SLOT_TAKEN)
        aid = self.counters["appointment"]
        self.counters["appointment"] += 1
        self.appointments[aid] = Appointment(
            id=aid,
            patient=sender,
            doctor=cmd["doctor"],
            date=cmd["date"],
            slot=slot,
            status=AppointmentStatus.REQUESTED,
        )

    def _do_update_appointment(self, sender: str, cmd: dict, height: int) -> None:
        appointment = self.appointments.get(cmd["appointment_id"])
        if appointment is None:
            raise DomainError(UNKNOWN_APPOINTMENT)
        if appointment.doctor != sender:
            raise DomainError(NOT_YOUR_APPOINTMENT)
        action = cmd["action"]
        transitions = _TRANSITIONS.get(action)
        if transitions is None:
            raise DomainError(MALFORMED)
        new_status = transitions.get(appointment.status)
        if new_status is None:
            raise DomainError(ILLEGAL_TRANSITION)
        if action == "reschedule":
            new_date = cmd.get("new_date")
            new_slot = cmd.get("new_slot")
            if not isinstance(new_date, str) or not isinstance(new_slot, int):
                raise DomainError(MALFORMED)
            date = self._parse_slot_date(new_date)
            if date < _dt.date.fromisoformat(self.system_vars.start_date):
                raise DomainError(SLOT_BEFORE_SYSTEM_START)
            if not 0 <= new_slot < self.system_vars.slots_per_day:
                raise DomainError(SLOT_OUT_OF_RANGE)
            if (new_date, new_slot) != (appointment.date, appointment.slot):
                if self._slot_occupied(appointment.doctor, new_date, new_slot):
                    raise DomainError(SLOT_TAKEN)
            appointment.date = new_date
            appointment.slot = new_slot
        appointment.status = new_status
        if isinstance(cmd.get("notes"), str):
            appointment.notes = cmd["notes"]

    def _active_grant(self, patient: str, doctor: str) -> AccessGrant | None:
        for grant in self.grants:
            if grant.patient == patient and grant.doctor == doctor and grant.active:
                return grant
        return None

    def _do_prescribe(self, sender: str, cmd: dict, height: int) -> None:
        appointment = self.appointments.get(cmd["appointment_id"])
        if appointment is None or appointment.doctor != sender:
            raise DomainError(NOT_YOUR_APPOINTMENT)
        if appointment.status not in _PRESCRIBABLE:
            raise DomainError(ILLEGAL_TRANSITION)
        if cmd["medication_id"] not in self.medications:
            raise DomainError(UNKNOWN_MEDICATION)
        pid = self.counters["prescription"]
        self.counters["prescription"] += 1
        self.prescriptions[pid] = Prescription(
            id=pid,
            appointment_id=appointment.id,
            doctor=sender,
            patient=appointment.patient,
            medication_id=cmd["medication_id"],
            dosage=cmd["dosage"],
            issued_at=height,
        )
        appointment.prescription_ids.append(pid)

    def _do_input_lab_result(self, sender: str, cmd: dict, height: int) -> None:
        if self._active_grant(cmd["patient"], sender) is None:
            raise DomainError(NO_ACTIVE_GRANT)
        parameter = self.lab_parameters.get(cmd["parameter_id"])
        if parameter is None:
            raise DomainError(UNKNOWN_PARAMETER)
        value = float(cmd["value"])
        rid = self.counters["lab_result"]
        self.counters["lab_result"] += 1
        self.lab_results[rid] = LabResult(
            id=rid,
            patient=cmd["patient"],
            doctor=sender,
            parameter_id=parameter.id,
            value=value,
            flagged=not parameter.low <= value <= parameter.high,
            issued_at=height,
        )

    def _do_grant_access(self, sender: str, cmd: dict, height: int) -> None:
        doctor = self.accounts.get(cmd["doctor"])
        if (
            doctor is None
            or doctor.role != Role.DOCTOR
            or doctor.status != AccountStatus.ACTIVE
        ):
            raise DomainError(DOCTOR_UNKNOWN_OR_INACTIVE)
        if self._active_grant(sender, cmd["doctor"]) is not None:
            raise DomainError(DUPLICATE_ACTIVE_GRANT)
        self.grants.append(
            AccessGrant(patient=sender, doctor=cmd["doctor"], granted_at=height)
        )

    def _do_revoke_access(self, sender: str, cmd: dict, height: int) -> None:
        grant = self._active_grant(sender, cmd["doctor"])
        if grant is None:
            raise DomainError(NO_ACTIVE_GRANT)
        grant.revoked_at = height

    def _do_append_record(self, sender: str, cmd: dict, height: int) -> None:
        if self._active_grant(cmd["patient"], sender) is None:
            raise DomainError(NO_ACTIVE_GRANT)
        try:
            envelope = SealedEnvelope.from_dict(cmd["envelope"])
        except (KeyError, ValueError, TypeError):
            raise DomainError(MALFORMED)
        if not envelope.wrapped_keys:
            raise DomainError(MALFORMED)
        if cmd["patient"] not in envelope.wrapped_keys:
            raise DomainError(PATIENT_NOT_A_RECIPIENT)
        rid = self.counters["record"]
        self.counters["record"] += 1
        self.records[rid] = SealedRecord(
            id=rid,
            patient=cmd["patient"],
            author=sender,
            envelope=envelope,
            created_at=height,
            record_kind=cmd["record_kind"],
        )

    # ---- queries ---------------------------------------------------------

    def free_slots(self, doctor: str, date: str) -> list[int]:
        """All slot indices for the date minus the doctor's booked ones."""
        day = self._parse_slot_date(date)
        if day < _dt.date.fromisoformat(self.system_vars.start_date):
            raise DomainError(SLOT_BEFORE_SYSTEM_START)
        taken = {
            a.slot
            for a in self.appointments.values()
            if a.doctor == doctor
            and a.date == date
            and a.status != AppointmentStatus.CANCELLED
        }
        return [s for s in range(self.system_vars.slots_per_day) if s not in taken]

    def records_for(self, caller: str, patient: str) -> tuple[Decision, list]:
        decision = check_access(caller, Op.READ_RECORDS, self)
        if not decision.allowed:
            return decision, []
        account = self.accounts[caller]
        if account.role == Role.PATIENT and caller != patient:
            return Decision.deny(NO_ACTIVE_GRANT), []
        if account.role == Role.DOCTOR and self._active_grant(patient, caller) is None:
            return Decision.deny(NO_ACTIVE_GRANT), []
        found = [r for r in self.records.values() if r.patient == patient]
        return Decision.allow(), sorted(found, key=lambda r: r.id)

    def appointments_for(self, address: str) -> list[Appointment]:
        account = self.accounts.get(address)
        if account is None:
            return []
        if account.role == Role.DOCTOR:
            mine = [a for a in self.appointments.values() if a.doctor == address]
        else:
            mine = [a for a in self.appointments.values() if a.patient == address]
        return sorted(mine, key=lambda a: a.id)

    def prescriptions_for(self, address: str) -> list[Prescription]:
        account = self.accounts.get(address)
        if account is None:
            return []
        key = "doctor" if account.role == Role.DOCTOR else "patient"
        mine = [p for p in self.prescriptions.values() if getattr(p, key) == address]
        return sorted(mine, key=lambda p: p.id)

    def lab_results_for(self, address: str) -> list[LabResult]:
        account = self.accounts.get(address)
        if account is None:
            return []
        key = "doctor" if account.role == Role.DOCTOR else "patient"
        mine = [r for r in self.lab_results.values() if getattr(r, key) == address]
        return sorted(mine, key=lambda r: r.id)

    def audit_for(self, address: str) -> list[AuditEntry]:
        account = self.accounts.get(address)
        if account is None:
            return []
        if account.role == Role.ADMIN:
            return list(self.audit)
        return [e for e in self.audit if e.actor == address]

    def users_sorted(self) -> list[Account]:
        return [self.accounts[a] for a in sorted(self.accounts)]

    def medications_sorted(self) -> list[Medication]:
        return [self.medications[i] for i in sorted(self.medications)]

    def lab_parameters_sorted(self) -> list[LabParameter]:
        return [self.lab_parameters[i] for i in sorted(self.lab_parameters)]

    # ---- serialization ----------------------------------------------------

    def domain_dict(self) -> dict:
        """Domain state only — what the state root commits to.

        The audit trail and nonce registry are bookkeeping that grows on
        denied commands too, so they stay out of the root: a denied
        command must leave the root unchanged.
        """
        return {
            "accounts": {a: acc.to_dict() for a, acc in sorted(self.accounts.items())},
            "appointments": {
                str(i): a.to_dict() for i, a in sorted(self.appointments.items())
            },
            "medications": {
                str(i): m.to_dict() for i, m in sorted(self.medications.items())
            },
            "lab_parameters": {
                str(i): p.to_dict() for i, p in sorted(self.lab_parameters.items())
            },
            "lab_results": {
                str(i): r.to_dict() for i, r in sorted(self.lab_results.items())
            },
            "prescriptions": {
                str(i): p.to_dict() for i, p in sorted(self.prescriptions.items())
            },
            "records": {str(i): r.to_dict() for i, r in sorted(self.records.items())},
            "grants": [g.to_dict() for g in self.grants],
            "system_vars": self.system_vars.to_dict(),
            "counters": dict(sorted(self.counters.items())),
        }

    def state_root(self) -> bytes:
        return crypto.hash_bytes(canonical_json(self.domain_dict()))

    def to_snapshot_dict(self) -> dict:
        full = self.domain_dict()
        full["nonces"] = dict(sorted(self.nonces.items()))
        full["audit"] = [e.to_dict() for e in self.audit]
        return full

    @classmethod
    def from_snapshot_dict(cls, d: dict) -> "State":
        state = cls()
        state.accounts = {
            a: Account.from_dict(acc) for a, acc in d["accounts"].items()
        }
        state.appointments = {
            int(i): Appointment.from_dict(a) for i, a in d["appointments"].items()
        }
        state.medications = {
            int(i): Medication.from_dict(m) for i, m in d["medications"].items()
        }
        state.lab_parameters = {
            int(i): LabParameter.from_dict(p) for i, p in d["lab_parameters"].items()
        }
        state.lab_results = {
            int(i): LabResult.from_dict(r) for i, r in d["lab_results"].items()
        }
        state.prescriptions = {
            int(i): Prescription.from_dict(p) for i, p in d["prescriptions"].items()
        }
        state.records = {
            int(i): SealedRecord.from_dict(r) for i, r in d["records"].items()
        }
        state.grants = [AccessGrant.from_dict(g) for g in d["grants"]]
        state.system_vars = SystemVars.from_dict(d["system_vars"])
        state.counters = dict(d["counters"])
        state.nonces = dict(d.get("nonces", {}))
        state.audit = [AuditEntry.from_dict(e) for e in d.get("audit", [])]
        return state
