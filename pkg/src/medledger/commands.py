"""State-machine command payloads carried inside transactions.

A command is a JSON object with a `kind` tag, serialized canonically so
the same command always yields the same transaction hash. Decoding is
strict about shape; anything that fails here is audited as Malformed and
never touches state.
"""

from __future__ import annotations

from typing import Any

from .encoding import DecodeError, canonical_json, decode_json

REGISTER_USER = "register_user"
SET_USER_STATUS = "set_user_status"
UPDATE_PROFILE = "update_profile"
ADD_MEDICATION = "add_medication"
ADD_LAB_PARAMETER = "add_lab_parameter"
SET_SYSTEM_VARS = "set_system_vars"
REQUEST_APPOINTMENT = "request_appointment"
UPDATE_APPOINTMENT = "update_appointment"
PRESCRIBE = "prescribe"
INPUT_LAB_RESULT = "input_lab_result"
GRANT_ACCESS = "grant_access"
REVOKE_ACCESS = "revoke_access"
APPEND_RECORD = "append_record"

# kind -> {field: allowed types}; optional fields map to (types, None)
_REQUIRED: dict[str, dict[str, type | tuple]] = {
    REGISTER_USER: {"public_key": str, "role": str, "profile": dict},
    SET_USER_STATUS: {"target": str, "status": str},
    UPDATE_PROFILE: {"profile": dict},
    ADD_MEDICATION: {"name": str, "form": str, "strength": str},
    ADD_LAB_PARAMETER: {"name": str, "unit": str, "low": (int, float), "high": (int, float)},
    SET_SYSTEM_VARS: {
        "start_date": str,
        "slots_per_day": int,
        "slot_minutes": int,
        "day_start": str,
    },
    REQUEST_APPOINTMENT: {"doctor": str, "date": str, "slot": int},
    UPDATE_APPOINTMENT: {"appointment_id": int, "action": str},
    PRESCRIBE: {"appointment_id": int, "medication_id": int, "dosage": str},
    INPUT_LAB_RESULT: {"patient": str, "parameter_id": int, "value": (int, float)},
    GRANT_ACCESS: {"doctor": str},
    REVOKE_ACCESS: {"doctor": str},
    APPEND_RECORD: {"patient": str, "record_kind": str, "envelope": dict},
}


class MalformedCommand(ValueError):
    pass


def encode_command(command: dict) -> bytes:
    return canonical_json(command)


def decode_command(data: bytes) -> dict:
    """Parse and shape-check a command; raises MalformedCommand otherwise."""
    try:
        obj = decode_json(data)
    except DecodeError as exc:
        raise MalformedCommand(str(exc)) from exc
    if not isinstance(obj, dict):
        raise MalformedCommand("command must be a JSON object")
    kind = obj.get("kind")
    if kind not in _REQUIRED:
        raise MalformedCommand(f"unknown command kind: {kind!r}")
    for field_name, types in _REQUIRED[kind].items():
        if field_name not in obj:
            raise MalformedCommand(f"{kind} requires field {field_name!r}")
        value = obj[field_name]
        if isinstance(value, bool) or not isinstance(value, types):
            raise MalformedCommand(f"{kind} field {field_name!r} has wrong type")
    return obj


def registration_public_key(command_bytes: bytes) -> bytes | None:
    """Public key a self-registration command carries, if it is one."""
    try:
        cmd = decode_command(command_bytes)
    except MalformedCommand:
        return None
    if cmd["kind"] != REGISTER_USER:
        return None
    try:
        return bytes.fromhex(cmd["public_key"])
    except ValueError:
        return None


def register_user(public_key: bytes, role: str, profile: dict) -> dict:
    return {
        "kind": REGISTER_USER,
        "public_key": public_key.hex(),
        "role": role,
        "profile": profile,
    }


def set_user_status(target: str, status: str) -> dict:
    return {"kind": SET_USER_STATUS, "target": target, "status": status}


def update_profile(profile: dict, address: str | None = None) -> dict:
    cmd: dict[str, Any] = {"kind": UPDATE_PROFILE, "profile": profile}
    if address is not None:
        cmd["address"] = address
    return cmd


def add_medication(name: str, form: str, strength: str) -> dict:
    return {"kind": ADD_MEDICATION, "name": name, "form": form, "strength": strength}


def add_lab_parameter(name: str, unit: str, low: float, high: float) -> dict:
    return {
        "kind": ADD_LAB_PARAMETER,
        "name": name,
        "unit": unit,
        "low": low,
        "high": high,
    }


def set_system_vars(
    start_date: str, slots_per_day: int, slot_minutes: int, day_start: str
) -> dict:
    return {
        "kind": SET_SYSTEM_VARS,
        "start_date": start_date,
        "slots_per_day": slots_per_day,
        "slot_minutes": slot_minutes,
        "day_start": day_start,
    }


def request_appointment(doctor: str, date: str, slot: int) -> dict:
    return {"kind": REQUEST_APPOINTMENT, "doctor": doctor, "date": date, "slot": slot}


def update_appointment(
    appointment_id: int,
    action: str,
    new_date: str | None = None,
    new_slot: int | None = None,
    notes: str | None = None,
) -> dict:
    cmd: dict[str, Any] = {
        "kind": UPDATE_APPOINTMENT,
        "appointment_id": appointment_id,
        "action": action,
    }
    if new_date is not None:
        cmd["new_date"] = new_date
    if new_slot is not None:
        cmd["new_slot"] = new_slot
    if notes is not None:
        cmd["notes"] = notes
    return cmd


def prescribe(appointment_id: int, medication_id: int, dosage: str) -> dict:
    return {
        "kind": PRESCRIBE,
        "appointment_id": appointment_id,
        "medication_id": medication_id,
        "dosage": dosage,
    }


def input_lab_result(patient: str, parameter_id: int, value: float) -> dict:
    return {
        "kind": INPUT_LAB_RESULT,
        "patient": patient,
        "parameter_id": parameter_id,
        "value": value,
    }


def grant_access(doctor: str) -> dict:
    return {"kind": GRANT_ACCESS, "doctor": doctor}


def revoke_access(doctor: str) -> dict:
    return {"kind": REVOKE_ACCESS, "doctor": doctor}


def append_record(patient: str, record_kind: str, envelope_dict: dict) -> dict:
    return {
        "kind": APPEND_RECORD,
        "patient": patient,
        "record_kind": record_kind,
        "envelope": envelope_dict,
    }
