"""Role-based access control: who may do what, decided by table lookup.

The matrix is total over (role, operation) and fixed at genesis. Status
gating happens before the lookup: anonymous callers may only register,
unknown addresses are refused outright, and accounts that are not
Active can do nothing until an administrator activates them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

# deny reasons
NOT_SIGNED_IN = "NotSignedIn"
UNKNOWN_ACCOUNT = "UnknownAccount"
INACTIVE = "Inactive"
ROLE_MISMATCH = "RoleMismatch"


class Role(str, Enum):
    PATIENT = "patient"
    DOCTOR = "doctor"
    ADMIN = "admin"


class AccountStatus(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    INACTIVE = "inactive"


class Op(str, Enum):
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
    READ_PROFILE = "read_profile"
    READ_RECORDS = "read_records"
    LIST_APPOINTMENTS = "list_appointments"
    LIST_FREE_SLOTS = "list_free_slots"
    LIST_PRESCRIPTIONS = "list_prescriptions"
    LIST_LAB_RESULTS = "list_lab_results"
    LIST_USERS = "list_users"
    READ_CATALOGS = "read_catalogs"
    EXPORT_DATA = "export_data"
    READ_AUDIT = "read_audit"


_PATIENT_OPS = {
    Op.UPDATE_PROFILE,
    Op.REQUEST_APPOINTMENT,
    Op.GRANT_ACCESS,
    Op.REVOKE_ACCESS,
    Op.READ_PROFILE,
    Op.READ_RECORDS,
    Op.LIST_APPOINTMENTS,
    Op.LIST_FREE_SLOTS,
    Op.LIST_PRESCRIPTIONS,
    Op.LIST_LAB_RESULTS,
    Op.READ_CATALOGS,
    Op.READ_AUDIT,
}

_DOCTOR_OPS = {
    Op.UPDATE_PROFILE,
    Op.UPDATE_APPOINTMENT,
    Op.PRESCRIBE,
    Op.INPUT_LAB_RESULT,
    Op.APPEND_RECORD,
    Op.READ_PROFILE,
    Op.READ_RECORDS,
    Op.LIST_APPOINTMENTS,
    Op.LIST_FREE_SLOTS,
    Op.LIST_PRESCRIPTIONS,
    Op.LIST_LAB_RESULTS,
    Op.READ_CATALOGS,
    Op.READ_AUDIT,
}

# Administrators run the management plane only: user lifecycle, catalogs,
# system settings, export, audit. They never touch clinical data.
_ADMIN_OPS = {
    Op.REGISTER_USER,
    Op.SET_USER_STATUS,
    Op.UPDATE_PROFILE,
    Op.ADD_MEDICATION,
    Op.ADD_LAB_PARAMETER,
    Op.SET_SYSTEM_VARS,
    Op.READ_PROFILE,
    Op.LIST_USERS,
    Op.READ_CATALOGS,
    Op.EXPORT_DATA,
    Op.READ_AUDIT,
}

# Anonymous callers can do exactly one thing: register themselves.
_ANONYMOUS_OPS = {Op.REGISTER_USER}

PERMISSION_MATRIX: dict[tuple[Role | None, Op], bool] = {}
for _op in Op:
    PERMISSION_MATRIX[(None, _op)] = _op in _ANONYMOUS_OPS
    PERMISSION_MATRIX[(Role.PATIENT, _op)] = _op in _PATIENT_OPS
    PERMISSION_MATRIX[(Role.DOCTOR, _op)] = _op in _DOCTOR_OPS
    PERMISSION_MATRIX[(Role.ADMIN, _op)] = _op in _ADMIN_OPS


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str | None = None

    @classmethod
    def allow(cls) -> "Decision":
        return cls(True, None)

    @classmethod
    def deny(cls, reason: str) -> "Decision":
        return cls(False, reason)


def check_access(session: str | None, op: Op, state) -> Decision:
    """Gate an operation for the given authenticated address (or None).

    `state` provides account lookup via `account_of(address)`.
    """
    if session is None:
        if PERMISSION_MATRIX[(None, op)]:
            return Decision.allow()
        return Decision.deny(NOT_SIGNED_IN)
    account = state.account_of(session)
    if account is None:
        return Decision.deny(UNKNOWN_ACCOUNT)
    if account.status != AccountStatus.ACTIVE:
        return Decision.deny(INACTIVE)
    if PERMISSION_MATRIX[(account.role, op)]:
        return Decision.allow()
    return Decision.deny(ROLE_MISMATCH)
