"""HTTP face of a node: challenge-response login, transaction intake,
and read endpoints over the committed state.

Login emulates a wallet: the server hands out a single-use random
nonce, the client signs it with the account key, and a session token
comes back. Private keys never reach the server; every mutation arrives
as a transaction that was signed client-side.

Error bodies are always `{"error": <code>, "reason": <text>}`; denied
operations answer 403 with the same machine-readable reason the state
machine audits, conflicts (slots, nonces) answer 409.
"""

from __future__ import annotations

import json
import secrets
import time
from dataclasses import dataclass

from fastapi import FastAPI, Header, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from . import commands, crypto, export
from .encoding import canonical_json
from .ledger import SignedTransaction, build_transaction, tx_signing_bytes
from .node import NONCE_MISMATCH, SENDER_MISMATCH, Node, SubmitRejected
from .rbac import Op, check_access
from .state import DomainError

CHALLENGE_TTL_S = 120
SESSION_TTL_S = 30 * 60


@dataclass
class Session:
    token: str
    address: str
    role: str
    created_at: float
    expires_at: float


class AuthRegistry:
    """In-memory single-use challenges and expiring sessions."""

    def __init__(self):
        self.challenges: dict[str, tuple[str, float]] = {}
        self.sessions: dict[str, Session] = {}

    def new_challenge(self, address: str) -> dict:
        nonce = secrets.token_bytes(32).hex()
        expires = time.time() + CHALLENGE_TTL_S
        self.challenges[address] = (nonce, expires)
        return {"address": address, "nonce": nonce, "expires_in_s": CHALLENGE_TTL_S}

    def take_challenge(self, address: str) -> str | None:
        entry = self.challenges.pop(address, None)
        if entry is None:
            return None
        nonce, expires = entry
        if time.time() > expires:
            return None
        return nonce

    def new_session(self, address: str, role: str) -> Session:
        now = time.time()
        session = Session(
            token=secrets.token_bytes(32).hex(),
            address=address,
            role=role,
            created_at=now,
            expires_at=now + SESSION_TTL_S,
        )
        self.sessions[session.token] = session
        return session

    def resolve(self, token: str | None) -> Session | None:
        if not token:
            return None
        session = self.sessions.get(token)
        if session is None:
            return None
        if time.time() > session.expires_at:
            del self.sessions[token]
            return None
        return session

    def drop(self, token: str) -> None:
        self.sessions.pop(token, None)


def _error(status: int, code: str, reason: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "reason": reason})


def _deny_response(reason: str) -> JSONResponse:
    status = 401 if reason == "NotSignedIn" else 403
    return _error(status, reason, f"operation denied: {reason}")


def create_app(node: Node) -> FastAPI:
    app = FastAPI(title="medledger-node", docs_url=None, redoc_url=None)
    # the browser client is served from its own origin; nothing here relies
    # on cookies, so a permissive CORS policy is safe
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    auth = AuthRegistry()
    app.state.node = node
    app.state.auth = auth

    def session_of(authorization: str | None) -> Session | None:
        if authorization and authorization.startswith("Bearer "):
            return auth.resolve(authorization[len("Bearer ") :])
        return None

    def gated(session: Session | None, op: Op):
        """Access decision for the session against the live state."""
        address = session.address if session else None
        with node.lock:
            return check_access(address, op, node.state)

    # ---- health ---------------------------------------------------------

    @app.get("/health")
    def health():
        return node.health()

    # ---- auth ------------------------------------------------------------

    @app.post("/auth/challenge")
    async def challenge(request: Request):
        body = await request.json()
        address = body.get("address", "")
        if not isinstance(address, str) or not address.startswith("0x"):
            return _error(400, "Malformed", "address must be 0x-prefixed hex")
        return auth.new_challenge(address)

    @app.post("/auth/login")
    async def login(request: Request):
        body = await request.json()
        address = body.get("address", "")
        signature_hex = body.get("signature", "")
        with node.lock:
            account = node.state.account_of(address)
        if account is None:
            return _error(403, "UnknownAccount", "address is not registered")
        nonce = auth.take_challenge(address)
        if nonce is None:
            return _error(403, "ChallengeExpired", "request a fresh challenge")
        try:
            ok = crypto.verify(
                account.public_key, bytes.fromhex(nonce), bytes.fromhex(signature_hex)
            )
        except (ValueError, crypto.MalformedKey):
            ok = False
        if not ok:
            return _error(403, "BadSignature", "signature does not match the account key")
        session = auth.new_session(address, account.role.value)
        return {
            "token": session.token,
            "address": address,
            "role": session.role,
            "expires_in_s": SESSION_TTL_S,
        }

    @app.post("/auth/logout")
    def logout(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        if session is None:
            return _error(401, "NotSignedIn", "no active session")
        auth.drop(session.token)
        return {"ok": True}

    # ---- transactions -------------------------------------------------------

    @app.post("/tx")
    async def submit_tx(request: Request, authorization: str | None = Header(default=None)):
        try:
            body = await request.json()
            sender = body["sender"]
            nonce = int(body["nonce"])
            timestamp = int(body["timestamp"])
            signature = bytes.fromhex(body["signature"])
            # the command travels as the exact JSON string the client
            # signed; re-serializing here would break signatures whenever
            # two languages format a number differently
            command_raw = body["command"]
            if not isinstance(command_raw, str):
                raise TypeError("command must be a canonical JSON string")
            command = command_raw.encode("utf-8")
            command_obj = json.loads(command_raw)
        except (KeyError, TypeError, ValueError):
            return _error(400, "Malformed", "transaction body is incomplete")

        is_self_registration = (
            isinstance(command_obj, dict)
            and command_obj.get("kind") == commands.REGISTER_USER
            and _registers_self(command_obj, sender)
        )
        if not is_self_registration:
            session = session_of(authorization)
            if session is None:
                return _error(401, "NotSignedIn", "log in before submitting")
            if session.address != sender:
                return _error(403, SENDER_MISMATCH, "sender must match the session")

        body_bytes = tx_signing_bytes(sender, nonce, command, timestamp)
        tx = SignedTransaction(
            sender=sender,
            nonce=nonce,
            command=command,
            timestamp=timestamp,
            signature=signature,
            tx_hash=crypto.hash_bytes(body_bytes),
        )
        try:
            receipt = node.submit(tx)
        except SubmitRejected as exc:
            status = 409 if exc.conflict else 403
            if exc.reason in ("BadSignature", "BadHash"):
                status = 400
            return _error(status, exc.reason, f"transaction rejected: {exc.reason}")
        return receipt

    @app.get("/tx/{tx_hash}")
    def receipt(tx_hash: str):
        try:
            raw = bytes.fromhex(tx_hash.removeprefix("0x"))
        except ValueError:
            return _error(400, "Malformed", "transaction hash must be hex")
        found = node.receipt(raw)
        if found["status"] == "unknown":
            return _error(404, "UnknownTransaction", "no such transaction")
        return found

    # ---- reads -----------------------------------------------------------------

    @app.get("/me")
    def me(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.READ_PROFILE)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            account = node.state.account_of(session.address).to_dict()
            # clients build transactions locally and need the next nonce
            account["next_nonce"] = node.state.expected_nonce(
                session.address
            ) + node._pending_count(session.address)
            return account

    @app.get("/accounts/{address}/key")
    def account_key(address: str, authorization: str | None = Header(default=None)):
        """Public identity material only; needed by clients that seal
        envelopes to other participants (e.g. a doctor encrypting to a
        patient). Gated like any profile read."""
        session = session_of(authorization)
        decision = gated(session, Op.READ_PROFILE)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            account = node.state.account_of(address)
        if account is None:
            return _error(404, "UnknownAccount", "address is not registered")
        return {
            "address": account.address,
            "public_key": account.public_key.hex(),
            "role": account.role.value,
        }

    @app.get("/patients/{address}/records")
    def patient_records(address: str, authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.READ_RECORDS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            inner, records = node.state.records_for(session.address, address)
            if not inner.allowed:
                return _deny_response(inner.reason)
            return {"records": [r.to_dict() for r in records]}

    @app.get("/doctors/{address}/slots")
    def free_slots(
        address: str, date: str, authorization: str | None = Header(default=None)
    ):
        session = session_of(authorization)
        decision = gated(session, Op.LIST_FREE_SLOTS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            try:
                slots = node.state.free_slots(address, date)
            except DomainError as exc:
                return _error(400, exc.reason, f"cannot list slots: {exc.reason}")
            return {"doctor": address, "date": date, "free_slots": slots}

    @app.get("/appointments")
    def appointments(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.LIST_APPOINTMENTS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            return {
                "appointments": [
                    a.to_dict() for a in node.state.appointments_for(session.address)
                ]
            }

    @app.get("/prescriptions")
    def prescriptions(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.LIST_PRESCRIPTIONS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            return {
                "prescriptions": [
                    p.to_dict() for p in node.state.prescriptions_for(session.address)
                ]
            }

    @app.get("/lab-results")
    def lab_results(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.LIST_LAB_RESULTS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            return {
                "lab_results": [
                    r.to_dict() for r in node.state.lab_results_for(session.address)
                ]
            }

    @app.get("/admin/users")
    def admin_users(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.LIST_USERS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            return {"users": [a.to_dict() for a in node.state.users_sorted()]}

    @app.get("/admin/medications")
    def medications(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.READ_CATALOGS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            return {
                "medications": [m.to_dict() for m in node.state.medications_sorted()]
            }

    @app.get("/admin/lab-parameters")
    def lab_parameters(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.READ_CATALOGS)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            return {
                "lab_parameters": [
                    p.to_dict() for p in node.state.lab_parameters_sorted()
                ]
            }

    @app.get("/admin/export")
    def admin_export(
        dataset: str, format: str, authorization: str | None = Header(default=None)
    ):
        session = session_of(authorization)
        decision = gated(session, Op.EXPORT_DATA)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            try:
                payload = export.render(node.state, dataset, format)
            except export.ExportError as exc:
                return _error(400, "Malformed", str(exc))
        media = {"csv": "text/csv", "xml": "application/xml", "txt": "text/plain"}
        return Response(content=payload, media_type=media[format])

    @app.get("/audit")
    def audit(authorization: str | None = Header(default=None)):
        session = session_of(authorization)
        decision = gated(session, Op.READ_AUDIT)
        if not decision.allowed:
            return _deny_response(decision.reason)
        with node.lock:
            return {
                "audit": [e.to_dict() for e in node.state.audit_for(session.address)]
            }

    return app


def _registers_self(command_obj: dict, sender: str) -> bool:
    try:
        pk = bytes.fromhex(command_obj.get("public_key", ""))
        return crypto.address_of(pk) == sender
    except (ValueError, crypto.MalformedKey):
        return False


def build_client_tx(keypair, nonce: int, command_obj: dict, timestamp: int) -> dict:
    """What a signing client sends to POST /tx (used by tests and the CLI)."""
    command = canonical_json(command_obj)
    tx = build_transaction(keypair, nonce, command, timestamp)
    return {
        "sender": tx.sender,
        "nonce": tx.nonce,
        "command": command.decode("utf-8"),
        "timestamp": tx.timestamp,
        "signature": tx.signature.hex(),
    }
