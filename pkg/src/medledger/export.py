"""Admin data export in three deterministic text formats.

Grammars (byte-exact, documented here and in the README):

CSV  — UTF-8, LF line endings, first line is the header, fields
       comma-separated, double-quote quoting only when a field contains
       a comma, quote, or newline.
XML  — single root element named after the dataset, one child element
       per row, fields as child elements in the documented order,
       UTF-8, no attributes.
TXT  — fixed-order `key: value` lines per row, rows separated by one
       blank line.

Rows are sorted by id (users by address). Sealed record content never
appears in any export: the admin role cannot read records, so the
exporter has no record dataset at all.
"""

from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

from .rbac import Decision, Op, check_access
from .state import State

DATASETS = ("users", "medications", "lab_parameters", "audit")
FORMATS = ("csv", "xml", "txt")

# dataset -> (row element name, ordered field names)
_FIELDS: dict[str, tuple[str, tuple[str, ...]]] = {
    "users": (
        "user",
        ("address", "role", "status", "name", "birth_date", "specialty", "registered_at"),
    ),
    "medications": ("medication", ("id", "name", "form", "strength", "added_by")),
    "lab_parameters": ("lab_parameter", ("id", "name", "unit", "low", "high")),
    "audit": (
        "entry",
        ("tx_hash", "actor", "operation", "outcome", "reason", "height", "timestamp"),
    ),
}


class ExportError(ValueError):
    pass


def _rows(state: State, dataset: str) -> list[dict]:
    if dataset == "users":
        return [
            {
                "address": a.address,
                "role": a.role.value,
                "status": a.status.value,
                "name": a.profile.get("name", ""),
                "birth_date": a.profile.get("birth_date", ""),
                "specialty": a.profile.get("specialty", ""),
                "registered_at": a.registered_at,
            }
            for a in state.users_sorted()
        ]
    if dataset == "medications":
        return [m.to_dict() for m in state.medications_sorted()]
    if dataset == "lab_parameters":
        return [p.to_dict() for p in state.lab_parameters_sorted()]
    if dataset == "audit":
        return [e.to_dict() for e in state.audit]
    raise ExportError(f"unknown dataset: {dataset}")


def _cell(value) -> str:
    if value is None:
        return ""
    return str(value)


def _render_csv(fields: tuple[str, ...], rows: list[dict]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_cell(row[f]) for f in fields])
    return buf.getvalue().encode("utf-8")


def _render_xml(
    dataset: str, element: str, fields: tuple[str, ...], rows: list[dict]
) -> bytes:
    parts = [f"<{dataset}>"]
    for row in rows:
        parts.append(f"  <{element}>")
        for f in fields:
            parts.append(f"    <{f}>{escape(_cell(row[f]))}</{f}>")
        parts.append(f"  </{element}>")
    parts.append(f"</{dataset}>")
    return ("\n".join(parts) + "\n").encode("utf-8")


def _render_txt(fields: tuple[str, ...], rows: list[dict]) -> bytes:
    blocks = []
    for row in rows:
        blocks.append("\n".join(f"{f}: {_cell(row[f])}" for f in fields))
    return ("\n\n".join(blocks) + ("\n" if blocks else "")).encode("utf-8")


def render(state: State, dataset: str, fmt: str) -> bytes:
    """Render one dataset; pure function of the state."""
    if dataset not in DATASETS:
        raise ExportError(f"unknown dataset: {dataset}")
    if fmt not in FORMATS:
        raise ExportError(f"unknown format: {fmt}")
    element, fields = _FIELDS[dataset]
    rows = _rows(state, dataset)
    if fmt == "csv":
        return _render_csv(fields, rows)
    if fmt == "xml":
        return _render_xml(dataset, element, fields, rows)
    return _render_txt(fields, rows)


def export(
    state: State, caller: str | None, dataset: str, fmt: str
) -> tuple[Decision, bytes]:
    """RBAC-gated export; only active admins get bytes back."""
    decision = check_access(caller, Op.EXPORT_DATA, state)
    if not decision.allowed:
        return decision, b""
    return decision, render(state, dataset, fmt)
