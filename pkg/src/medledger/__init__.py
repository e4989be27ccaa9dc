"""MedLedger: a permissioned EHR ledger with pluggable consensus."""

__version__ = "0.1.0"
