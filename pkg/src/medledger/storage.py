"""Durable persistence: append-only chain log plus periodic state
snapshots, recovered by replay.

The log is a sequence of `[u32 length][u32 crc32][block bytes]` records,
fsynced before an append is acknowledged. On recovery a checksum
failure in the final record means a torn tail: that record is dropped
and the file truncated. A checksum failure with readable records after
it means real corruption, and loading refuses to continue past it.

Snapshots are whole-state JSON files written atomically
(write-temp-then-rename) and guarded by a SHA-256 over their content;
a damaged snapshot is skipped in favor of an older one, and replay
cross-checks every snapshot root it passes.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

from . import crypto
from .encoding import DecodeError, canonical_json
from .genesis import GenesisSpec, make_genesis_block
from .ledger import Block, validate_block
from .state import State

GENESIS_FILE = "genesis.json"
CHAIN_LOG = "chain.log"
SNAPSHOT_DIR = "snapshots"

_RECORD_HEADER = struct.Struct(">II")  # payload length, crc32


class StorageError(Exception):
    pass


class MidLogCorruption(StorageError):
    """A damaged record with intact records after it; nothing past the
    damage can be trusted."""

    def __init__(self, last_good_height: int):
        super().__init__(
            f"log corrupted after height {last_good_height}; refusing to load past it"
        )
        self.last_good_height = last_good_height


class ReplayMismatch(StorageError):
    """Replay reached a snapshot height with a different state root."""


class ChainLog:
    def __init__(self, path: Path):
        self.path = Path(path)

    def append(self, payload: bytes) -> None:
        """Write one record and flush it to disk before returning."""
        record = _RECORD_HEADER.pack(len(payload), zlib.crc32(payload)) + payload
        with open(self.path, "ab") as fh:
            fh.write(record)
            fh.flush()
            os.fsync(fh.fileno())

    def _scan(self, data: bytes):
        """Yield (offset, payload-or-None) for each record; payload None
        marks a record whose checksum failed but whose extent is known."""
        offset = 0
        while offset < len(data):
            if offset + _RECORD_HEADER.size > len(data):
                yield offset, None, True  # torn header
                return
            length, crc = _RECORD_HEADER.unpack_from(data, offset)
            start = offset + _RECORD_HEADER.size
            end = start + length
            if end > len(data):
                yield offset, None, True  # torn payload
                return
            payload = data[start:end]
            if zlib.crc32(payload) != crc:
                yield offset, None, False
                offset = end
                continue
            yield offset, payload, False
            offset = end

    def read_records(self, truncate_torn_tail: bool = True) -> list[bytes]:
        """All intact records. A final damaged record is dropped (and the
        file truncated); damage in the middle raises MidLogCorruption."""
        if not self.path.exists():
            return []
        data = self.path.read_bytes()
        records: list[bytes] = []
        bad_seen_at: int | None = None
        for offset, payload, torn in self._scan(data):
            if payload is None:
                bad_seen_at = offset
                continue
            if bad_seen_at is not None:
                # intact data after a bad record: not a torn tail
                raise MidLogCorruption(last_good_height=len(records) - 1)
            records.append(payload)
        if bad_seen_at is not None and truncate_torn_tail:
            with open(self.path, "r+b") as fh:
                fh.truncate(bad_seen_at)
        return records


class SnapshotStore:
    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def _path(self, height: int) -> Path:
        return self.directory / f"height-{height}.snap"

    def write(self, height: int, state: State) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        body = {
            "height": height,
            "state_root": state.state_root().hex(),
            "state": state.to_snapshot_dict(),
        }
        body["checksum"] = crypto.hash_bytes(canonical_json(body)).hex()
        tmp = self._path(height).with_suffix(".tmp")
        tmp.write_bytes(canonical_json(body))
        os.replace(tmp, self._path(height))

    def heights(self) -> list[int]:
        if not self.directory.exists():
            return []
        found = []
        for entry in self.directory.glob("height-*.snap"):
            try:
                found.append(int(entry.stem.split("-", 1)[1]))
            except ValueError:
                continue
        return sorted(found)

    def load(self, height: int) -> tuple[int, bytes, State] | None:
        """Returns (height, state_root, state) or None when unusable."""
        path = self._path(height)
        try:
            body = json.loads(path.read_bytes())
            claimed = body.pop("checksum")
            if crypto.hash_bytes(canonical_json(body)).hex() != claimed:
                return None
            state = State.from_snapshot_dict(body["state"])
            root = bytes.fromhex(body["state_root"])
            if state.state_root() != root:
                return None
            return body["height"], root, state
        except (OSError, ValueError, KeyError, TypeError):
            return None

    def load_latest(self, max_height: int | None = None):
        for height in reversed(self.heights()):
            if max_height is not None and height > max_height:
                continue
            loaded = self.load(height)
            if loaded is not None:
                return loaded
        return None

    def claimed_root(self, height: int) -> bytes | None:
        """The root a checksum-intact snapshot claims, without rebuilding
        its state; used to cross-check replay determinism."""
        try:
            body = json.loads(self._path(height).read_bytes())
            claimed = body.pop("checksum")
            if crypto.hash_bytes(canonical_json(body)).hex() != claimed:
                return None
            return bytes.fromhex(body["state_root"])
        except (OSError, ValueError, KeyError, TypeError):
            return None


class NodeStore:
    """One data directory: genesis spec, chain log, snapshots."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.log = ChainLog(self.data_dir / CHAIN_LOG)
        self.snapshots = SnapshotStore(self.data_dir / SNAPSHOT_DIR)

    @classmethod
    def initialize(cls, data_dir: Path, genesis_spec: GenesisSpec) -> "NodeStore":
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        if any(data_dir.iterdir()):
            raise StorageError(f"refusing to initialize non-empty directory {data_dir}")
        (data_dir / GENESIS_FILE).write_bytes(
            json.dumps(genesis_spec.to_dict(), indent=2).encode() + b"\n"
        )
        store = cls(data_dir)
        store.log.append(make_genesis_block(genesis_spec).encode())
        return store

    def load_genesis_spec(self) -> GenesisSpec:
        path = self.data_dir / GENESIS_FILE
        if not path.exists():
            raise StorageError(f"no genesis spec at {path}")
        return GenesisSpec.from_dict(json.loads(path.read_text()))

    def append_block(self, block: Block) -> None:
        self.log.append(block.encode())

    def write_snapshot(self, height: int, state: State) -> None:
        self.snapshots.write(height, state)

    def recover(self) -> tuple[GenesisSpec, list[Block], State]:
        """Rebuild (spec, chain, state); validates every replayed block and
        cross-checks any snapshot root passed along the way."""
        spec = self.load_genesis_spec()
        records = self.log.read_records()
        if not records:
            raise StorageError("chain log is empty; data directory not initialized")
        blocks: list[Block] = []
        for i, record in enumerate(records):
            try:
                blocks.append(Block.from_bytes(record))
            except DecodeError as exc:
                raise MidLogCorruption(last_good_height=i - 1) from exc
        genesis = make_genesis_block(spec)
        if blocks[0].block_hash != genesis.block_hash:
            raise StorageError("genesis block does not match the genesis spec")
        for a, b in zip(blocks, blocks[1:]):
            if b.height != a.height + 1:
                raise MidLogCorruption(last_good_height=a.height)

        snapshot_roots = {}
        start_height = 0
        state = None
        loaded = self.snapshots.load_latest(max_height=blocks[-1].height)
        if loaded is not None:
            start_height, _root, state = loaded
        if state is None:
            state = State.from_genesis(spec)  # cold start, no valid snapshot
        for height in self.snapshots.heights():
            root = self.snapshots.claimed_root(height)
            if root is not None:
                snapshot_roots[height] = root

        chain: list[Block] = blocks[: start_height + 1]
        parent = blocks[start_height]
        for block in blocks[start_height + 1 :]:
            reason = validate_block(block, parent, spec.consensus, state)
            if reason is not None:
                raise StorageError(
                    f"block {block.height} failed validation on replay: {reason}"
                )
            for tx in block.transactions:
                state.apply(tx, block.height)
            known_root = snapshot_roots.get(block.height)
            if known_root is not None and state.state_root() != known_root:
                raise ReplayMismatch(
                    f"replayed root at height {block.height} differs from snapshot"
                )
            chain.append(block)
            parent = block
        return spec, chain, state
