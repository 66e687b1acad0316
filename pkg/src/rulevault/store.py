"""Durable device-keyed record store backed by an append log.

File layout (docs/wire-format.md):

    header:  6-byte magic "RVSTOR" + 2-byte big-endian format version (1)
    record:  4-byte BE length + device id UTF-8,
             4-byte BE length + sealed record JSON UTF-8

Re-provisioning a device appends a new record; on replay the latest record
for a device wins. With path=None the store is memory-only.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Iterator

from .envelope import SealedRecord, sealed_record_from_obj, sealed_record_to_obj
from .errors import SchemaError

logger = logging.getLogger(__name__)

MAGIC = b"RVSTOR"
FORMAT_VERSION = 1


class SealedStore:
    def __init__(self, path: str | None = None):
        self.path = path
        self._records: dict[str, SealedRecord] = {}
        self._fh = None
        if path is not None:
            self._open_or_create(path)

    def _open_or_create(self, path: str) -> None:
        if os.path.exists(path) and os.path.getsize(path) > 0:
            with open(path, "rb") as fh:
                self._replay(fh.read())
            self._fh = open(path, "ab")
        else:
            self._fh = open(path, "wb")
            self._fh.write(MAGIC + FORMAT_VERSION.to_bytes(2, "big"))
            self._fh.flush()

    def _replay(self, data: bytes) -> None:
        if data[:6] != MAGIC:
            raise SchemaError(f"{self.path}: not a rulevault store file")
        version = int.from_bytes(data[6:8], "big")
        if version != FORMAT_VERSION:
            raise SchemaError(f"{self.path}: unsupported store format version {version}")
        offset = 8
        while offset < len(data):
            device, offset = self._read_chunk(data, offset)
            record_json, offset = self._read_chunk(data, offset)
            record = sealed_record_from_obj(json.loads(record_json))
            self._records[device.decode("utf-8")] = record
        logger.debug("replayed %d device records from %s", len(self._records), self.path)

    @staticmethod
    def _read_chunk(data: bytes, offset: int) -> tuple[bytes, int]:
        if offset + 4 > len(data):
            raise SchemaError("store file truncated")
        length = int.from_bytes(data[offset : offset + 4], "big")
        offset += 4
        if offset + length > len(data):
            raise SchemaError("store file truncated")
        return data[offset : offset + length], offset + length

    def get(self, device: str) -> SealedRecord | None:
        return self._records.get(device)

    def put(self, device: str, record: SealedRecord) -> bytes:
        """Store a record; returns the serialized bytes that were persisted."""
        encoded = json.dumps(sealed_record_to_obj(record), separators=(",", ":")).encode("utf-8")
        self._records[device] = record
        if self._fh is not None:
            device_bytes = device.encode("utf-8")
            self._fh.write(len(device_bytes).to_bytes(4, "big"))
            self._fh.write(device_bytes)
            self._fh.write(len(encoded).to_bytes(4, "big"))
            self._fh.write(encoded)
        return encoded

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self.flush()
            self._fh.close()
            self._fh = None

    def devices(self) -> list[str]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, device: str) -> bool:
        return device in self._records

    def __iter__(self) -> Iterator[str]:
        return iter(self._records)
