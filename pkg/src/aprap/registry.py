"""Server-side tag database and the broadcast/identify steps.

On disk a registry is plain text::

    APRAPDB 1
    <tag_id> <hex SK*> <hex k> <period>
    ...

Pending (in-flight) session state is never written out.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import RegistryError
from .keys import MasterKey, PartialKey, SharedKey
from .primitives import DEFAULT_LAMBDA, BitString, HashFunction
from .protocol import SessionOutcome, server_auth_entry, server_verify

HEADER = "APRAPDB"
VERSION = 1


@dataclass(frozen=True)
class Pending:
    x_s: BitString
    x_t: BitString
    x: PartialKey
    created: float


@dataclass(eq=False)
class ServerRecord:
    tag_id: str
    sk_star: MasterKey
    key: SharedKey
    pending: Pending | None = None

    @property
    def period(self) -> int:
        return self.key.period

    def row(self) -> tuple[str, str, str, int]:
        return (self.tag_id, self.sk_star.sk_star.hex(), self.key.k.hex(), self.key.period)


def _check_id(tag_id: str) -> str:
    if not tag_id or any(c.isspace() for c in tag_id):
        raise ValueError(f"tag id must be non-empty without whitespace: {tag_id!r}")
    return tag_id


class Registry:
    def __init__(
        self,
        records: Iterable[ServerRecord] = (),
        lambda_bits: int = DEFAULT_LAMBDA,
        pending_timeout: float | None = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.lambda_bits = lambda_bits
        self.hasher = HashFunction(lambda_bits)
        self.pending_timeout = pending_timeout
        self.clock = clock
        self.lock = threading.RLock()
        self._records: list[ServerRecord] = []
        self._index: dict[str, int] = {}
        for r in records:
            self.add(r)

    @classmethod
    def from_keygen(cls, pairs, prefix: str = "tag", **kwargs) -> Registry:
        lam = pairs[0][1].k.nbits if pairs else DEFAULT_LAMBDA
        width = max(4, len(str(len(pairs))))
        recs = [
            ServerRecord(f"{prefix}{n + 1:0{width}d}", sk, k) for n, (sk, k) in enumerate(pairs)
        ]
        return cls(recs, lambda_bits=lam, **kwargs)

    def add(self, record: ServerRecord) -> None:
        _check_id(record.tag_id)
        if record.tag_id in self._index:
            raise ValueError(f"duplicate tag id {record.tag_id!r}")
        for v in (record.sk_star.sk_star, record.key.k):
            if v.nbits != self.lambda_bits:
                raise ValueError(f"{record.tag_id}: key is {v.nbits} bits, expected {self.lambda_bits}")
        self._index[record.tag_id] = len(self._records)
        self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ServerRecord]:
        return iter(self._records)

    def get(self, tag_id: str) -> ServerRecord:
        return self._records[self._index[tag_id]]

    def index_of(self, tag_id: str | None) -> int | None:
        return self._index.get(tag_id)

    def rows(self) -> list[tuple[str, str, str, int]]:
        return [r.row() for r in self._records]

    def broadcast_entries(self, x_s: BitString, x_t: BitString) -> list[tuple[BitString, BitString]]:
        """One ``(sigma, delta)`` per record in insertion order; 2 hashes each.

        Replaces whatever session each record had pending.
        """
        with self.lock:
            now = self.clock()
            return [server_auth_entry(r, x_s, x_t, self.hasher, now) for r in self._records]

    def _live(self, r: ServerRecord, x_s, x_t, now: float) -> bool:
        p = r.pending
        if p is None or p.x_s != x_s or p.x_t != x_t:
            return False
        if self.pending_timeout is not None and now - p.created > self.pending_timeout:
            r.pending = None
            return False
        return True

    def match_sigma_prime(
        self, x_s: BitString, x_t: BitString, sigma_prime: BitString
    ) -> tuple[str, SessionOutcome] | None:
        """Find the record whose pending session accepts ``sigma_prime``.

        The matching record's key advances. The exchange is closed for every
        record either way.
        """
        with self.lock:
            now = self.clock()
            found = None
            for r in self._records:
                if not self._live(r, x_s, x_t, now):
                    continue
                if found is None:
                    outcome = server_verify(r, x_s, x_t, sigma_prime, self.hasher)
                    if outcome.accepted:
                        found = (r.tag_id, outcome)
                r.pending = None
            return found

    def save(self, path: str | os.PathLike) -> None:
        """Write atomically: a crash leaves either the old or the new file."""
        path = Path(path)
        lines = [f"{HEADER} {VERSION}"]
        lines += [" ".join(map(str, row)) for row in self.rows()]
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike, **kwargs) -> Registry:
        try:
            text = Path(path).read_text(encoding="ascii")
        except UnicodeDecodeError as exc:
            raise RegistryError(f"{path}: not an ASCII registry file") from exc
        return cls.parse(text, source=str(path), **kwargs)

    @classmethod
    def parse(cls, text: str, source: str = "<registry>", **kwargs) -> Registry:
        if not text.endswith("\n"):
            raise RegistryError(f"{source}: truncated (no final newline)")
        lines = text.split("\n")[:-1]
        if not lines:
            raise RegistryError(f"{source}: empty file")
        head = lines[0].split()
        if len(head) != 2 or head[0] != HEADER:
            raise RegistryError(f"{source}:1: bad header {lines[0]!r}")
        if head[1] != str(VERSION):
            raise RegistryError(f"{source}:1: unsupported version {head[1]!r}")

        records = []
        lam = None
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split(" ")
            if len(parts) != 4:
                raise RegistryError(f"{source}:{lineno}: expected 4 fields, got {len(parts)}")
            tag_id, sk_hex, k_hex, period = parts
            try:
                if len(sk_hex) != len(k_hex) or not sk_hex:
                    raise ValueError("key lengths differ")
                nbits = len(sk_hex) * 4
                if lam is None:
                    lam = nbits
                elif nbits != lam:
                    raise ValueError(f"key length {nbits} differs from {lam}")
                rec = ServerRecord(
                    _check_id(tag_id),
                    MasterKey(BitString.from_hex(sk_hex, nbits)),
                    SharedKey(BitString.from_hex(k_hex, nbits), int(period)),
                )
            except ValueError as exc:
                raise RegistryError(f"{source}:{lineno}: {exc}") from exc
            records.append(rec)

        seen = set()
        for lineno, r in enumerate(records, start=2):
            if r.tag_id in seen:
                raise RegistryError(f"{source}:{lineno}: duplicate tag id {r.tag_id!r}")
            seen.add(r.tag_id)
        return cls(records, lambda_bits=lam or DEFAULT_LAMBDA, **kwargs)
