"""Tag and server halves of one authentication session.

Message flow::

    server -> tag   Challenge(x_s)
    tag -> server   TagNonce(x_t)
    server -> tag   ServerAuth([(sigma, delta), ...])   one entry per record
    tag -> server   TagAuth(sigma')

with ``x = H(u64(i) || SK* || k)``, ``sigma = H(k' || x || x_s || x_t)``,
``delta = k XOR x``, ``sk = k' || x'``, ``sigma' = H(x_t || x_s || sk)`` and
``k_next = H(k'' || x'' || x_s)`` where ``'`` and ``''`` are first and
second halves.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence, Union

from .errors import ChannelClosed, ChannelTimeout, DecodeError, SessionStateError
from .keys import SharedKey, partial_key, session_key, update_key
from .primitives import BitString, HashFunction, Prng, concat, split, xor

if TYPE_CHECKING:
    from .registry import Registry, ServerRecord


class Reason(str, enum.Enum):
    OK = "ok"
    SIGMA_MISMATCH = "sigma_mismatch"
    SIGMA_PRIME_MISMATCH = "sigma_prime_mismatch"
    MALFORMED = "malformed"
    LOST = "lost"  # expected message never arrived


@dataclass(frozen=True)
class SessionOutcome:
    accepted: bool
    side: str
    reason: Reason

    def __post_init__(self):
        if self.accepted != (self.reason is Reason.OK):
            raise ValueError("reason must be ok exactly when accepted")
        if self.side not in ("tag", "server"):
            raise ValueError(f"unknown side {self.side!r}")


@dataclass(frozen=True)
class Challenge:
    x_s: BitString


@dataclass(frozen=True)
class TagNonce:
    x_t: BitString


@dataclass(frozen=True)
class ServerAuth:
    entries: tuple[tuple[BitString, BitString], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(e) for e in self.entries))


@dataclass(frozen=True)
class TagAuth:
    sigma_prime: BitString


SessionMsg = Union[Challenge, TagNonce, ServerAuth, TagAuth]


@dataclass(frozen=True)
class Transcript:
    """What an eavesdropper sees of one session. ``tag_id`` is bookkeeping only."""

    x_s: BitString | None
    x_t: BitString | None
    sigma: BitString | None
    delta: BitString | None
    sigma_prime: BitString | None
    period: int
    tag_id: str | None = None

    def fields(self) -> tuple:
        return (self.x_s, self.x_t, self.sigma, self.delta, self.sigma_prime)

    def complete(self) -> bool:
        return all(f is not None for f in self.fields())


@dataclass
class OpCounts:
    hash_calls: int = 0
    prng_draws: int = 0
    xor_ops: int = 0

    @property
    def hash_equivalents(self) -> int:
        # hash and PRNG cost the same
        return self.hash_calls + self.prng_draws


class TagPhase(enum.Enum):
    IDLE = "idle"
    RESPONDED = "responded"


@dataclass(eq=False)
class TagState:
    """A tag. ``key`` is the only value that persists between sessions."""

    key: SharedKey
    tag_id: str | None = None
    counts: OpCounts = field(default_factory=OpCounts)
    phase: TagPhase = TagPhase.IDLE
    _x_t: BitString | None = field(default=None, repr=False)

    def __post_init__(self):
        self.hasher = HashFunction(self.key.k.nbits)

    @property
    def lambda_bits(self) -> int:
        return self.key.k.nbits

    @property
    def period(self) -> int:
        return self.key.period

    def secret_bytes(self) -> bytes:
        return self.key.k.to_bytes()

    def volatile(self) -> dict:
        """Per-session material still held; empty between sessions."""
        return {"x_t": self._x_t} if self._x_t is not None else {}

    def _h(self, bits: BitString) -> BitString:
        self.counts.hash_calls += 1
        return self.hasher(bits)

    def _draw(self, rng: Prng) -> BitString:
        self.counts.prng_draws += 1
        return rng.draw()

    def _erase(self) -> None:
        if self._x_t is not None:
            self._x_t = BitString.zeros(self._x_t.nbits)
        self._x_t = None
        self.phase = TagPhase.IDLE


def server_begin(rng: Prng) -> Challenge:
    return Challenge(rng.draw())


def tag_respond(state: TagState, challenge: Challenge, rng: Prng) -> TagNonce:
    """Draw ``x_t``. Starts a fresh session, abandoning any unfinished one."""
    state._erase()
    state.counts = OpCounts()
    x_t = state._draw(rng)
    state._x_t = x_t
    state.phase = TagPhase.RESPONDED
    return TagNonce(x_t)


def server_auth_entry(
    record: ServerRecord, x_s: BitString, x_t: BitString, h: HashFunction, now: float = 0.0
) -> tuple[BitString, BitString]:
    """Compute ``(sigma, delta)`` for one record and park the session as pending.

    Two hash calls and one XOR.
    """
    from .registry import Pending

    k = record.key
    x = partial_key(k.period, record.sk_star, k, h)
    k1, _ = split(k.k)
    sigma = h(concat(k1, x.x, x_s, x_t))
    delta = xor(k.k, x.x)
    record.pending = Pending(x_s=x_s, x_t=x_t, x=x, created=now)
    return sigma, delta


def _well_formed(lam: int, x_s: BitString, entries) -> bool:
    if x_s.nbits != lam:
        return False
    for entry in entries:
        if len(entry) != 2 or any(v.nbits != lam for v in entry):
            return False
    return True


def _decoy(state: TagState, rng: Prng, reason: Reason) -> tuple[TagAuth, SessionOutcome]:
    sigma_prime = state._draw(rng)
    state._erase()
    return TagAuth(sigma_prime), SessionOutcome(False, "tag", reason)


def tag_verify_and_reply(
    state: TagState,
    x_s: BitString,
    entries: Sequence[tuple[BitString, BitString]],
    rng: Prng,
    x_t: BitString | None = None,
) -> tuple[TagAuth, SessionOutcome]:
    """Scan broadcast entries in order; first entry whose sigma verifies wins.

    Per scanned entry: one XOR and one hash. On a match two more hashes
    (sigma' and the key update). With no match the reply is a fresh random
    value of the same length, so failure looks like success on the wire.
    """
    if state.phase is not TagPhase.RESPONDED:
        raise SessionStateError("tag has not sent a nonce in this session")
    if x_t is not None and x_t != state._x_t:
        raise ValueError("x_t is not the nonce this tag sent")
    x_t = state._x_t
    lam = state.lambda_bits
    if not _well_formed(lam, x_s, entries):
        return _decoy(state, rng, Reason.MALFORMED)

    k1, k2 = split(state.key.k)
    for sigma, delta in entries:
        x = xor(delta, state.key.k)
        state.counts.xor_ops += 1
        if state._h(concat(k1, x, x_s, x_t)) != sigma:
            continue
        x1, x2 = split(x)
        sk = session_key(state.period, k1, x1, lam)
        sigma_prime = state._h(concat(x_t, x_s, sk.sk))
        state.key = update_key(state.period, k2, x2, x_s, state._h)
        state._erase()
        return TagAuth(sigma_prime), SessionOutcome(True, "tag", Reason.OK)
    return _decoy(state, rng, Reason.SIGMA_MISMATCH)


def tag_abort(state: TagState, rng: Prng) -> TagAuth:
    """Reply to an unparseable server message with a decoy."""
    if state.phase is not TagPhase.RESPONDED:
        raise SessionStateError("tag has not sent a nonce in this session")
    return _decoy(state, rng, Reason.MALFORMED)[0]


def server_verify(
    record: ServerRecord, x_s: BitString, x_t: BitString, sigma_prime: BitString, h: HashFunction
) -> SessionOutcome:
    """Check sigma' against the pending session; commit ``k_{i+1}`` on success."""
    p = record.pending
    if p is None or p.x_s != x_s or p.x_t != x_t:
        raise SessionStateError(f"no pending session for {record.tag_id!r} with these nonces")
    lam = record.key.k.nbits
    if sigma_prime.nbits != lam:
        return SessionOutcome(False, "server", Reason.MALFORMED)
    k1, k2 = split(record.key.k)
    x1, x2 = split(p.x.x)
    sk = session_key(record.key.period, k1, x1, lam)
    if h(concat(x_t, x_s, sk.sk)) != sigma_prime:
        return SessionOutcome(False, "server", Reason.SIGMA_PRIME_MISMATCH)
    record.key = update_key(record.key.period, k2, x2, x_s, h)
    record.pending = None
    return SessionOutcome(True, "server", Reason.OK)


@dataclass
class SessionResult:
    transcript: Transcript
    tag: SessionOutcome
    server: SessionOutcome
    matched: str | None = None  # tag_id the server believes it authenticated
    failed_at: str | None = None  # first message that did not arrive intact

    @property
    def accepted(self) -> bool:
        return self.tag.accepted and self.server.accepted


def _recv(endpoint, expected: type, timeout):
    """Receive one message; map channel trouble to an outcome reason."""
    try:
        msg = endpoint.recv(timeout=timeout)
    except (ChannelTimeout, ChannelClosed):
        return None, Reason.LOST
    except DecodeError:
        return None, Reason.MALFORMED
    if not isinstance(msg, expected):
        return None, Reason.MALFORMED
    return msg, None


def run_session(
    tag: TagState,
    registry: Registry,
    link,
    rng: Prng,
    tag_rng: Prng | None = None,
    timeout: float | None = None,
) -> SessionResult:
    """Drive both parties through one session over ``link``.

    ``link.server`` and ``link.tag`` are the two channel endpoints. Server
    and tag draw from ``rng`` unless a separate ``tag_rng`` is given.
    """
    tag_rng = rng if tag_rng is None else tag_rng
    period = tag.period
    sent = dict.fromkeys(("x_s", "x_t", "sigma", "delta", "sigma_prime"))

    def result(tag_out, server_out, failed_at=None, matched=None):
        return SessionResult(
            Transcript(period=period, tag_id=tag.tag_id, **sent),
            tag_out,
            server_out,
            matched,
            failed_at,
        )

    def fail(tag_reason, server_reason, where):
        return result(
            SessionOutcome(False, "tag", tag_reason),
            SessionOutcome(False, "server", server_reason),
            where,
        )

    # 1. challenge
    challenge = server_begin(rng)
    x_s = challenge.x_s
    sent["x_s"] = x_s
    link.server.send(challenge)
    got, why = _recv(link.tag, Challenge, timeout)
    if got is None:
        return fail(why, Reason.LOST, "challenge")

    # 2. tag nonce
    nonce = tag_respond(tag, got, tag_rng)
    sent["x_t"] = nonce.x_t
    tag_seen_x_s = got.x_s
    link.tag.send(nonce)
    got, why = _recv(link.server, TagNonce, timeout)
    if got is None:
        tag._erase()
        return fail(Reason.LOST, why, "tag_nonce")
    x_t = got.x_t

    # 3. broadcast
    entries = registry.broadcast_entries(x_s, x_t)
    mine = registry.index_of(tag.tag_id)
    if mine is not None:
        sent["sigma"], sent["delta"] = entries[mine]
    link.server.send(ServerAuth(tuple(entries)))
    got, why = _recv(link.tag, ServerAuth, timeout)
    if got is None and why is Reason.LOST:
        tag._erase()
        return fail(why, Reason.LOST, "server_auth")
    failed_at = None
    if got is None:
        failed_at = "server_auth"
        reply = tag_abort(tag, tag_rng)
        tag_out = SessionOutcome(False, "tag", Reason.MALFORMED)
    else:
        reply, tag_out = tag_verify_and_reply(tag, tag_seen_x_s, got.entries, tag_rng)
    sent["sigma_prime"] = reply.sigma_prime

    # 4. tag authentication
    link.tag.send(reply)
    got, why = _recv(link.server, TagAuth, timeout)
    if got is None:
        return result(tag_out, SessionOutcome(False, "server", why), failed_at or "tag_auth")
    match = registry.match_sigma_prime(x_s, x_t, got.sigma_prime)
    if match is None:
        server_out = SessionOutcome(False, "server", Reason.SIGMA_PRIME_MISMATCH)
        return result(tag_out, server_out, failed_at)
    tag_id, server_out = match
    return result(tag_out, server_out, failed_at, matched=tag_id)
