"""Batch in-memory simulation with cost and desync accounting."""

from __future__ import annotations

from dataclasses import dataclass, field

from .keys import keygen
from .primitives import DEFAULT_LAMBDA, Prng
from .protocol import SessionResult, TagState, run_session
from .registry import Registry
from .transport import FaultScript, MemoryLink


@dataclass
class SimMetrics:
    sessions: int = 0
    accepted: int = 0
    tag_accepts: int = 0
    server_accepts: int = 0
    tag_hash_calls: int = 0
    tag_prng_draws: int = 0
    tag_xor_ops: int = 0
    server_hash_calls: int = 0
    desync_events: int = 0
    desync_sessions: list[int] = field(default_factory=list)
    failed_sessions: list[int] = field(default_factory=list)
    # per accepted session (hash_calls, prng_draws, xor_ops); all equal for a single tag
    accepted_costs: set[tuple[int, int, int]] = field(default_factory=set)

    @property
    def accept_rate(self) -> float:
        return self.accepted / self.sessions if self.sessions else 0.0

    @property
    def tag_hash_equivalents(self) -> int:
        return self.tag_hash_calls + self.tag_prng_draws

    def to_dict(self) -> dict:
        return {
            "sessions": self.sessions,
            "accepted": self.accepted,
            "accept_rate": round(self.accept_rate, 6),
            "tag_accepts": self.tag_accepts,
            "server_accepts": self.server_accepts,
            "tag_hash_calls": self.tag_hash_calls,
            "tag_prng_draws": self.tag_prng_draws,
            "tag_hash_equivalents": self.tag_hash_equivalents,
            "tag_xor_ops": self.tag_xor_ops,
            "server_hash_calls": self.server_hash_calls,
            "desync_events": self.desync_events,
            "desync_sessions": list(self.desync_sessions),
            "failed_sessions": list(self.failed_sessions),
            "accepted_costs": sorted(self.accepted_costs),
        }

    def to_lines(self) -> list[str]:
        d = self.to_dict()
        return [f"{k}={' '.join(map(str, v)) if isinstance(v, list) else v}" for k, v in d.items()]


class Simulation:
    """``n_tags`` tags sharing one server and one link; sessions go round-robin.

    Sessions are numbered from 1; with four messages per session the
    sigma' of session ``j`` is link message ``4 * j`` when nothing is lost.
    """

    def __init__(
        self,
        n_tags: int = 1,
        seed: int = 1,
        lambda_bits: int = DEFAULT_LAMBDA,
        faults: FaultScript | None = None,
    ):
        self.rng = Prng(seed, lambda_bits)
        pairs = keygen(lambda_bits, n_tags, self.rng)
        self.registry = Registry.from_keygen(pairs)
        self.tags = [TagState(k, tag_id=r.tag_id) for (_, k), r in zip(pairs, self.registry)]
        self.link = MemoryLink(faults)
        self.metrics = SimMetrics()
        self._synced = [True] * n_tags

    def in_sync(self, n: int) -> bool:
        tag = self.tags[n]
        return tag.key == self.registry.get(tag.tag_id).key

    def step(self) -> SessionResult:
        m = self.metrics
        n = m.sessions % len(self.tags)
        tag = self.tags[n]
        server_before = self.registry.hasher.call_counter
        for ep in (self.link.server, self.link.tag):
            ep.drain()
        res = run_session(tag, self.registry, self.link, self.rng)
        m.sessions += 1
        c = tag.counts
        m.tag_hash_calls += c.hash_calls
        m.tag_prng_draws += c.prng_draws
        m.tag_xor_ops += c.xor_ops
        m.server_hash_calls += self.registry.hasher.call_counter - server_before
        m.tag_accepts += res.tag.accepted
        m.server_accepts += res.server.accepted
        if res.accepted and res.matched == tag.tag_id:
            m.accepted += 1
            m.accepted_costs.add((c.hash_calls, c.prng_draws, c.xor_ops))
        else:
            m.failed_sessions.append(m.sessions)
        synced = self.in_sync(n)
        if self._synced[n] and not synced:
            m.desync_events += 1
            m.desync_sessions.append(m.sessions)
        self._synced[n] = synced
        return res

    def run(self, sessions: int) -> SimMetrics:
        for _ in range(sessions):
            self.step()
        return self.metrics
