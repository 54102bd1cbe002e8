"""Built-in adversary strategies.

All of them follow the same game script (eavesdrop on every other tag,
eavesdrop on the challenge tag, then do whatever reveal/test dance the
game requires) and differ only in how they turn the test output into a
guess.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .primitives import BitString, Prng, concat, hash_bits, split, xor
from .protocol import Transcript


@dataclass
class View:
    seen: list[tuple[int, Transcript]] = field(default_factory=list)
    revealed: tuple[int, BitString] | None = None  # (period, key)

    def of(self, tag: int) -> list[Transcript]:
        return [t for owner, t in self.seen if owner == tag]


def sigma_verifies(k: BitString, tr: Transcript) -> bool:
    """Would a tag holding ``k`` accept this transcript's (sigma, delta)?"""
    lam = k.nbits
    if any(f is None or f.nbits != lam for f in (tr.x_s, tr.x_t, tr.sigma, tr.delta)):
        return False
    x = xor(tr.delta, k)
    return hash_bits(concat(split(k)[0], x, tr.x_s, tr.x_t), lam) == tr.sigma


def ratchet(k: BitString, tr: Transcript) -> BitString:
    """Replay the tag's key update on an eavesdropped session."""
    x = xor(tr.delta, k)
    return hash_bits(concat(split(k)[1], split(x)[1], tr.x_s), k.nbits)


class Adversary:
    name = "Adversary"
    sessions_before_test = 2

    def reset(self, rng: Prng) -> None:
        self.rng = rng
        self.view = View()

    def eavesdrop(self, oracles, tag: int) -> Transcript:
        name = "execute" if oracles.permits("execute") else "execute_b"
        tr = getattr(oracles, name)(tag)
        self.view.seen.append((tag, tr))
        return tr

    def learning_phase(self, oracles, tags: list[int]) -> None:
        for t in tags:
            self.eavesdrop(oracles, t)

    def challenge_phase(self, oracles, target: int) -> int:
        for _ in range(self.sessions_before_test):
            self.eavesdrop(oracles, target)
        game = oracles.game
        if game == "ind":
            test = oracles.test(target, oracles.period(target))
        elif game == "forward":
            oracles.idle(target)
            i = oracles.period(target)
            self.view.revealed = (i, oracles.reveal_secret(target, i))
            test = oracles.test(target, i - 1)
        else:
            i = oracles.period(target)
            self.view.revealed = (i, oracles.reveal_secret(target, i))
            self.eavesdrop(oracles, target)
            test = oracles.test(target, i + 1)
        self.probe(oracles, target, test)
        return self.decide(target, test)

    def probe(self, oracles, target: int, test: Transcript) -> None:
        pass

    def decide(self, target: int, test: Transcript) -> int:
        raise NotImplementedError


class RandomGuesser(Adversary):
    name = "RandomGuesser"

    def decide(self, target, test):
        return self.rng.bit()


class ReplayDistinguisher(Adversary):
    """Feeds the test's (sigma, delta) and an old one back to the tag.

    If the tag answered replays deterministically the echo would match the
    test's sigma'; it guesses "real" when it sees such an echo.
    """

    name = "ReplayDistinguisher"

    def probe(self, oracles, target, test):
        self.echoes = []
        replays = [test] + self.view.of(target)[:1]
        for tr in replays:
            oracles.query_prime(target)
            if oracles.permits("reply_prime"):
                echo = oracles.reply_prime(target, tr.x_s, tr.sigma, tr.delta)
            else:
                echo = oracles.reply_b(target, tr.x_s, tr.sigma, tr.delta)
            self.echoes.append(echo)

    def decide(self, target, test):
        seen = {tr.sigma_prime for tr in self.view.of(target)}
        return int(any(e == test.sigma_prime or e in seen for e in self.echoes))


class CompromiseTracer(Adversary):
    """Ratchets a revealed key along eavesdropped sessions, then checks the test.

    Under the restricted oracles the challenge it ratchets with is a decoy,
    so the derived key is wrong and the check fails on real and random
    test output alike.
    """

    name = "CompromiseTracer"

    def key_for(self, target: int, period: int) -> BitString | None:
        if self.view.revealed is None:
            return None
        p, k = self.view.revealed
        for tr in self.view.of(target):
            if tr.period == p and p < period:
                k = ratchet(k, tr)
                p += 1
        return k

    def decide(self, target, test):
        k = self.key_for(target, test.period)
        return int(k is not None and sigma_verifies(k, test))


class SigmaLinker(Adversary):
    """Tries to link the test to earlier sessions without any key material.

    Every value it has seen is tried as a key candidate, and repeated sigma
    or delta values count as links.
    """

    name = "SigmaLinker"

    def decide(self, target, test):
        earlier = [tr for _, tr in self.view.seen]
        for tr in earlier:
            if test.sigma == tr.sigma or test.delta == tr.delta:
                return 1
        candidates = {f for tr in earlier for f in tr.fields() if f is not None}
        return int(any(sigma_verifies(c, test) for c in candidates))


def builtin_adversaries() -> dict[str, type[Adversary]]:
    return {
        cls.name: cls
        for cls in (RandomGuesser, ReplayDistinguisher, CompromiseTracer, SigmaLinker)
    }
