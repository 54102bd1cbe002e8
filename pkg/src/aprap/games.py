"""Oracle interface and the three privacy games.

Each trial builds a fresh world (tags + server) from a per-trial PRNG
stream, picks the challenge tag, and hands the adversary an ``Oracles``
facade that only exposes what the game permits.

Games:

``ind``
    Learning on the other tags, sessions with the challenge tag, then
    ``test`` on its current period. No key reveal.
``forward``
    As ``ind`` plus ``reveal_secret`` at period ``i``; ``test`` must target
    ``i - 1``, a session the adversary did not eavesdrop (see ``idle``).
``backward``
    Eavesdropping only via the ``*_b`` oracles, which show a random value
    in place of the server challenge. ``reveal_secret`` at ``i``, then
    ``test`` at ``i + 1``.
``backward-unrestricted``
    ``backward`` with the full ``execute``/``query``/``reply_prime`` oracles
    opened up after the reveal. The tracer should win it outright.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field

from .keys import keygen
from .primitives import DEFAULT_LAMBDA, BitString, Prng
from .protocol import Challenge, TagPhase, TagState, Transcript, tag_respond, tag_verify_and_reply
from .registry import Registry

GAMES = ("ind", "forward", "backward", "backward-unrestricted")

_FULL = {"query", "query_prime", "reply", "reply_prime", "execute"}
_RESTRICTED = {"query_b", "query_prime", "reply", "reply_b", "execute_b"}
_ALWAYS = {"test", "idle", "period"}

WHITELISTS = {
    "ind": _FULL | _ALWAYS,
    "forward": _FULL | _ALWAYS | {"reveal_secret"},
    "backward": _RESTRICTED | _ALWAYS | {"reveal_secret"},
    "backward-unrestricted": _RESTRICTED | _ALWAYS | {"reveal_secret"},
}
# opened only once the secret has been revealed
POST_REVEAL = {"backward-unrestricted": _FULL}

_BUDGET_OF = {"execute": "e1", "reply": "r1", "reply_prime": "r2", "execute_b": "e2", "reply_b": "rb"}


class Disqualified(Exception):
    """The adversary broke the rules of the game it is playing."""


class LeakError(AssertionError):
    """A hidden challenge value reached adversary-visible output."""


@dataclass(frozen=True)
class Budgets:
    e1: int = 64  # Execute
    r1: int = 64  # Reply
    e2: int = 64  # Execute_b
    r2: int = 64  # Reply'
    rb: int = 64  # Reply_b


@dataclass
class _Logged:
    tag: int
    truth: Transcript
    observed: bool


class OracleContext:
    """One trial's world. All randomness comes from ``rng``."""

    def __init__(
        self,
        game: str,
        n_tags: int,
        rng: Prng,
        lambda_bits: int = DEFAULT_LAMBDA,
        budgets: Budgets | None = None,
    ):
        if game not in GAMES:
            raise ValueError(f"unknown game {game!r}")
        self.game = game
        self.rng = rng
        self.lambda_bits = lambda_bits
        self.budgets = budgets or Budgets()
        pairs = keygen(lambda_bits, n_tags, rng)
        self.registry = Registry.from_keygen(pairs)
        self.tags = [TagState(k, tag_id=rec.tag_id) for (_, k), rec in zip(pairs, self.registry)]
        self.log: list[_Logged] = []
        self.hidden: set[BitString] = set()
        self.used: Counter = Counter()
        self.phase = "setup"
        self.challenge_tag: int | None = None
        self.revealed: tuple[int, int] | None = None
        self.tested: tuple[int, int] | None = None
        self.b: int | None = None
        self._x_s: BitString | None = None
        self._rand_map: dict[BitString, BitString] = {}
        self._owner: dict[BitString, int] = {}

    # rules

    def permits(self, name: str) -> bool:
        if name in WHITELISTS[self.game]:
            return True
        return self.revealed is not None and name in POST_REVEAL.get(self.game, ())

    def _gate(self, name: str, tag: int | None = None) -> None:
        if not self.permits(name):
            raise Disqualified(f"{name} is not available in the {self.game} game")
        if tag is not None:
            if not 0 <= tag < len(self.tags):
                raise Disqualified(f"no tag {tag}")
            if self.phase == "learning" and tag == self.challenge_tag:
                raise Disqualified("learning phase must leave the challenge tag alone")
        budget = _BUDGET_OF.get(name)
        if budget:
            self.used[budget] += 1
            if self.used[budget] > getattr(self.budgets, budget):
                raise Disqualified(f"{name} budget {budget} exhausted")

    def _release(self, *values):
        for v in values:
            if v in self.hidden:
                raise LeakError("hidden challenge value released to the adversary")
        return values[0] if len(values) == 1 else values

    # raw oracle steps, ungated

    def _query(self) -> BitString:
        self._x_s = self.rng.draw()
        return self._x_s

    def _query_b(self) -> BitString:
        x_s = self.rng.draw()
        x_rand = self.rng.draw()
        self._x_s = x_s
        self.hidden.add(x_s)
        self._rand_map[x_rand] = x_s
        return x_rand

    def _query_prime(self, tag: int) -> BitString:
        x_s = self._x_s if self._x_s is not None else BitString.zeros(self.lambda_bits)
        x_t = tag_respond(self.tags[tag], Challenge(x_s), self.rng).x_t
        self._owner[x_t] = tag
        return x_t

    def _reply(self, x_t: BitString) -> tuple[BitString, BitString]:
        if self._x_s is None:
            raise Disqualified("reply before any challenge was issued")
        entries = self.registry.broadcast_entries(self._x_s, x_t)
        owner = self._owner.get(x_t)
        if owner is None:
            owner = self.rng.below(len(entries))
        return entries[owner]

    def _tag_reply(self, tag: int, x_s: BitString, sigma, delta) -> BitString:
        t = self.tags[tag]
        if t.phase is not TagPhase.RESPONDED:
            raise Disqualified("tag has no open session")
        x_t = t._x_t
        auth, _ = tag_verify_and_reply(t, x_s, [(sigma, delta)], self.rng)
        if self._x_s is not None:
            self.registry.match_sigma_prime(self._x_s, x_t, auth.sigma_prime)
        return auth.sigma_prime

    def _session(self, tag: int, restricted: bool) -> tuple[Transcript, Transcript]:
        period = self.tags[tag].period
        if restricted:
            shown_x_s = self._query_b()
            x_s = self._rand_map[shown_x_s]
        else:
            x_s = shown_x_s = self._query()
        x_t = self._query_prime(tag)
        sigma, delta = self._reply(x_t)
        sigma_prime = self._tag_reply(tag, x_s, sigma, delta)
        truth = Transcript(x_s, x_t, sigma, delta, sigma_prime, period)
        shown = Transcript(shown_x_s, x_t, sigma, delta, sigma_prime, period)
        return truth, shown

    # oracles

    def query(self) -> BitString:
        self._gate("query")
        return self._release(self._query())

    def query_b(self) -> BitString:
        self._gate("query_b")
        return self._release(self._query_b())

    def query_prime(self, tag: int) -> BitString:
        self._gate("query_prime", tag)
        return self._release(self._query_prime(tag))

    def reply(self, x_t: BitString) -> tuple[BitString, BitString]:
        self._gate("reply")
        return self._release(*self._reply(x_t))

    def reply_prime(self, tag: int, x_s: BitString, sigma: BitString, delta: BitString) -> BitString:
        self._gate("reply_prime", tag)
        return self._release(self._tag_reply(tag, x_s, sigma, delta))

    def reply_b(self, tag: int, x_rand: BitString, sigma: BitString, delta: BitString) -> BitString:
        """The tag is driven with the real challenge behind ``x_rand``, if any."""
        self._gate("reply_b", tag)
        x_s = self._rand_map.get(x_rand, x_rand)
        return self._release(self._tag_reply(tag, x_s, sigma, delta))

    def execute(self, tag: int) -> Transcript:
        self._gate("execute", tag)
        truth, shown = self._session(tag, restricted=False)
        self.log.append(_Logged(tag, truth, observed=True))
        self._release(*shown.fields())
        return shown

    def execute_b(self, tag: int) -> Transcript:
        self._gate("execute_b", tag)
        truth, shown = self._session(tag, restricted=True)
        self.log.append(_Logged(tag, truth, observed=True))
        self._release(*shown.fields())
        return shown

    def idle(self, tag: int) -> None:
        """The tag authenticates somewhere the adversary is not listening."""
        self._gate("idle", tag)
        truth, _ = self._session(tag, restricted=False)
        self.log.append(_Logged(tag, truth, observed=False))

    def period(self, tag: int) -> int:
        self._gate("period", tag)
        return self.tags[tag].period

    def reveal_secret(self, tag: int, i: int) -> BitString:
        self._gate("reveal_secret", tag)
        if self.phase != "challenge" or tag != self.challenge_tag:
            raise Disqualified("only the challenge tag can be compromised, in the challenge phase")
        if self.revealed is not None or self.tested is not None:
            raise Disqualified("one reveal, before the test")
        if self.tags[tag].period != i:
            raise Disqualified(f"tag is at period {self.tags[tag].period}, not {i}")
        self.revealed = (tag, i)
        return self.tags[tag].key.k

    def _test_period_ok(self, i: int) -> bool:
        if self.game == "ind":
            return self.revealed is None
        if self.revealed is None:
            return False
        r = self.revealed[1]
        return i == r - 1 if self.game == "forward" else i == r + 1

    def test(self, tag: int, i: int) -> Transcript:
        self._gate("test", tag)
        if self.phase != "challenge" or tag != self.challenge_tag:
            raise Disqualified("test must target the challenge tag")
        if self.tested is not None:
            raise Disqualified("test may be called once")
        if not self._test_period_ok(i):
            raise Disqualified(f"test period {i} breaks the {self.game} game structure")
        current = self.tags[tag].period
        if i == current:
            truth, _ = self._session(tag, restricted=False)
            self.log.append(_Logged(tag, truth, observed=False))
        elif i < current:
            past = [e for e in self.log if e.tag == tag and e.truth.period == i]
            if not past or past[-1].observed:
                raise Disqualified(f"period {i} was already eavesdropped; nothing to test")
            truth = past[-1].truth
        else:
            raise Disqualified(f"period {i} has not happened yet")
        self.tested = (tag, i)
        noise = [self.rng.draw() for _ in range(5)]
        self.b = self.rng.bit()
        fields = truth.fields() if self.b else noise
        shown = Transcript(*fields, period=i)
        self._release(*shown.fields())
        return shown


class Oracles:
    """What an adversary gets to hold: oracle calls and nothing else."""

    _EXPOSED = (
        "query", "query_b", "query_prime", "reply", "reply_prime", "reply_b",
        "execute", "execute_b", "idle", "period", "reveal_secret", "test", "permits",
    )  # fmt: skip

    def __init__(self, ctx: OracleContext):
        for name in self._EXPOSED:
            object.__setattr__(self, name, getattr(ctx, name))
        object.__setattr__(self, "game", ctx.game)
        object.__setattr__(self, "lambda_bits", ctx.lambda_bits)

    def __setattr__(self, name, value):
        raise AttributeError("oracles are read-only")


@dataclass(frozen=True)
class GameResult:
    game: str
    adversary: str
    n_tags: int
    trials: int
    seed: int
    wins: int
    disqualified: int = 0

    @property
    def advantage_hat(self) -> float:
        return abs(self.wins / self.trials - 0.5)

    @property
    def ci95_halfwidth(self) -> float:
        return 1.96 * math.sqrt(0.25 / self.trials)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["advantage_hat"] = round(self.advantage_hat, 6)
        d["ci95"] = round(self.ci95_halfwidth, 6)
        return d

    def to_line(self) -> str:
        return (
            f"game={self.game} adversary={self.adversary} n={self.n_tags} T={self.trials} "
            f"seed={self.seed} wins={self.wins} advantage_hat={self.advantage_hat:.6f} "
            f"ci95={self.ci95_halfwidth:.6f} disqualified={self.disqualified}"
        )


@dataclass
class TrialRecord:
    b: int | None
    guess: int | None
    disqualified: str | None = None
    challenge_tag: int = 0
    ctx: OracleContext | None = field(default=None, repr=False)


def run_trial(game, adversary, n_tags, rng, lambda_bits=DEFAULT_LAMBDA, budgets=None, keep_ctx=False):
    ctx = OracleContext(game, n_tags, rng, lambda_bits, budgets)
    adversary.reset(rng.child(b"adversary"))
    target = rng.below(n_tags)
    ctx.challenge_tag = target
    oracles = Oracles(ctx)
    others = [t for t in range(n_tags) if t != target]
    record = TrialRecord(None, None, challenge_tag=target, ctx=ctx if keep_ctx else None)
    try:
        ctx.phase = "learning"
        adversary.learning_phase(oracles, others)
        ctx.phase = "challenge"
        guess = adversary.challenge_phase(oracles, target)
        if ctx.tested is None:
            raise Disqualified("finished without calling test")
    except Disqualified as exc:
        record.disqualified = str(exc)
        return record
    record.b = ctx.b
    record.guess = int(guess)
    return record


def run_game(
    game: str,
    adversary,
    n_tags: int,
    trials: int,
    seed: int,
    lambda_bits: int = DEFAULT_LAMBDA,
    budgets: Budgets | None = None,
) -> GameResult:
    """Play ``trials`` independent rounds; disqualified rounds count as losses."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if n_tags < 1:
        raise ValueError("need at least one tag")
    master = Prng(seed, lambda_bits)
    wins = disq = 0
    for trial in range(trials):
        rec = run_trial(game, adversary, n_tags, master.child(trial), lambda_bits, budgets)
        if rec.disqualified:
            disq += 1
        elif rec.guess == rec.b:
            wins += 1
    return GameResult(game, adversary.name, n_tags, trials, seed, wins, disq)
