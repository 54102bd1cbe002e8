"""Acceptance criteria 1-10, one pass/fail line each.

Every criterion builds a plain-text report from seeded runs only (no
timings inside), so criterion 10 can rebuild reports 1-9 and compare bytes.
Run directly with ``python tests/test_acceptance.py`` or through pytest;
either way the verdict lines are printed at the end.
"""

import re
import time

from aprap import Prng
from aprap.adversaries import CompromiseTracer, RandomGuesser, SigmaLinker
from aprap.games import run_game
from aprap.protocol import run_session
from aprap.sim import Simulation
from aprap.transport import FaultScript, FlipBit, MemoryLink

SEED = 1
N_GAME_TAGS = 4
VERDICTS: list[str] = []


def verdict(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# report builders: (ok, report text)


def c1_tag_cost():
    m = Simulation(1, seed=SEED).run(1000)
    ok = m.accepted == 1000 and m.accepted_costs == {(3, 1, 1)}
    ok &= m.tag_hash_calls == 3000 and m.tag_prng_draws == 1000 and m.tag_xor_ops == 1000
    return ok, "\n".join(m.to_lines())


def c2_tag_storage():
    sim = Simulation(1, seed=SEED)
    sizes = []
    for _ in range(10):
        sim.step()
        tag = sim.tags[0]
        sizes.append(len(tag.secret_bytes()))
        assert not tag.volatile()
    ok = set(sizes) == {16}
    return ok, f"secret_bytes={sorted(set(sizes))} key={sim.tags[0].secret_bytes().hex()}"


def c3_sync():
    sim = Simulation(1, seed=SEED)
    mismatches = 0
    for _ in range(10_000):
        res = sim.step()
        mismatches += not (res.accepted and sim.in_sync(0))
    ok = mismatches == 0 and sim.metrics.accepted == 10_000
    return ok, f"sessions=10000 mismatches={mismatches} final_key={sim.tags[0].key.k.hex()}"


FRAME_BITS = {1: 21 * 8, 2: 21 * 8, 3: 41 * 8, 4: 21 * 8}
MSG_NAMES = {1: "challenge", 2: "tag_nonce", 3: "server_auth", 4: "tag_auth"}


def c4_tampering():
    pick = Prng(SEED).child(b"bitflips")
    false_accepts = 0
    per_type = dict.fromkeys(MSG_NAMES.values(), 0)
    for trial in range(1000):
        msg = 1 + pick.below(4)
        bit = pick.below(FRAME_BITS[msg])
        sim = Simulation(1, seed=trial)
        sim.link = MemoryLink(FaultScript([FlipBit(msg, bit)]))
        res = sim.step()
        per_type[MSG_NAMES[msg]] += 1
        # whoever received tampered input, or anything after it, must refuse
        false_accepts += res.server.accepted
        false_accepts += msg < 4 and res.tag.accepted
    counts = " ".join(f"{k}={v}" for k, v in per_type.items())
    return false_accepts == 0, f"flips=1000 {counts} false_accepts={false_accepts}"


def _game_rows(specs):
    lines, ok = [], True
    for game, cls, T, bound, at_least in specs:
        res = run_game(game, cls(), N_GAME_TAGS, T, SEED)
        good = res.advantage_hat >= bound if at_least else res.advantage_hat <= bound
        good &= res.disqualified == 0
        ok &= good
        op = ">=" if at_least else "<="
        lines.append(f"{res.to_line()} expect={op}{bound} {'pass' if good else 'FAIL'}")
    return ok, "\n".join(lines)


def c5_ind():
    return _game_rows(
        [("ind", RandomGuesser, 10_000, 0.02, False), ("ind", SigmaLinker, 10_000, 0.02, False)]
    )


def c6_forward():
    return _game_rows([("forward", CompromiseTracer, 2_000, 0.03, False)])


def c7_backward():
    return _game_rows([("backward", CompromiseTracer, 2_000, 0.03, False)])


def c8_unrestricted():
    return _game_rows([("backward-unrestricted", CompromiseTracer, 2_000, 0.45, True)])


def c9_desync():
    j = 5
    sim = Simulation(1, seed=SEED, faults=FaultScript.parse(f"drop:{4 * j}"))
    silent = 0
    outcomes = []
    for n in range(1, 11):
        res = sim.step()
        outcomes.append("ok" if res.accepted else f"fail@{res.failed_at or 'verify'}")
        # silent corruption: keys diverge while both sides report success
        silent += res.accepted and not sim.in_sync(0)
    m = sim.metrics
    ok = m.desync_events == 1 and m.desync_sessions == [j]
    ok &= outcomes[j - 1] != "ok" and outcomes[j] != "ok" and silent == 0
    ok &= all(o == "ok" for o in outcomes[: j - 1])
    return ok, f"dropped=sigma_prime@{j} desync={m.desync_sessions} outcomes={','.join(outcomes)}"


BUILDERS = {
    1: c1_tag_cost, 2: c2_tag_storage, 3: c3_sync, 4: c4_tampering, 5: c5_ind,
    6: c6_forward, 7: c7_backward, 8: c8_unrestricted, 9: c9_desync,
}  # fmt: skip
TIME_LIMITS = {1: 5.0, 3: 30.0, 5: 120.0}
DETAILS = {
    1: "tag cost 3 hash + 1 draw + 1 XOR per session",
    2: "tag secret is 16 bytes",
    3: "10,000 chained sessions stay in sync",
    4: "1,000 single-bit flips, no false accept",
    5: "ind game advantage <= 0.02 at T=10,000",
    6: "forward game tracer advantage <= 0.03",
    7: "restricted backward game tracer advantage <= 0.03",
    8: "unrestricted backward tracer advantage >= 0.45",
    9: "dropped sigma' is one observable desync",
}
FIRST_RUN: dict[int, str] = {}


def check(n):
    (ok, report), secs = timed(BUILDERS[n])
    FIRST_RUN[n] = report
    limit = TIME_LIMITS.get(n)
    in_time = limit is None or secs < limit
    note = f" ({secs:.1f}s < {limit:.0f}s)" if limit else ""
    if not in_time:
        note = f" ({secs:.1f}s, limit {limit:.0f}s)"
    advs = re.findall(r"adversary=(\w+) .*advantage_hat=([\d.]+)", report)
    if advs:
        note += " [" + ", ".join(f"{a} {v}" for a, v in advs) + "]"
    ok = verdict(n, ok and in_time, DETAILS[n] + note)
    assert ok, report


def test_c01():
    check(1)


def test_c02():
    check(2)


def test_c03():
    check(3)


def test_c04():
    check(4)


def test_c05():
    check(5)


def test_c06():
    check(6)


def test_c07():
    check(7)


def test_c08():
    check(8)


def test_c09():
    check(9)


def test_c10():
    diffs = []
    for n, build in BUILDERS.items():
        first = FIRST_RUN.get(n) or build()[1]
        if build()[1].encode() != first.encode():
            diffs.append(n)
    ok = verdict(10, not diffs, "reports 1-9 byte-identical across two seeded runs"
                 + (f"; differ: {diffs}" if diffs else ""))  # fmt: skip
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except AssertionError:
                pass
