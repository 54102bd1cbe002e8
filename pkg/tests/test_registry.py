import pytest

from aprap import Prng, Registry, TagState, keygen
from aprap.errors import RegistryError
from aprap.protocol import Challenge, run_session, server_begin, tag_respond, tag_verify_and_reply
from aprap.transport import MemoryLink


def test_broadcast_cost_is_two_hashes_per_record():
    rng = Prng(50)
    reg = Registry.from_keygen(keygen(128, 50, rng))
    entries = reg.broadcast_entries(rng.draw(), rng.draw())
    assert len(entries) == 50
    assert reg.hasher.call_counter == 100
    assert all(r.pending is not None for r in reg)


def test_broadcast_deterministic_and_empty_registry():
    rng = Prng(1)
    reg = Registry.from_keygen(keygen(128, 3, rng))
    x_s, x_t = rng.draw(), rng.draw()
    assert reg.broadcast_entries(x_s, x_t) == reg.broadcast_entries(x_s, x_t)
    assert Registry().broadcast_entries(x_s, x_t) == []


def test_only_the_answering_record_advances(world):
    rng, reg, tags = world(n_tags=3, seed=8)
    tag = tags[1]
    before = {r.tag_id: r.key for r in reg}
    x_s = server_begin(rng).x_s
    x_t = tag_respond(tag, Challenge(x_s), rng).x_t
    entries = reg.broadcast_entries(x_s, x_t)
    auth, _ = tag_verify_and_reply(tag, x_s, entries, rng)
    tag_id, outcome = reg.match_sigma_prime(x_s, x_t, auth.sigma_prime)
    assert tag_id == tag.tag_id and outcome.accepted
    for r in reg:
        assert (r.key != before[r.tag_id]) == (r.tag_id == tag.tag_id)
    assert all(r.pending is None for r in reg)
    # the same sigma' again: exchange closed, key moved on
    reg.broadcast_entries(x_s, x_t)
    assert reg.match_sigma_prime(x_s, x_t, auth.sigma_prime) is None


def test_random_sigma_prime_changes_nothing(world):
    rng, reg, tags = world(n_tags=3)
    before = reg.rows()
    x_s, x_t = rng.draw(), rng.draw()
    reg.broadcast_entries(x_s, x_t)
    assert reg.match_sigma_prime(x_s, x_t, rng.draw()) is None
    assert reg.rows() == before
    assert reg.match_sigma_prime(rng.draw(), rng.draw(), rng.draw()) is None


def test_randomized_multi_tag_runs_advance_one_record_each(world):
    rng, reg, tags = world(n_tags=5, seed=4)
    link = MemoryLink()
    pick = Prng(99)
    for _ in range(200):
        tag = tags[pick.below(5)]
        before = {r.tag_id: r.key for r in reg}
        assert run_session(tag, reg, link, rng).accepted
        changed = [r.tag_id for r in reg if r.key != before[r.tag_id]]
        assert changed == [tag.tag_id]


def test_save_load_round_trip(tmp_path, world):
    rng, reg, tags = world(n_tags=4)
    run_session(tags[0], reg, MemoryLink(), rng)
    path = tmp_path / "reg.db"
    reg.save(path)
    again = Registry.load(path)
    assert again.rows() == reg.rows()
    assert path.read_text().splitlines()[0] == "APRAPDB 1"
    assert not list(tmp_path.glob("*.tmp"))


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda t: t[:-5], "truncated"),
        (lambda t: t.replace("APRAPDB 1", "APRAPDB 2"), "unsupported version"),
        (lambda t: t.replace("APRAPDB", "NOTADB"), "bad header"),
        (lambda t: t + t.splitlines()[1] + "\n", "duplicate"),
        (lambda t: t.replace("tag0002", "tag0002 extra"), "expected 4 fields"),
        (lambda t: "", "truncated"),
    ],
)
def test_load_rejects_defects(tmp_path, world, mutate, message):
    _, reg, _ = world(n_tags=2)
    path = tmp_path / "reg.db"
    reg.save(path)
    path.write_text(mutate(path.read_text()))
    with pytest.raises(RegistryError, match=message):
        Registry.load(path)


def test_failed_load_leaves_existing_registry_alone(tmp_path, world):
    _, reg, _ = world(n_tags=2)
    rows = reg.rows()
    bad = tmp_path / "bad.db"
    bad.write_text("APRAPDB 1\ntag0001 00")
    with pytest.raises(RegistryError):
        reg = Registry.load(bad)
    assert reg.rows() == rows


def test_restart_drops_pending_and_next_session_works(tmp_path, world):
    rng, reg, (tag,) = world()
    x_s = server_begin(rng).x_s
    x_t = tag_respond(tag, Challenge(x_s), rng).x_t
    reg.broadcast_entries(x_s, x_t)
    path = tmp_path / "reg.db"
    reg.save(path)
    assert "pending" not in path.read_text()
    restarted = Registry.load(path)
    assert all(r.pending is None for r in restarted)
    tag._erase()
    assert run_session(tag, restarted, MemoryLink(), rng).accepted


def test_pending_expires_after_timeout(world):
    now = [0.0]
    rng, base, (tag,) = world()
    reg = Registry(list(base), pending_timeout=5.0, clock=lambda: now[0])
    x_s = server_begin(rng).x_s
    x_t = tag_respond(tag, Challenge(x_s), rng).x_t
    entries = reg.broadcast_entries(x_s, x_t)
    auth, _ = tag_verify_and_reply(tag, x_s, entries, rng)
    now[0] = 6.0
    assert reg.match_sigma_prime(x_s, x_t, auth.sigma_prime) is None


def test_add_rejects_duplicates_and_wrong_lengths(world):
    _, reg, _ = world(n_tags=2)
    rec = next(iter(reg))
    with pytest.raises(ValueError):
        reg.add(rec)
    other = Registry.from_keygen(keygen(64, 1, Prng(1, 64)), prefix="x")
    with pytest.raises(ValueError):
        reg.add(next(iter(other)))
