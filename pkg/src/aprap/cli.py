"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 protocol/verification failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import socket
import sys
import threading
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ChannelError, DecodeError, RegistryError
from .games import Budgets
from .keys import SharedKey, keygen
from .primitives import DEFAULT_LAMBDA, BitString, Prng, check_lambda
from .protocol import (
    Challenge,
    ServerAuth,
    TagAuth,
    TagNonce,
    TagState,
    server_begin,
    tag_abort,
    tag_respond,
    tag_verify_and_reply,
)
from .registry import Registry
from .transport import FaultScript, SocketEndpoint, parse_address

log = logging.getLogger("aprap")

EXIT_OK, EXIT_USAGE, EXIT_PROTOCOL, EXIT_IO = 0, 1, 2, 3
KEY_HEADER = "APRAPTAG 1"


class UsageError(Exception):
    pass


@dataclass
class Config:
    lambda_bits: int = DEFAULT_LAMBDA
    n_tags: int = 1
    seed: int | None = 1
    trials: int | None = None  # None: per-game defaults
    sessions: int = 1000
    registry_path: str = "registry.db"
    keys_dir: str | None = None
    address: str = "127.0.0.1:7878"
    timeout: float = 10.0
    pending_timeout: float = 30.0
    faults: str = ""
    out_dir: str = "reports"
    e1: int = 64
    r1: int = 64
    e2: int = 64
    r2: int = 64
    rb: int = 64

    def validate(self) -> Config:
        try:
            check_lambda(self.lambda_bits)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.lambda_bits % 8:
            raise UsageError("lambda_bits must be a multiple of 8 for the wire format")
        if self.trials is not None and self.trials < 1:
            raise UsageError("trials must be at least 1")
        if self.n_tags < 1:
            raise UsageError("n_tags must be at least 1")
        return self

    def budgets(self) -> Budgets:
        return Budgets(self.e1, self.r1, self.e2, self.r2, self.rb)


def _coerce(f: dataclasses.Field, text: str):
    kind = str(f.type)
    if text.lower() in ("none", "") and "None" in kind:
        return None
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def load_config_file(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    known = {f.name: f for f in fields(Config)}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in known:
            raise UsageError(f"{path}:{lineno}: unknown setting {line!r}")
        try:
            out[key] = _coerce(known[key], value.strip())
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}") from None
    return out


def build_config(args: argparse.Namespace) -> Config:
    values = {}
    if os.environ.get("APRAP_REGISTRY"):
        values["registry_path"] = os.environ["APRAP_REGISTRY"]
    if os.environ.get("APRAP_KEYS_DIR"):
        values["keys_dir"] = os.environ["APRAP_KEYS_DIR"]
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in fields(Config):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return Config(**values).validate()


# key files


def write_key_file(path: Path, tag_id: str, key: SharedKey) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(f"{KEY_HEADER}\n{tag_id} {key.k.hex()} {key.period}\n")
    os.replace(tmp, path)


def read_key_file(path: Path) -> TagState:
    lines = Path(path).read_text().splitlines()
    if len(lines) != 2 or lines[0] != KEY_HEADER:
        raise RegistryError(f"{path}: not a tag key file")
    try:
        tag_id, k_hex, period = lines[1].split(" ")
        key = SharedKey(BitString.from_hex(k_hex, 4 * len(k_hex)), int(period))
    except ValueError as exc:
        raise RegistryError(f"{path}: {exc}") from None
    return TagState(key, tag_id=tag_id)


# commands


def cmd_keygen(cfg: Config) -> int:
    rng = Prng(cfg.seed, cfg.lambda_bits)
    reg = Registry.from_keygen(keygen(cfg.lambda_bits, cfg.n_tags, rng))
    reg_path = Path(cfg.registry_path)
    keys_dir = Path(cfg.keys_dir) if cfg.keys_dir else reg_path.parent
    keys_dir.mkdir(parents=True, exist_ok=True)
    reg.save(reg_path)
    for rec in reg:
        write_key_file(keys_dir / f"{rec.tag_id}.key", rec.tag_id, rec.key)
    print(f"registry={reg_path} records={len(reg)} keys_dir={keys_dir}")
    return EXIT_OK


class Server:
    """Socket server; one session at a time per connection, exchanges serialized."""

    def __init__(self, registry: Registry, registry_path, rng: Prng, timeout: float, max_sessions=None):
        self.registry = registry
        self.registry_path = Path(registry_path)
        self.rng = rng
        self.timeout = timeout
        self.max_sessions = max_sessions
        self.sessions = 0
        self.accepted = 0
        self.malformed = 0
        self.stop = threading.Event()
        self._rng_lock = threading.Lock()
        self._count_lock = threading.Lock()

    def _one_session(self, ep: SocketEndpoint) -> bool:
        """Returns False when the connection should end."""
        with self.registry.lock:
            with self._rng_lock:
                challenge = server_begin(self.rng)
            x_s = challenge.x_s
            ep.send(challenge)
            try:
                msg = ep.recv(self.timeout)
            except ChannelError:
                return False
            if not isinstance(msg, TagNonce):
                raise DecodeError(f"expected TagNonce, got {type(msg).__name__}", 0)
            x_t = msg.x_t
            ep.send(ServerAuth(tuple(self.registry.broadcast_entries(x_s, x_t))))
            msg = ep.recv(self.timeout)
            if not isinstance(msg, TagAuth):
                raise DecodeError(f"expected TagAuth, got {type(msg).__name__}", 0)
            match = self.registry.match_sigma_prime(x_s, x_t, msg.sigma_prime)
            if match:
                self.registry.save(self.registry_path)
        with self._count_lock:
            self.sessions += 1
            self.accepted += match is not None
            if self.max_sessions and self.sessions >= self.max_sessions:
                self.stop.set()
        log.info("session %d: %s", self.sessions, f"accepted {match[0]}" if match else "rejected")
        return not self.stop.is_set()

    def handle(self, conn: socket.socket) -> None:
        ep = SocketEndpoint(conn, "server")
        try:
            while not self.stop.is_set() and self._one_session(ep):
                pass
        except DecodeError as exc:
            self.malformed += 1
            log.warning("dropping connection: %s", exc)
        except ChannelError as exc:
            log.info("connection ended: %s", exc)
        finally:
            ep.close()

    def serve(self, address: tuple[str, int], ready=None) -> None:
        with socket.create_server(address) as srv:
            srv.settimeout(0.1)
            if ready:
                ready(srv.getsockname())
            workers = []
            while not self.stop.is_set():
                try:
                    conn, _ = srv.accept()
                except socket.timeout:
                    continue
                t = threading.Thread(target=self.handle, args=(conn,), daemon=True)
                t.start()
                workers.append(t)
            for t in workers:
                t.join(self.timeout)


def cmd_serve(cfg: Config, max_sessions: int | None = None) -> int:
    reg = Registry.load(cfg.registry_path, pending_timeout=cfg.pending_timeout)
    server = Server(reg, cfg.registry_path, Prng(cfg.seed, reg.lambda_bits), cfg.timeout, max_sessions)

    def ready(addr):
        print(f"listening on {addr[0]}:{addr[1]}", flush=True)

    try:
        server.serve(parse_address(cfg.address), ready)
    except KeyboardInterrupt:
        pass
    reg.save(cfg.registry_path)
    print(f"sessions={server.sessions} accepted={server.accepted} malformed={server.malformed}")
    return EXIT_OK


def run_tag_sessions(state: TagState, key_path, ep, sessions: int, rng: Prng, timeout: float) -> int:
    """Returns the number of accepted sessions; the key file tracks the key."""
    accepted = 0
    for _ in range(sessions):
        msg = ep.recv(timeout)
        if not isinstance(msg, Challenge):
            raise DecodeError(f"expected Challenge, got {type(msg).__name__}", 0)
        x_s = msg.x_s
        ep.send(tag_respond(state, msg, rng))
        try:
            msg = ep.recv(timeout)
        except DecodeError:
            msg = None
        if isinstance(msg, ServerAuth):
            reply, outcome = tag_verify_and_reply(state, x_s, msg.entries, rng)
            ok = outcome.accepted
        else:
            reply, ok = tag_abort(state, rng), False
        ep.send(reply)
        if ok:
            accepted += 1
            write_key_file(Path(key_path), state.tag_id, state.key)
        log.info("period %d: %s", state.period, "accepted" if ok else "rejected")
    return accepted


def cmd_tag(cfg: Config, key_file: str) -> int:
    state = read_key_file(Path(key_file))
    rng = Prng(cfg.seed, state.lambda_bits)
    conn = socket.create_connection(parse_address(cfg.address), timeout=cfg.timeout)
    ep = SocketEndpoint(conn, "tag")
    try:
        accepted = run_tag_sessions(state, key_file, ep, cfg.sessions, rng, cfg.timeout)
    except (ChannelError, DecodeError) as exc:
        print(f"session aborted: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    finally:
        ep.close()
    print(f"tag={state.tag_id} sessions={cfg.sessions} accepted={accepted} period={state.period}")
    return EXIT_OK if accepted == cfg.sessions else EXIT_PROTOCOL


def cmd_simulate(cfg: Config, report: str | None = None) -> int:
    from .sim import Simulation

    try:
        faults = FaultScript.parse(cfg.faults)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sim = Simulation(cfg.n_tags, cfg.seed, cfg.lambda_bits, faults)
    metrics = sim.run(cfg.sessions)
    print("\n".join(metrics.to_lines()))
    if report:
        Path(report).write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_games(cfg: Config) -> int:
    from .reports import run_suite, write_report

    n = cfg.n_tags if cfg.n_tags > 1 else 4
    rows, demos = run_suite(
        n_tags=n,
        seed=cfg.seed if cfg.seed is not None else int.from_bytes(os.urandom(4), "big"),
        trials=cfg.trials,
        lambda_bits=cfg.lambda_bits,
        budgets=cfg.budgets(),
        progress=lambda row: print(row.to_line(), flush=True),
    )
    txt, js = write_report(rows, demos, cfg.out_dir)
    print(f"report={txt} json={js}")
    return EXIT_OK if all(r.passed for r in rows + demos) else EXIT_PROTOCOL


# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _seed(text: str):
    return None if text.lower() == "random" else int(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aprap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *names):
        sp.add_argument("--config", help="key=value config file")
        opts = {
            "lambda_bits": dict(flags=["--lambda"], type=int),
            "n_tags": dict(flags=["--n", "--n-tags"], type=int),
            "seed": dict(flags=["--seed"], type=_seed, help="integer, or 'random'"),
            "trials": dict(flags=["--trials"], type=int),
            "sessions": dict(flags=["--sessions"], type=int),
            "registry_path": dict(flags=["--registry", "--out"]),
            "keys_dir": dict(flags=["--keys-dir"]),
            "address": dict(flags=["--address"]),
            "timeout": dict(flags=["--timeout"], type=float),
            "pending_timeout": dict(flags=["--pending-timeout"], type=float),
            "faults": dict(flags=["--faults"], help="e.g. drop:8,flip:3:60,delay:2:1"),
            "out_dir": dict(flags=["--out-dir"]),
        }
        for name in names:
            o = dict(opts[name])
            sp.add_argument(*o.pop("flags"), dest=name, default=None, **o)

    sp = sub.add_parser("keygen", help="create a registry and per-tag key files")
    common(sp, "n_tags", "seed", "registry_path", "keys_dir", "lambda_bits")

    sp = sub.add_parser("serve", help="run the server over TCP")
    common(sp, "registry_path", "address", "seed", "timeout", "pending_timeout")
    sp.add_argument("--max-sessions", type=int, default=None)

    sp = sub.add_parser("tag", help="run one tag for N sessions against a server")
    common(sp, "address", "sessions", "seed", "timeout")
    sp.add_argument("--key-file", required=True)

    sp = sub.add_parser("simulate", help="batch in-memory sessions with metrics")
    common(sp, "n_tags", "sessions", "seed", "faults", "lambda_bits")
    sp.add_argument("--report", help="write metrics as JSON here")

    sp = sub.add_parser("games", help="run all games for all built-in adversaries")
    common(sp, "n_tags", "seed", "trials", "out_dir", "lambda_bits")
    for b in ("e1", "r1", "e2", "r2", "rb"):
        sp.add_argument(f"--{b}", type=int, default=None, help=f"oracle budget {b}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        if args.command == "keygen":
            return cmd_keygen(cfg)
        if args.command == "serve":
            return cmd_serve(cfg, args.max_sessions)
        if args.command == "tag":
            return cmd_tag(cfg, args.key_file)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.report)
        return cmd_games(cfg)
    except UsageError as exc:
        print(f"aprap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RegistryError) as exc:
        print(f"aprap: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
