"""Run every game against every built-in adversary and write reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .adversaries import CompromiseTracer, builtin_adversaries
from .games import Budgets, GameResult, run_game
from .primitives import DEFAULT_LAMBDA

DEFAULT_TRIALS = {"ind": 10_000, "forward": 2_000, "backward": 2_000, "backward-unrestricted": 2_000}
# upper bounds on advantage at the default trial counts
MAX_ADVANTAGE = {"ind": 0.02, "forward": 0.03, "backward": 0.03}
DEMO_MIN_ADVANTAGE = 0.45


@dataclass(frozen=True)
class Row:
    result: GameResult
    bound: float
    at_least: bool = False  # demonstration rows must reach the bound

    @property
    def passed(self) -> bool:
        adv = self.result.advantage_hat
        ok = adv >= self.bound if self.at_least else adv <= self.bound
        return ok and not self.result.disqualified

    def to_line(self) -> str:
        op = ">=" if self.at_least else "<="
        verdict = "pass" if self.passed else "FAIL"
        return f"{self.result.to_line()} expect={op}{self.bound:.4f} {verdict}"

    def to_dict(self) -> dict:
        d = self.result.to_dict()
        d.update(expect=(">=" if self.at_least else "<="), bound=round(self.bound, 6), passed=self.passed)
        return d


def scaled_bound(game: str, trials: int) -> float:
    """Same multiple of the sampling half-width as at the default trial count."""
    return MAX_ADVANTAGE[game] * math.sqrt(DEFAULT_TRIALS[game] / trials)


def run_suite(
    n_tags: int = 4,
    seed: int = 1,
    trials: int | None = None,
    lambda_bits: int = DEFAULT_LAMBDA,
    budgets: Budgets | None = None,
    games=("ind", "forward", "backward"),
    progress=None,
) -> tuple[list[Row], list[Row]]:
    rows = []
    for game in games:
        T = trials or DEFAULT_TRIALS[game]
        for cls in builtin_adversaries().values():
            res = run_game(game, cls(), n_tags, T, seed, lambda_bits, budgets)
            rows.append(Row(res, scaled_bound(game, T)))
            if progress:
                progress(rows[-1])
    T = trials or DEFAULT_TRIALS["backward-unrestricted"]
    demo = run_game("backward-unrestricted", CompromiseTracer(), n_tags, T, seed, lambda_bits, budgets)
    demos = [Row(demo, DEMO_MIN_ADVANTAGE, at_least=True)]
    if progress:
        progress(demos[0])
    return rows, demos


def render_text(rows: list[Row], demos: list[Row]) -> str:
    lines = [r.to_line() for r in rows]
    lines += ["demo " + r.to_line() for r in demos]
    return "\n".join(lines) + "\n"


def write_report(rows: list[Row], demos: list[Row], out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    txt = out / "games_report.txt"
    js = out / "games_report.json"
    txt.write_text(render_text(rows, demos))
    payload = {"rows": [r.to_dict() for r in rows], "demonstrations": [r.to_dict() for r in demos]}
    js.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return txt, js
