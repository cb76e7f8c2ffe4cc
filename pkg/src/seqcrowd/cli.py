"""Command-line harness: benchmark grids, question-bound tables, and an
interactive responder mode.

Subcommands
-----------
table-b    question-bound table over (m, e) grids, CSV output
design     code matrix + decode channel for (q, N, r), JSON output
simulate   run a strategy for many seeded trials, CSV + summary JSON
play       interactive Ulam-Renyi session (the human answers questions)
verify     recompute a simulation summary from its per-trial CSV

All randomness derives from the master seed plus the trial index, so runs
replay bit-identically regardless of how many worker processes are used
(SEQCROWD_THREADS, default: all cores).
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context
from typing import Dict, List, Optional, Tuple

import click
import numpy as np

from . import pomcp as pomcp_mod
from .coding import cached_code_matrix, performance_matrix
from .policies import UrsqsPlan, optimize_qe, run_dcfecc_trial, run_ursqs_trial
from .question_design import materialize
from .ulam import initial_status, is_final, update_status
from .ulam_tree import compute_B
from .worker_sim import WorkerModel, mean_reliability

THREADS_ENV = "SEQCROWD_THREADS"


def _n_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
            if n >= 1:
                return n
        except ValueError:
            pass
        raise click.ClickException(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return os.cpu_count() or 1


@dataclass
class ExperimentConfig:
    """Flat simulation settings; JSON file keys mirror the field names."""

    M: int = 32
    N: int = 10
    b: int = 9
    gamma: float = 0.05
    r: float = 0.75
    trials: int = 1000
    strategy: str = "ursqs"
    sampler: str = "urt"
    k_actions: int = 300
    seed: int = 0
    distribution: str = "deterministic"
    kappa: float = 10.0
    sims: int = pomcp_mod.DEFAULT_SIMS
    c_ucb: float = pomcp_mod.DEFAULT_C_UCB
    output: Optional[str] = None

    def validate(self) -> None:
        checks = [
            (self.trials >= 1, "trials must be >= 1"),
            (self.M >= 2, "M must be >= 2"),
            (self.b >= 1, "b must be >= 1"),
            (self.gamma >= 0, "gamma must be >= 0"),
            (0.0 < self.r <= 1.0, "r must be in (0, 1]"),
            (self.N >= 1, "N must be >= 1"),
            (self.strategy in ("ursqs", "dcfecc", "pomcp", "ustar"), f"unknown strategy {self.strategy!r}"),
            (self.sampler in ("urt", "uniform"), f"unknown sampler {self.sampler!r}"),
            (self.k_actions >= 1, "k_actions must be >= 1"),
            (self.sims >= 1, "sims must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise click.ClickException(f"config: {msg}")

    def worker_model(self) -> WorkerModel:
        return WorkerModel(N=self.N, r=self.r, distribution=self.distribution, kappa=self.kappa)


def load_config(path: Optional[str], overrides: Dict[str, object]) -> ExperimentConfig:
    values: Dict[str, object] = {}
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise click.ClickException(f"cannot read config {path}: {exc}")
        if not isinstance(raw, dict):
            raise click.ClickException(f"config {path}: expected a JSON object")
        known = set(ExperimentConfig.__dataclass_fields__)
        for key, val in raw.items():
            if key not in known:
                raise click.ClickException(f"config {path}: unknown field {key!r}")
            values[key] = val
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise click.ClickException(f"config: {exc}")
    cfg.validate()
    return cfg


@click.group()
def main():
    """Sequential question design for noisy crowdsourced labeling."""


def _parse_range(text: str) -> List[int]:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


@main.command("table-b")
@click.option("--q", default=2, show_default=True, help="Question arity.")
@click.option("--m-range", default="1:10", show_default=True, help="Range of m (M = 2^m), lo:hi.")
@click.option("--e-range", default="1:8", show_default=True, help="Range of lie tolerances, lo:hi.")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="CSV path (default stdout).")
@click.option("--cell-timeout", default=600.0, show_default=True, help="Seconds allowed per cell.")
def cmd_table_b(q, m_range, e_range, output, cell_timeout):
    """Question-bound table: B-hat for M = 2^m over a grid of (m, e)."""
    try:
        ms = _parse_range(m_range)
        es = _parse_range(e_range)
    except ValueError as exc:
        raise click.ClickException(f"bad range: {exc}")
    if not ms or not es:
        raise click.ClickException("ranges must be non-empty")
    rows = []
    failed = []
    for m in ms:
        for e in es:
            start = time.monotonic()
            try:
                B, _ = compute_B(2**m, q, e)
            except Exception as exc:  # pragma: no cover - per-cell failure path
                failed.append((m, e, str(exc)))
                continue
            if time.monotonic() - start > cell_timeout:
                failed.append((m, e, "timeout"))
                continue
            rows.append((m, e, B))
    out = open(output, "w", newline="") if output else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["m", "e", "B"])
        writer.writerows(rows)
    finally:
        if output:
            out.close()
    for m, e, why in failed:
        click.echo(f"cell (m={m}, e={e}) failed: {why}", err=True)


@main.command("design")
@click.option("--q", required=True, type=int, help="Question arity (code matrix rows).")
@click.option("--workers", "n_workers", default=10, show_default=True, help="Group size (columns).")
@click.option("--r", default=0.75, show_default=True, help="Worker reliability scale.")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="JSON path (default stdout).")
def cmd_design(q, n_workers, r, output):
    """Search a code matrix for (q, workers, r) and report its decode channel."""
    model = WorkerModel(N=n_workers, r=r)
    try:
        mu = mean_reliability(model, q)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    G, cost = cached_code_matrix(q, n_workers, mu)
    P = performance_matrix(G, mu)
    payload = {
        "q": q,
        "workers": n_workers,
        "mean_reliability": mu,
        "code_matrix": G.to_json(),
        "performance_matrix": P.probs.tolist(),
        "min_diagonal": P.min_diagonal(),
        "average_error_cost": cost,
    }
    text = json.dumps(payload, indent=2)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_WORKER_STATE: Dict[str, object] = {}


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def _run_one_trial(trial: int) -> Tuple[int, int, int, int, float]:
    cfg: ExperimentConfig = _WORKER_STATE["cfg"]
    rng = _trial_rng(cfg.seed, trial)
    model: WorkerModel = _WORKER_STATE["model"]
    if cfg.strategy == "dcfecc":
        res = run_dcfecc_trial(
            cfg.M, cfg.N * (cfg.b - 1), model, rng, gamma=cfg.gamma
        )
    elif cfg.strategy == "pomcp":
        pomdp = _WORKER_STATE["pomdp"]
        true_state = int(rng.integers(1, cfg.M + 1))
        res = pomcp_mod.run_pomcp_trial(
            pomdp, true_state, rng, sims=cfg.sims, c_ucb=cfg.c_ucb
        )
    else:
        plan: UrsqsPlan = _WORKER_STATE["plan"]
        true_state = int(rng.integers(1, cfg.M + 1))
        res = run_ursqs_trial(plan, true_state, model, rng)
    return (trial, res.true_state, res.declared_state, res.questions_asked, res.reward)


def _run_trials(cfg: ExperimentConfig, state: Dict[str, object]) -> List[Tuple]:
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)
    _WORKER_STATE["cfg"] = cfg
    n_threads = min(_n_threads(), cfg.trials)
    trials = range(cfg.trials)
    if n_threads <= 1:
        rows = [_run_one_trial(t) for t in trials]
    else:
        ctx = get_context("fork")
        with ctx.Pool(n_threads) as pool:
            rows = pool.map(_run_one_trial, trials, chunksize=max(1, cfg.trials // (8 * n_threads)))
    rows.sort(key=lambda row: row[0])
    return rows


def _summarize(cfg: ExperimentConfig, rows: List[Tuple]) -> Dict[str, float]:
    rewards = np.array([row[4] for row in rows], dtype=float)
    correct = np.array([row[1] == row[2] for row in rows], dtype=float)
    taus = np.array([row[3] for row in rows], dtype=float)
    n = len(rows)
    return {
        "trials": n,
        "mean_reward": float(rewards.mean()),
        "accuracy": float(correct.mean()),
        "mean_questions": float(taus.mean()),
        "reward_se": float(rewards.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
    }


def _write_trials_csv(path: str, rows: List[Tuple], seed: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "seed", "true_state", "declared", "n_questions", "reward"])
        for trial, true_state, declared, n_questions, reward in rows:
            writer.writerow([trial, seed, true_state, declared, n_questions, repr(reward)])


def simulate_config(cfg: ExperimentConfig) -> Tuple[List[Tuple], Dict[str, object]]:
    """Run a full experiment; returns (per-trial rows, summary dict)."""
    model = cfg.worker_model()
    state: Dict[str, object] = {"model": model}
    timing: Dict[str, float] = {}
    t0 = time.monotonic()
    extra: Dict[str, object] = {}
    if cfg.strategy in ("ursqs", "pomcp"):
        plan = optimize_qe(cfg.M, cfg.b, cfg.gamma, model)
        state["plan"] = plan
        extra["plan"] = {
            "q_star": plan.q_star, "e_star": plan.e_star,
            "B_hat": plan.B_hat, "R_hat": plan.R_hat, "L": plan.L,
        }
        if cfg.strategy == "pomcp":
            if plan.tree is None:
                raise click.ClickException("budget too small to plan any questions")
            action_rng = np.random.default_rng([cfg.seed, 2**31])
            state["pomdp"] = pomcp_mod.build_model(
                cfg.M, cfg.b, cfg.gamma, model, plan.tree, cfg.k_actions,
                action_rng, sampler=cfg.sampler,
            )
    elif cfg.strategy == "ustar":
        return _simulate_ustar(cfg, model)
    timing["offline_plan_s"] = time.monotonic() - t0
    t0 = time.monotonic()
    rows = _run_trials(cfg, state)
    timing["online_trials_s"] = time.monotonic() - t0
    summary: Dict[str, object] = dict(_summarize(cfg, rows))
    summary.update(extra)
    summary["timing"] = timing
    summary["config"] = asdict(cfg)
    return rows, summary


def _simulate_ustar(cfg: ExperimentConfig, model: WorkerModel) -> Tuple[List[Tuple], Dict[str, object]]:
    """Fixed-q exhaustive benchmark: best realized reward over the lie tolerance.

    Uses the surrogate's chosen arity, replays `trials` seeded episodes for
    every feasible tolerance, and reports the best tolerance's rows.
    """
    from .policies import ursqs_plan_for
    from .ulam_tree import BudgetExceeded

    t0 = time.monotonic()
    base = optimize_qe(cfg.M, cfg.b, cfg.gamma, model)
    if base.q_star is None:
        raise click.ClickException("budget too small to plan any questions")
    q = base.q_star
    per_e: Dict[int, List[Tuple]] = {}
    e = 0
    while e <= cfg.b:
        try:
            plan = ursqs_plan_for(cfg.M, cfg.b, cfg.gamma, model, q, e)
        except (BudgetExceeded, ValueError):
            break
        per_e[e] = _run_trials(cfg, {"model": model, "plan": plan})
        e += 1
    means = {e: float(np.mean([r[4] for r in rows])) for e, rows in per_e.items()}
    best_e = max(means, key=lambda k: (means[k], -k))
    rows = per_e[best_e]
    summary: Dict[str, object] = dict(_summarize(cfg, rows))
    summary["plan"] = {"q_star": q, "best_e": best_e, "reward_by_e": means}
    summary["timing"] = {"total_s": time.monotonic() - t0}
    summary["config"] = asdict(cfg)
    return rows, summary


_CONFIG_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON config file."),
    click.option("--M", "M", type=int, default=None, help="Number of classes."),
    click.option("--N", "N", type=int, default=None, help="Workers per group."),
    click.option("--b", type=int, default=None, help="Budget in question rounds (incl. final decision)."),
    click.option("--gamma", type=float, default=None, help="Per-question cost."),
    click.option("--r", type=float, default=None, help="Worker reliability scale."),
    click.option("--trials", type=int, default=None, help="Number of trials."),
    click.option("--strategy", type=click.Choice(["ursqs", "dcfecc", "pomcp", "ustar"]), default=None),
    click.option("--sampler", type=click.Choice(["urt", "uniform"]), default=None, help="Planner action sampler."),
    click.option("--k-actions", type=int, default=None, help="Planner action sample size."),
    click.option("--distribution", type=click.Choice(["deterministic", "beta"]), default=None),
    click.option("--kappa", type=float, default=None, help="Beta reliability concentration."),
    click.option("--sims", type=int, default=None, help="Planner simulations per move."),
    click.option("--c-ucb", type=float, default=None, help="Planner exploration constant."),
    click.option("--output", type=click.Path(dir_okay=False), default=None, help="Per-trial CSV path."),
]


def _with_config_options(fn):
    for opt in reversed(_CONFIG_OPTIONS):
        fn = opt(fn)
    return fn


@main.command("simulate")
@click.option("--seed", type=int, required=True, help="Master seed (required).")
@_with_config_options
def cmd_simulate(seed, config_path, **overrides):
    """Run a labeling strategy for many trials and summarize the rewards."""
    overrides["seed"] = seed
    cfg = load_config(config_path, overrides)
    rows, summary = simulate_config(cfg)
    if cfg.output:
        _write_trials_csv(cfg.output, rows, cfg.seed)
        with open(cfg.output + ".summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
    click.echo(json.dumps(summary, indent=2))


@main.command("verify")
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
def cmd_verify(csv_path):
    """Recompute a per-trial CSV's summary and compare with its sidecar."""
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise click.ClickException("empty trial file")
    summary_path = csv_path + ".summary.json"
    try:
        with open(summary_path) as fh:
            recorded = json.load(fh)
    except OSError as exc:
        raise click.ClickException(f"missing summary sidecar: {exc}")
    problems = []
    trials = recorded.get("trials")
    if trials != len(rows):
        problems.append(f"row count {len(rows)} != recorded trials {trials}")
    indices = [int(r["trial"]) for r in rows]
    if indices != list(range(len(rows))):
        problems.append("trial indices are not 0..n-1 in order")
    rewards = np.array([float(r["reward"]) for r in rows])
    correct = np.array([r["true_state"] == r["declared"] for r in rows], dtype=float)
    taus = np.array([float(r["n_questions"]) for r in rows])
    checks = [
        ("mean_reward", float(rewards.mean())),
        ("accuracy", float(correct.mean())),
        ("mean_questions", float(taus.mean())),
    ]
    for key, value in checks:
        want = recorded.get(key)
        if want is None or abs(value - want) > 1e-9:
            problems.append(f"{key}: recomputed {value!r} != recorded {want!r}")
    if problems:
        for p in problems:
            click.echo(f"FAIL: {p}", err=True)
        raise SystemExit(1)
    click.echo(f"OK: {len(rows)} trials, summary matches")


@main.command("play")
@click.option("--M", "M", default=4, show_default=True, help="Number of states.")
@click.option("--q", default=2, show_default=True, help="Question arity.")
@click.option("--e", default=1, show_default=True, help="Lie tolerance.")
@click.option("--seed", default=0, show_default=True, help="Seed for question materialization.")
@click.option("--script", type=click.Path(exists=True, dir_okay=False), default=None,
              help="File with one answer index per line (replay mode).")
def cmd_play(M, q, e, seed, script):
    """Interactive session: think of a state, answer questions, possibly lie.

    The engine infers your state if you lied at most e times; otherwise it
    calls the session inconsistent.
    """
    try:
        B, tree = compute_B(M, q, e)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    rng = np.random.default_rng(seed)
    status = initial_status(M, e)
    w_left = tree.depth
    answers = None
    if script:
        with open(script) as fh:
            answers = [line.strip() for line in fh if line.strip()]
        answers.reverse()
    click.echo(f"Think of a state in 1..{M}; you may lie up to {e} time(s).")
    click.echo(f"I will ask at most {B} question(s) with {q} choices each.")
    asked = 0
    while True:
        final, winner = is_final(status)
        if final:
            break
        node = tree.memo[(status.type.counts, w_left)]
        question = materialize(node.question_plan, status, rng)
        parts = ", ".join(
            f"({j + 1}) {{{', '.join(map(str, p))}}}" for j, p in enumerate(question.parts)
        )
        click.echo(f"Q{asked + 1}: which part holds your state?  {parts}")
        while True:
            if answers is not None:
                if not answers:
                    raise click.ClickException("script ran out of answers")
                raw = answers.pop()
                click.echo(f"> {raw}")
            else:
                raw = click.prompt(">", prompt_suffix=" ")
            try:
                j = int(raw)
            except ValueError:
                click.echo(f"please enter an integer in 1..{q}")
                continue
            if not 1 <= j <= q:
                click.echo(f"please enter an integer in 1..{q}")
                continue
            break
        status = update_status(status, question, j)
        asked += 1
        w_left -= 1
    _, winner = is_final(status)
    if winner is None:
        click.echo(f"Inconsistent: your answers imply more than {e} lie(s).")
    else:
        click.echo(f"Your state is {winner} (after {asked} question(s)).")


if __name__ == "__main__":
    main()
