"""Command-line entry point: reproducible protocol runs, correction-table
export, effective-model validation, and adversary-scenario reports.

Every output file embeds the fully resolved configuration and the package
version; identical configuration and seed produce byte-identical files,
regardless of the worker count.

Exit codes: 0 success, 1 assertion failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .cavity import DEFAULT_LADDER, LEAK_TOL, InteractionSchedule, validate_effective
from .protocol import (
    PartyLayout,
    SecretAmplitudes,
    derive_correction_table,
    run_exhaustive,
    run_full_trial,
)
from .rng import stream
from .states import parse_outcome
from .security import SecurityScenario, simulate_scenario

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2

FIDELITY_GATE = 1.0 - 1e-9
FOCK_CONVERGENCE_TOL = 1e-3
CI_HALF_WIDTH_TARGET = 0.015

SCENARIO_ALIASES = {
    "a": "assigned_with_cooperation",
    "b": "assigned_without_cooperation",
    "lie": "lie_about_x",
    "intercept": "intercept_resend",
}

DEFAULT_OUT = {
    "run": "transcript.jsonl",
    "table": "correction_table.json",
    "validate": "validation_report.json",
    "security": "security_report.json",
}


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


@dataclass
class RunConfig:
    """Fully resolved invocation; serialized into every output file."""

    command: str
    secret: str = "haar-random"
    n_users: int = 2
    receiver: int | None = None
    lambda_t: float | None = None
    omega_t: float | None = None
    fock_cutoff: int = 8
    ladder: str | None = None
    samples: int = 50
    trials: int = 1000
    seed: int | None = None
    mode: str = "exhaustive"
    scenario: str = "assigned_with_cooperation"
    adversary: int = 1
    substitute: str = "ground"
    workers: int = 1
    out: str | None = None
    csv: str | None = None

    def provenance(self) -> dict:
        """Logical configuration embedded in every output file.

        Execution details that cannot change results (worker count, output
        paths) are excluded so identical runs stay byte-identical across
        parallelism settings.
        """
        doc = asdict(self)
        for key in ("workers", "out", "csv"):
            doc.pop(key, None)
        doc["version"] = __version__
        return doc


def _load_config(namespace: argparse.Namespace) -> RunConfig:
    """Merge config-file values and command-line flags (flags win)."""
    values: dict = {}
    if namespace.config:
        try:
            loaded = json.loads(Path(namespace.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a flat JSON object")
        unknown = set(loaded) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for key in RunConfig.__dataclass_fields__:
        if key == "command":
            continue
        flag = getattr(namespace, key, None)
        if flag is not None:
            values[key] = flag
    values["command"] = namespace.command
    if values.get("seed") is None and os.environ.get("QSS_SEED"):
        values["seed"] = int(os.environ["QSS_SEED"])
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.n_users < 2:
        raise ConfigError("n_users must be >= 2")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def _require_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise ConfigError("a seed is required for sampled runs "
                          "(use --seed or the QSS_SEED environment variable)")
    return cfg.seed


def _parse_secret(cfg: RunConfig) -> SecretAmplitudes:
    if cfg.secret == "haar-random":
        seed = _require_seed(cfg)
        return SecretAmplitudes.haar(stream(seed, "secret"))
    try:
        parts = [float(x) for x in cfg.secret.split(",")]
    except ValueError as exc:
        raise ConfigError(f"secret must be 'haar-random' or 'a_re,a_im,b_re,b_im': {exc}") from exc
    if len(parts) != 4:
        raise ConfigError("secret needs exactly four components: a_re,a_im,b_re,b_im")
    alpha = complex(parts[0], parts[1])
    beta = complex(parts[2], parts[3])
    norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    if abs(norm - 1.0) > 1e-6:
        raise ConfigError(f"secret violates |alpha|^2 + |beta|^2 = 1 (norm {norm:.8f})")
    if abs(norm - 1.0) > 1e-12:
        print(f"warning: renormalizing secret (norm was {norm:.10f})", file=sys.stderr)
        alpha, beta = alpha / norm, beta / norm
    return SecretAmplitudes(alpha, beta)


def _schedule(cfg: RunConfig) -> InteractionSchedule:
    base = InteractionSchedule.canonical()
    if cfg.lambda_t is None and cfg.omega_t is None:
        return base
    return InteractionSchedule(
        base.lambda_t if cfg.lambda_t is None else cfg.lambda_t,
        base.omega_t if cfg.omega_t is None else cfg.omega_t)


def _receiver_atom(cfg: RunConfig, layout: PartyLayout) -> int:
    if cfg.receiver is None:
        return layout.default_receiver_atom
    return layout.user_atom(cfg.receiver)


def _write_text(path: str, text: str) -> None:
    out = Path(path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def _write_csv(path: str, cfg: RunConfig, rows: list[tuple]) -> None:
    lines = ["# " + json.dumps(cfg.provenance(), sort_keys=True, separators=(",", ":")),
             "trial,branch,alice_outcome,x_outcomes,pauli,fidelity"]
    lines += [f"{t},{b},{a},{x},{p},{f!r}" for t, b, a, x, p, f in rows]
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(cfg: RunConfig) -> int:
    layout = PartyLayout(cfg.n_users)
    schedule = _schedule(cfg)
    receiver_atom = _receiver_atom(cfg, layout)
    secret = _parse_secret(cfg)
    table = derive_correction_table(layout, receiver_atom=receiver_atom)

    header = json.dumps({"event": "run_config", **cfg.provenance()},
                        sort_keys=True, separators=(",", ":"))
    lines = [header]
    csv_rows = []
    fidelities = []
    histogram: dict[str, float] = {}

    if cfg.mode == "exhaustive":
        results = run_exhaustive(secret, layout, receiver_atom, schedule, table)
        for i, r in enumerate(results):
            lines.append(json.dumps(
                {"trial": 0, "event": "branch", "branch": i, "alice_outcome": r.alice_outcome,
                 "x_outcomes": r.x_outcomes, "prob": r.probability, "pauli": r.pauli,
                 "fidelity": r.fidelity}, separators=(",", ":")))
            csv_rows.append((0, i, r.alice_outcome, r.x_outcomes, r.pauli, r.fidelity))
            fidelities.append(r.fidelity)
            histogram[r.alice_outcome] = histogram.get(r.alice_outcome, 0.0) + r.probability
        count_key, count = "branches", len(results)
    elif cfg.mode == "sampled":
        seed = _require_seed(cfg)

        def one_trial(k: int):
            return run_full_trial(secret, layout, receiver_atom, seed=seed,
                                  schedule=schedule, table=table, trial=k)

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                transcripts = list(pool.map(one_trial, range(cfg.trials)))
        else:
            transcripts = [one_trial(k) for k in range(cfg.trials)]
        for k, tr in enumerate(transcripts):
            lines.extend(tr.to_jsonl_lines(k))
            alice = next(ev["outcome"] for ev in tr.events if ev["event"] == "alice_measure")
            xs = "".join(ev["outcome"] for ev in tr.events if ev["event"] == "x_measure")
            pauli = next(ev["pauli"] for ev in tr.events if ev["event"] == "correct")
            fid = tr.recovery_fidelities()[-1]
            csv_rows.append((k, parse_outcome(alice, "Z"), alice, xs, pauli, fid))
            fidelities.append(fid)
            histogram[alice] = histogram.get(alice, 0.0) + 1.0 / cfg.trials
        count_key, count = "trials", cfg.trials
    else:
        raise ConfigError(f"mode must be 'exhaustive' or 'sampled', got {cfg.mode!r}")

    _write_text(cfg.out or DEFAULT_OUT["run"], "\n".join(lines) + "\n")
    if cfg.csv:
        _write_csv(cfg.csv, cfg, csv_rows)
    summary = {count_key: count, "min_fidelity": min(fidelities),
               "mean_fidelity": sum(fidelities) / len(fidelities),
               "outcome_histogram": dict(sorted(histogram.items()))}
    print(_dump(summary), end="")
    return EXIT_OK if min(fidelities) >= FIDELITY_GATE else EXIT_ASSERTION


def cmd_table(cfg: RunConfig) -> int:
    layout = PartyLayout(cfg.n_users)
    table = derive_correction_table(layout, receiver_atom=_receiver_atom(cfg, layout))
    doc = {"config": cfg.provenance(), "version": __version__, **table.to_dict()}
    _write_text(cfg.out or DEFAULT_OUT["table"], _dump(doc))
    all_e = "e" * (2 * cfg.n_users)
    all_plus = "+" * (cfg.n_users - 1)
    print(f"({all_e}, {all_plus}) -> {table.lookup(all_e, all_plus)}")
    return EXIT_OK


def _parse_ladder(cfg: RunConfig):
    if cfg.ladder is None:
        return DEFAULT_LADDER
    try:
        points = tuple(tuple(float(x) for x in chunk.split(","))
                       for chunk in cfg.ladder.split(";") if chunk.strip())
    except ValueError as exc:
        raise ConfigError(f"ladder must look like '5,5;10,10;20,20': {exc}") from exc
    if not points or any(len(p) != 2 for p in points):
        raise ConfigError("each ladder point needs exactly two values: delta/g,omega/delta")
    return points


def cmd_validate(cfg: RunConfig) -> int:
    seed = _require_seed(cfg)
    ladder = _parse_ladder(cfg)
    report = validate_effective(ladder, cfg.fock_cutoff, cfg.samples, seed)
    report_up = validate_effective(ladder, cfg.fock_cutoff + 2, cfg.samples, seed)
    fock_delta = max(abs(a.deviation - b.deviation)
                     for a, b in zip(report.points, report_up.points))
    fock_ok = fock_delta < FOCK_CONVERGENCE_TOL

    notices, warnings = [], []
    if len(report.points) > 1:
        trend_ok = report.points[-1].deviation < report.points[0].deviation
    else:
        trend_ok = True
        notices.append("single-point ladder: trend check skipped")
    for p in report.points:
        if p.leak > LEAK_TOL:
            warnings.append(f"truncation leak {p.leak:.3e} at point "
                            f"({p.delta_over_g:g},{p.omega_over_delta:g}) exceeds {LEAK_TOL:g}; "
                            "raise fock_cutoff")

    doc = {"config": cfg.provenance(), "version": __version__, **report.to_dict(),
           "ladder_fock_plus_two": [p.to_dict() for p in report_up.points],
           "fock_convergence_delta": fock_delta, "trend_ok": trend_ok,
           "notices": notices, "warnings": warnings}
    _write_text(cfg.out or DEFAULT_OUT["validate"], _dump(doc))
    print(_dump({"trend_ok": trend_ok, "fock_convergence_delta": fock_delta,
                 "notices": notices, "warnings": warnings}), end="")
    return EXIT_OK if (trend_ok and fock_ok) else EXIT_ASSERTION


def cmd_security(cfg: RunConfig) -> int:
    seed = _require_seed(cfg)
    kind = SCENARIO_ALIASES.get(cfg.scenario, cfg.scenario)
    try:
        scenario = SecurityScenario(kind=kind, adversary=cfg.adversary,
                                    receiver=cfg.receiver,
                                    substitute_policy=cfg.substitute)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    layout = PartyLayout(cfg.n_users)
    report = simulate_scenario(scenario, trials=cfg.trials, seed=seed, layout=layout)

    warnings = []
    if (report.ci_high - report.ci_low) / 2 > CI_HALF_WIDTH_TARGET:
        warnings.append(f"confidence half-width {(report.ci_high - report.ci_low) / 2:.4f} "
                        f"exceeds {CI_HALF_WIDTH_TARGET}; raise trials")
    doc = {"config": cfg.provenance(), "version": __version__, **report.to_dict(),
           "warnings": warnings}
    _write_text(cfg.out or DEFAULT_OUT["security"], _dump(doc))
    print(_dump(report.to_dict()), end="")

    if kind == "assigned_with_cooperation":
        return EXIT_OK if report.success_rate == 1.0 else EXIT_ASSERTION
    if kind == "assigned_without_cooperation":
        return EXIT_OK if report.ci_low <= 0.5 <= report.ci_high else EXIT_ASSERTION
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--n-users", dest="n_users", type=int, help="number of users (>= 2)")
    sub.add_argument("--receiver", type=int, help="assigned receiver (user id, 1..n)")
    sub.add_argument("--seed", type=int, help="root seed (QSS_SEED env var is the fallback)")
    sub.add_argument("--out", help="output file path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavityqss",
        description="Simulate and analyze cavity-mediated quantum secret sharing.")
    parser.add_argument("--config", help="JSON file with flat keys mirroring the flags")
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="run the protocol and write a transcript")
    _add_common(run)
    run.add_argument("--secret", help="'haar-random' or 'a_re,a_im,b_re,b_im'")
    run.add_argument("--mode", choices=("exhaustive", "sampled"))
    run.add_argument("--trials", type=int, help="sampled-mode trial count")
    run.add_argument("--lambda-t", dest="lambda_t", type=float,
                     help="override the exchange angle (default pi/4)")
    run.add_argument("--omega-t", dest="omega_t", type=float,
                     help="override the drive angle (default pi)")
    run.add_argument("--workers", type=int, help="parallel trial workers (output is identical)")
    run.add_argument("--csv", help="also write a per-branch/per-trial CSV summary")

    table = subs.add_parser("table", help="derive and export the correction table")
    _add_common(table)

    validate = subs.add_parser("validate", help="score the effective model against the full one")
    _add_common(validate)
    validate.add_argument("--ladder", help="semicolon-separated points 'delta/g,omega/delta'")
    validate.add_argument("--fock-cutoff", dest="fock_cutoff", type=int)
    validate.add_argument("--samples", type=int, help="Haar samples per ladder point")

    security = subs.add_parser("security", help="simulate an adversary scenario")
    _add_common(security)
    security.add_argument("--scenario",
                          help="a|b|lie|intercept|honest or the full scenario name")
    security.add_argument("--adversary", type=int, help="adversarial user id")
    security.add_argument("--substitute", choices=("ground", "mixed", "random_pure"),
                          help="intercept_resend substitute state policy")
    security.add_argument("--trials", type=int)
    return parser


COMMANDS = {"run": cmd_run, "table": cmd_table, "validate": cmd_validate,
            "security": cmd_security}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    namespace = parser.parse_args(argv)
    try:
        cfg = _load_config(namespace)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # invariant violations inside a run
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())
