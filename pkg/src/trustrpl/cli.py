"""Command-line front end.

Subcommands:
  run          execute one scenario, write the metrics bundle
  sweep        vary one parameter across values x seeds, write a summary
  figure-data  emit long-format datasets for the standard result figures

JSON config in, CSV out. Exit codes: 0 success, 1 usage error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .behavior import EnvName
from .marl import Action, DodagState, PAIR_ORDER, StateActionPair
from .sim import RunResult, ScenarioConfig, run_scenario
from .trust import TrustParams, inverse_gompertz

SWEEP_PARAMETERS = ("epsilon", "B", "C", "environment")
FIGURE_IDS = (
    "trust_curves",
    "failure_rates",
    "decision_distribution",
    "environment_decisions",
    "returns_box",
)
_PAIR_LABELS = {
    StateActionPair(DodagState.HIGH_RETURN, Action.RETAIN): "HR",
    StateActionPair(DodagState.LOW_RETURN, Action.MODIFY): "LM",
    StateActionPair(DodagState.HIGH_RETURN, Action.MODIFY): "HM",
    StateActionPair(DodagState.LOW_RETURN, Action.RETAIN): "LR",
}


class UsageError(Exception):
    pass


def _load_config(path: str, seed_override: int | None) -> ScenarioConfig:
    cfg_path = Path(path)
    if not cfg_path.is_file():
        raise UsageError(f"config file not found: {cfg_path}")
    try:
        raw = json.loads(cfg_path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {cfg_path} is not valid JSON: {exc}")
    if seed_override is not None:
        raw["seed"] = seed_override
    try:
        return ScenarioConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config {cfg_path}: {exc}")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_run_outputs(result: RunResult, outdir: Path) -> None:
    """Write the full bundle for one run."""
    outdir.mkdir(parents=True, exist_ok=True)
    digest = result.metadata["config_digest"]
    seed = result.metadata["seed"]

    meta = dict(result.metadata)
    meta["config"] = result.config.to_dict()
    (outdir / "run_metadata.json").write_text(json.dumps(meta, sort_keys=True, indent=2))

    _write_csv(
        outdir / "epochs.csv",
        ["config_digest", "seed", "epoch", "return_value", "n_nonroot", "state",
         "chosen_state", "chosen_action", "explored", "n_removed", "removed_nodes",
         "mean_failure_rate"],
        [
            [digest, seed, rec.epoch, rec.return_value, rec.n_nonroot, rec.state.value,
             rec.chosen.state.value, rec.chosen.action.value, int(rec.explored),
             len(rec.removed_nodes), ";".join(map(str, rec.removed_nodes)),
             repr(rate)]
            for rec, rate in zip(result.epochs, result.mean_failure_rates)
        ],
    )
    _write_csv(
        outdir / "trust_series.csv",
        ["config_digest", "seed", "episode", "node_id", "node_class", "trust"],
        [
            [digest, seed, episode, node_id, node_class, repr(trust)]
            for episode, node_id, node_class, trust in result.trust_series
        ],
    )
    total = max(1, len(result.epochs))
    _write_csv(
        outdir / "action_distribution.csv",
        ["config_digest", "seed", "state", "action", "decision_count",
         "decision_share", "chosen_count", "chosen_share"],
        [
            [digest, seed, pair.state.value, pair.action.value,
             result.decision_tallies.get(pair, 0),
             repr(result.decision_tallies.get(pair, 0) / total),
             result.chosen_tallies.get(pair, 0),
             repr(result.chosen_tallies.get(pair, 0) / total)]
            for pair in PAIR_ORDER
        ],
    )


def _apply_parameter(config: ScenarioConfig, parameter: str, value: str) -> ScenarioConfig:
    if parameter == "epsilon":
        return dataclasses.replace(
            config, marl=dataclasses.replace(config.marl, epsilon=float(value))
        )
    if parameter == "B":
        return dataclasses.replace(
            config, trust=dataclasses.replace(config.trust, displacement=float(value))
        )
    if parameter == "C":
        return dataclasses.replace(
            config, trust=dataclasses.replace(config.trust, decay=float(value))
        )
    if parameter == "environment":
        return dataclasses.replace(config, environment=EnvName(value).value)
    raise UsageError(f"unknown sweep parameter: {parameter} (one of {SWEEP_PARAMETERS})")


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    if not args.quiet:
        print(f"running scenario: env={config.environment} seed={config.seed} "
              f"epochs={config.n_epochs}")
    result = run_scenario(config)
    write_run_outputs(result, Path(args.out))
    if not args.quiet:
        print(f"wrote {args.out}: {len(result.epochs)} epochs, "
              f"mean return {result.mean_return():.2f}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.parameter not in SWEEP_PARAMETERS:
        raise UsageError(f"unknown sweep parameter: {args.parameter} "
                         f"(one of {SWEEP_PARAMETERS})")
    if not args.values:
        raise UsageError("sweep needs at least one value")
    base = _load_config(args.config, args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = [base.seed + i for i in range(args.seeds)]

    rows = []
    for value in args.values:
        cfg_for_value = _apply_parameter(base, args.parameter, value)
        returns: list[float] = []
        optimal: list[float] = []
        retain = modify = 0
        for seed in seeds:
            cfg = dataclasses.replace(cfg_for_value, seed=seed)
            result = run_scenario(cfg)
            returns.append(result.mean_return())
            optimal.append(result.optimal_decision_fraction())
            retain += result.retain_count()
            modify += result.modify_count()
            if not args.quiet:
                print(f"{args.parameter}={value} seed={seed}: "
                      f"return {returns[-1]:.2f}, optimal {optimal[-1]:.1%}")
        rows.append([
            cfg_for_value.digest(), ";".join(map(str, seeds)), args.parameter, value,
            repr(sum(returns) / len(returns)),
            repr(sum(optimal) / len(optimal)),
            retain, modify,
        ])
    _write_csv(
        outdir / "sweep_summary.csv",
        ["config_digest", "seeds", "parameter", "value", "mean_return",
         "optimal_pair_fraction", "retain_count", "modify_count"],
        rows,
    )

    if args.parameter in ("B", "C"):
        # Parameter study of the trust curve itself, over a misbehavior grid.
        curve_rows = []
        for value in args.values:
            params = (
                TrustParams(displacement=float(value))
                if args.parameter == "B"
                else TrustParams(decay=float(value))
            )
            for g in range(0, 101, 5):
                curve_rows.append([
                    base.digest(), base.seed, value, g,
                    repr(inverse_gompertz(float(g), params)),
                ])
        _write_csv(
            outdir / "ig_curves.csv",
            ["config_digest", "seed", "series", "x", "y"],
            curve_rows,
        )
    return 0


def _figure_rows(figure: str, base: ScenarioConfig, seeds: list[int],
                 quiet: bool) -> list[list]:
    """Produce (series, x, y) rows for one figure id."""
    rows: list[list] = []

    def run_for(env: str, seed: int) -> RunResult:
        cfg = dataclasses.replace(base, environment=env, seed=seed)
        if not quiet:
            print(f"figure {figure}: running env={env} seed={seed}")
        return run_scenario(cfg)

    if figure == "trust_curves":
        # Mean trust per node class over the first epoch's episodes,
        # pooled across all three environments.
        acc: dict[tuple[str, int], list[float]] = {}
        for env in EnvName:
            for seed in seeds:
                result = run_for(env.value, seed)
                for episode, _nid, node_class, trust in result.trust_series:
                    if episode > base.episodes_per_epoch:
                        continue
                    acc.setdefault((node_class, episode), []).append(trust)
        for (node_class, episode), values in sorted(acc.items()):
            rows.append([node_class, episode, repr(sum(values) / len(values))])
    elif figure == "failure_rates":
        for env in EnvName:
            for seed in seeds:
                result = run_for(env.value, seed)
                for epoch, rate in enumerate(result.mean_failure_rates):
                    rows.append([env.value, epoch, repr(rate)])
    elif figure == "decision_distribution":
        tallies: dict[StateActionPair, int] = {}
        total = 0
        for seed in seeds:
            result = run_for(base.environment, seed)
            for pair, count in result.decision_tallies.items():
                tallies[pair] = tallies.get(pair, 0) + count
                total += count
        for pair in PAIR_ORDER:
            rows.append([
                _PAIR_LABELS[pair], pair.state.value + "/" + pair.action.value,
                repr(tallies.get(pair, 0) / max(1, total)),
            ])
    elif figure == "environment_decisions":
        for env in EnvName:
            retain = modify = 0
            for seed in seeds:
                result = run_for(env.value, seed)
                retain += result.retain_count()
                modify += result.modify_count()
            rows.append([env.value, "retain", retain])
            rows.append([env.value, "modify", modify])
    elif figure == "returns_box":
        for env in EnvName:
            for seed in seeds:
                result = run_for(env.value, seed)
                for rec in result.epochs:
                    rows.append([env.value, rec.epoch, rec.return_value])
    else:
        raise UsageError(f"unknown figure id: {figure} (one of {FIGURE_IDS})")
    return rows


def cmd_figure_data(args: argparse.Namespace) -> int:
    base = _load_config(args.config, args.seed)
    seeds = [base.seed + i for i in range(args.seeds)]
    rows = _figure_rows(args.figure, base, seeds, args.quiet)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    out_path = outdir / f"{args.figure}.csv"
    _write_csv(
        out_path,
        ["config_digest", "seed", "series", "x", "y"],
        [[base.digest(), base.seed] + row for row in rows],
    )
    if not args.quiet:
        print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trustrpl",
        description="Trust-aware RPL DODAG simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="scenario config (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_run = sub.add_parser("run", help="execute one scenario")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="vary one parameter across values")
    common(p_sweep)
    p_sweep.add_argument("--parameter", required=True,
                         help=f"one of {', '.join(SWEEP_PARAMETERS)}")
    p_sweep.add_argument("--values", nargs="*", default=[],
                         help="parameter values to sweep")
    p_sweep.add_argument("--seeds", type=int, default=10,
                         help="number of seeds per value")
    p_sweep.set_defaults(func=cmd_sweep)

    p_fig = sub.add_parser("figure-data", help="emit a figure-analogue dataset")
    common(p_fig)
    p_fig.add_argument("--figure", required=True,
                       help=f"one of {', '.join(FIGURE_IDS)}")
    p_fig.add_argument("--seeds", type=int, default=1,
                       help="number of seeds to pool")
    p_fig.set_defaults(func=cmd_figure_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
