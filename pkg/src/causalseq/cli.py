"""Command-line front end.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation error.
Commands that write files put them in ``--out`` (default ``$CAUSALSEQ_OUT``
or ``./runs``) together with ``config.json``, an echo of every parameter
that ``causalseq replay`` can rerun.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import re
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .engine import CausalProcess, EvidenceItem, Mode, Role, query
from .errors import CapacityError, CausalSeqError
from .library import BUILTINS, build
from .oracle import mint_constants
from .simulator import (
    PolicyKind,
    offline_demo,
    run_episode,
    run_experiment,
    summaries_csv,
)
from .rng import derive_seed
from .textformat import parse_process, serialize_process
from .trainer import FROZEN, INTERLEAVED, LearnerTable, convergence_report, format_key, run_training

OUT_ENV = "CAUSALSEQ_OUT"

_TERM = re.compile(r"\s*(?:do\(\s*([^=()\s,]+)\s*=\s*([^()\s,]+)\s*\)|([^=()\s,]+)\s*=\s*([^()\s,]+))\s*$")


class UsageError(Exception):
    pass


def parse_evidence(process: CausalProcess, text: str) -> list[EvidenceItem]:
    """Parse ``do(X=v),Y=w`` into evidence items; values are symbol labels."""
    items = []
    if not text.strip():
        return items
    for term in text.split(","):
        m = _TERM.match(term)
        if m is None:
            raise UsageError(f"malformed evidence term {term.strip()!r}")
        if m.group(1) is not None:
            name, label, mode = m.group(1), m.group(2), Mode.INTERVENE
        else:
            name, label, mode = m.group(3), m.group(4), Mode.CONDITION
        try:
            var = process.variable(name)
            items.append(EvidenceItem(var.id, var.symbol(label), mode))
        except CausalSeqError as exc:
            raise UsageError(str(exc)) from None
    return items


def _load_process(args, horizon: int | None = None, exact: bool = True) -> CausalProcess:
    if args.spec is not None:
        try:
            text = Path(args.spec).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read spec file: {exc}") from None
        try:
            return parse_process(text)
        except ValueError as exc:
            raise UsageError(f"{args.spec}: {exc}") from None
    try:
        return build(args.process, horizon, exact=exact)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except CapacityError as exc:
        raise UsageError(str(exc)) from None


def _positive(name: str, value: int) -> None:
    if value < 1:
        raise UsageError(f"--{name} must be at least 1, got {value}")


def _out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or "runs")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo(out: Path, args, params: dict) -> None:
    argv = [args.command]
    for name, value in params.items():
        if value is not None:
            argv += [f"--{name.replace('_', '-')}", str(value)]
    argv += ["--out", str(out)]
    record = {
        "command": args.command,
        "params": params,
        "argv": argv,
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    (out / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _source(args) -> dict:
    return {"process": None if args.spec else args.process, "spec": args.spec}


def _fmt_probs(probs) -> str:
    return " ".join(f"{float(p):.6f}" for p in probs)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_query(args) -> int:
    process = _load_process(args, args.horizon)
    try:
        target = process.var_id(args.target)
    except CausalSeqError as exc:
        raise UsageError(str(exc)) from None
    evidence = parse_evidence(process, args.evidence)
    if any(e.variable == target for e in evidence):
        raise UsageError("target variable also appears in the evidence")
    try:
        dist = query(process, target, evidence)
    except (ValueError, CapacityError) as exc:
        raise UsageError(str(exc)) from None
    print(_fmt_probs(dist.probs))
    return 0


def _policies(name: str) -> list[PolicyKind]:
    if name == "both":
        return [PolicyKind.INTERVENTIONAL, PolicyKind.CONDITIONAL]
    return [PolicyKind(name)]


def _learner(args, kinds) -> LearnerTable | None:
    if PolicyKind.LEARNED not in kinds:
        return None
    if args.learner is None:
        raise UsageError("--policy learned needs --learner FILE")
    try:
        return LearnerTable.loads(Path(args.learner).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise UsageError(f"{args.learner}: {exc}") from None


def cmd_simulate(args) -> int:
    _positive("episodes", args.episodes)
    process = _load_process(args, args.horizon, exact=False)
    kinds = _policies(args.policy)
    learner = _learner(args, kinds)
    out = _out_dir(args)
    arm = process.variables[process.ids_with_role(Role.ACTION)[0]]
    with open(out / "episodes.jsonl", "w") as fh:
        for kind in kinds:
            for i in range(args.episodes):
                rec = run_episode(process, kind, args.horizon, derive_seed(args.seed, i), learner)
                fh.write(rec.to_json() + "\n")
                acts = " ".join(arm.label(a) for a in rec.actions)
                rews = " ".join(str(int(r)) for r in rec.rewards)
                status = " (aborted)" if rec.aborted else ""
                print(f"{kind.value:>14} latent={rec.latent} actions: {acts} rewards: {rews}{status}")
    _echo(out, args, {**_source(args), "policy": args.policy, "horizon": args.horizon,
                      "episodes": args.episodes, "seed": args.seed, "learner": args.learner})
    return 0


def cmd_experiment(args) -> int:
    _positive("episodes", args.episodes)
    _positive("workers", args.workers)
    process = _load_process(args, args.horizon, exact=False)
    kinds = _policies(args.policy)
    learner = _learner(args, kinds)
    out = _out_dir(args)
    summaries = []
    with open(out / "episodes.jsonl", "w") as fh:
        for kind in kinds:
            summaries.append(run_experiment(
                process, kind, args.horizon, args.episodes, args.seed,
                learner=learner, workers=args.workers,
            ))
            for i in range(min(args.log_episodes, args.episodes)):
                rec = run_episode(process, kind, args.horizon, derive_seed(args.seed, i), learner)
                fh.write(rec.to_json() + "\n")
    (out / "summary.csv").write_text(summaries_csv(summaries))
    print(f"{'policy':>14} {'episodes':>8} {'reward':>15} {'best-arm':>15} {'repeat':>15}")
    for s in summaries:
        print(
            f"{s.kind.value:>14} {s.episodes:>8} {s.mean_reward:>7.4f}±{s.mean_reward_se:.4f}"
            f" {s.best_arm_rate:>7.4f}±{s.best_arm_se:.4f} {s.repeat_rate:>7.4f}±{s.repeat_se:.4f}"
        )
        if s.aborted:
            print(f"{'':>14} aborted episodes: {s.aborted}")
    _echo(out, args, {**_source(args), "policy": args.policy, "horizon": args.horizon,
                      "episodes": args.episodes, "seed": args.seed, "learner": args.learner,
                      "workers": args.workers, "log_episodes": args.log_episodes})
    return 0


def cmd_metatrain(args) -> int:
    _positive("episodes", args.episodes)
    _positive("horizon", args.horizon)
    process = _load_process(args, args.horizon)
    try:
        learner = run_training(process, args.horizon, args.episodes, args.alpha, args.seed,
                               variant=args.variant)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    (out / "learner.txt").write_text(learner.dumps())
    rows = convergence_report(process, learner, args.horizon)
    lines = ["table,round,key,count,tv_intervened,tv_deluded"]
    print(f"{'table':<12} {'key':<32} {'count':>7} {'TV(do)':>8} {'TV(cond)':>9}")
    for r in rows:
        key = format_key(process, r.key)
        deluded = "" if r.tv_deluded is None else f"{r.tv_deluded:.6f}"
        lines.append(f'{r.table},{r.round},"{key}",{r.count},{r.tv_target:.6f},{deluded}')
        print(f"{r.table:<12} {key:<32} {r.count:>7} {r.tv_target:>8.4f} {deluded[:6]:>9}")
    (out / "convergence.csv").write_text("\n".join(lines) + "\n")
    for table in ("action", "observation"):
        tvs = [r.tv_target for r in rows if r.table == table]
        print(f"max TV to intervened target, {table} keys: {max(tvs):.4f}")
    _echo(out, args, {**_source(args), "horizon": args.horizon, "episodes": args.episodes,
                      "seed": args.seed, "alpha": args.alpha, "variant": args.variant})
    return 0


def cmd_offline(args) -> int:
    _positive("episodes", args.episodes)
    process = _load_process(args, 2)
    try:
        report = offline_demo(process, args.episodes, args.seed, alpha=args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    lines = ["key,count,fitted_repeat,repeat_se,tv_deluded,tv_intervened,repeat_gap"]
    print(f"{'key':<20} {'count':>7} {'TV(cond)':>9} {'TV(do)':>8} {'gap':>8}")
    for r in report.rows:
        lines.append(f'"{r.label}",{r.count},{r.repeat_fitted:.6f},{r.repeat_se:.6f},'
                     f"{r.tv_conditional:.6f},{r.tv_interventional:.6f},{r.repeat_gap:.6f}")
        print(f"{r.label:<20} {r.count:>7} {r.tv_conditional:>9.4f} {r.tv_interventional:>8.4f}"
              f" {r.repeat_gap:>8.4f}")
    (out / "offline.csv").write_text("\n".join(lines) + "\n")
    (out / "summary.csv").write_text(summaries_csv([report.deployed]))
    d = report.deployed
    print(f"deployed: repeat rate {d.repeat_rate:.4f}±{d.repeat_se:.4f} over {d.episodes} episodes")
    _echo(out, args, {**_source(args), "episodes": args.episodes, "seed": args.seed,
                      "alpha": args.alpha})
    return 0


def cmd_mint(args) -> int:
    text = json.dumps(mint_constants(), indent=2, sort_keys=True) + "\n"
    if args.output is None:
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return 0


def cmd_serialize(args) -> int:
    sys.stdout.write(serialize_process(_load_process(args, args.horizon)))
    return 0


def cmd_replay(args) -> int:
    try:
        record = json.loads(Path(args.config).read_text(encoding="utf-8"))
        argv = record["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read config echo: {exc}") from None
    return main(argv)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_source(p: argparse.ArgumentParser, horizon_default: int | None = 2) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--process", default="bandit", choices=sorted(BUILTINS),
                     help="built-in process (default: bandit)")
    src.add_argument("--spec", help="process description file")
    if horizon_default is not None:
        p.add_argument("--horizon", type=int, default=horizon_default,
                       help="rounds (bandit size / episode length)")


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalseq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("query", help="exact query with do(X=v) / X=v evidence")
    _add_source(p)
    p.add_argument("--target", required=True)
    p.add_argument("--evidence", default="")
    p.set_defaults(func=cmd_query)

    policy_choices = ["conditional", "interventional", "learned", "both"]

    p = sub.add_parser("simulate", help="play a few logged episodes")
    _add_source(p, horizon_default=20)
    p.add_argument("--policy", choices=policy_choices, default="both")
    p.add_argument("--episodes", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--learner", help="learner table file for --policy learned")
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="batch comparison of policies")
    _add_source(p, horizon_default=20)
    p.add_argument("--policy", choices=policy_choices, default="both")
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--learner")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--log-episodes", type=int, default=100,
                   help="episodes per policy written to episodes.jsonl")
    _add_out(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("metatrain", help="factual/counterfactual teaching of a learner table")
    _add_source(p)
    p.add_argument("--episodes", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--variant", choices=[FROZEN, INTERLEAVED], default=FROZEN)
    _add_out(p)
    p.set_defaults(func=cmd_metatrain)

    p = sub.add_parser("offline", help="conditional fit on expert demonstrations")
    _add_source(p, horizon_default=None)
    p.add_argument("--episodes", type=int, default=100_000, help="number of demonstrations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    _add_out(p)
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("mint", help="write the enumeration-derived reference constants")
    p.add_argument("--output", help="JSON file (default: stdout)")
    p.set_defaults(func=cmd_mint)

    p = sub.add_parser("serialize", help="print a process in the text format")
    _add_source(p)
    p.set_defaults(func=cmd_serialize)

    p = sub.add_parser("replay", help="rerun a command from its config.json echo")
    p.add_argument("config")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"causalseq {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CausalSeqError, OSError) as exc:
        print(f"causalseq {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
