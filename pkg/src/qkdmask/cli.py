"""Command-line interface: run experiment specs, replay single trials, analyze
per-session dumps.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .adversary import AdversaryError
from .channel import ChannelError
from .harness import (
    ExperimentSpec,
    HarnessError,
    analyze_dump,
    config_from_dict,
    emit_results,
    run_experiment,
    trial_seeds,
    _apply_overrides,
)
from .protocol import ProtocolError, run_session
from .qmath import QMathError

_VALIDATION_ERRORS = (HarnessError, ProtocolError, ChannelError, AdversaryError,
                      QMathError, ValueError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdmask",
                                     description="Masked-bases QKD simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment spec")
    run_p.add_argument("--spec", required=True, help="path to a JSON experiment spec")
    run_p.add_argument("--out", default=None, help="output path (default: stdout)")
    run_p.add_argument("--format", choices=("csv", "records"), default="csv")
    run_p.add_argument("--seed", type=int, default=None, help="override the base seed")
    run_p.add_argument("--trials", type=int, default=None, help="override the trial count")
    run_p.add_argument("--dump", default=None, help="write per-session JSON records here")

    replay_p = sub.add_parser("replay", help="re-run one trial and dump its transcript")
    replay_p.add_argument("--spec", required=True)
    replay_p.add_argument("--trial", type=int, required=True)
    replay_p.add_argument("--cell", type=int, default=0)
    replay_p.add_argument("--out", default=None)
    replay_p.add_argument("--seed", type=int, default=None)

    analyze_p = sub.add_parser("analyze", help="Eve information estimates from a session dump")
    analyze_p.add_argument("--dump", required=True, help="per-session dump from 'run --dump'")
    analyze_p.add_argument("--out", default=None)
    return parser


def _write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.spec)
    seed = getattr(args, "seed", None)
    trials = getattr(args, "trials", None)
    if seed is not None or trials is not None:
        spec = ExperimentSpec(
            base_config=spec.base_config,
            trials=trials if trials is not None else spec.trials,
            base_seed=seed if seed is not None else spec.base_seed,
            sweep=spec.sweep,
        )
    return spec


def _cmd_run(args) -> None:
    spec = _load_spec(args)
    stats = run_experiment(spec, dump_path=args.dump)
    _write_output(emit_results(stats, args.format), args.out)


def _cmd_replay(args) -> None:
    spec = _load_spec(args)
    cells = spec.cells()
    if not 0 <= args.cell < len(cells):
        raise HarnessError(f"cell index {args.cell} out of range (grid has {len(cells)} cells)")
    if not 0 <= args.trial < spec.trials:
        raise HarnessError(f"trial index {args.trial} out of range (spec has {spec.trials} trials)")
    config_data = _apply_overrides(spec.base_config, cells[args.cell])
    seeds = trial_seeds(spec.base_seed, args.cell * spec.trials + args.trial)
    outcome = run_session(config_from_dict(config_data, seeds))
    _write_output(outcome.transcript.serialize(), args.out)


def _cmd_analyze(args) -> None:
    with open(args.dump, "r", encoding="utf-8") as fh:
        results = analyze_dump(fh)
    _write_output("".join(json.dumps(r) + "\n" for r in results), args.out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "replay": _cmd_replay, "analyze": _cmd_analyze}
    try:
        handlers[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
