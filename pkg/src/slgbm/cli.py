"""Command line entry point: ``slgbm <command> [--spec FILE] [flags]``.

Exit status is 0 when every row passes, 1 when any invariant fails or the
divergence budget is exceeded, and 2 for invalid input.
"""

import argparse
import json
import os
import sys

from .experiments import COMMANDS, SpecError, load_spec, parse_spec, run_experiment, write_report

__all__ = ["main", "build_parser"]

_FLAGS = ("n", "tau", "dt", "paths", "seed", "scheme", "p", "out", "format", "samples", "workers",
          "input", "plots")


def build_parser():
    ap = argparse.ArgumentParser(prog="slgbm", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--spec", help="JSON experiment spec; flags override its fields")
    ap.add_argument("--n", type=int, help="matrix dimension")
    ap.add_argument("--tau", type=float, nargs="+", help="time(s): checkpoints or tau_star values")
    ap.add_argument("--dt", type=float, help="time step")
    ap.add_argument("--paths", type=int, help="Monte Carlo paths")
    ap.add_argument("--samples", type=int, help="noise increments for qvcheck")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--scheme", choices=("euler", "exponential"))
    ap.add_argument("--p", type=int, help="moment degree")
    ap.add_argument("--workers", type=int, help="worker threads (capped by SLN_GBM_THREADS)")
    ap.add_argument("--input", help="report JSON to re-render (report command)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--format", choices=("csv", "json", "both"))
    ap.add_argument("--plots", action="store_true", default=None, help="also write SVG charts")
    return ap


def _spec_from_args(args):
    if args.spec:
        base = load_spec(args.spec).to_dict()
        if base["command"] != args.command:
            raise SpecError(f"{args.spec}: field 'command': spec says {base['command']!r}, "
                            f"command line says {args.command!r}")
    else:
        base = {"schema_version": 1, "command": args.command}
    for k in _FLAGS:
        v = getattr(args, k)
        if v is not None:
            base[k] = v
    return parse_spec(base, None, "<command line>")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        if spec.command == "report":
            from .plots import emit_plots, load_report

            if not spec.input:
                raise SpecError("<command line>:1: field 'input': required by the report command")
            files = emit_plots(load_report(spec.input), spec.out)
            for f in files:
                print(f)
            return 0
        rep = run_experiment(spec)
    except (SpecError, ValueError, OverflowError, ArithmeticError, OSError) as e:
        print(f"slgbm: error: {e}", file=sys.stderr)
        return 2
    files = write_report(rep, spec.out, spec.format)
    if spec.plots:
        from .plots import emit_plots

        files += emit_plots(json.loads(rep.to_json()), spec.out)
    for line in rep.summary_lines():
        print(line)
    for f in files:
        print(f"wrote {os.path.relpath(f)}")
    return 1 if rep.failed else 0


if __name__ == "__main__":
    sys.exit(main())
