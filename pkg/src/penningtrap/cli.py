"""Command-line front end.

Every experiment subcommand reads an optional YAML scenario, writes its
tables into the output directory and a ``manifest-<command>.json`` next to
them.  Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import coherence as co
from . import dynamics as dyn
from . import geometry as geo
from . import modes as modes_mod
from . import sideband as sb
from . import transport as tr
from .experiments import RUNNERS
from .scenario import DEFAULT_SCENARIO, ScenarioError, load_scenario, read_scenario

OUTPUT_ENV = "PENNINGTRAP_OUTPUT_DIR"
DEFAULT_OUTPUT = "penningtrap-output"

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

NUMERICAL_ERRORS = (geo.NullNotFoundError, geo.InfeasibleBoundsError, dyn.IntegrationError,
                    co.SpectralIntegralError, co.FitError, tr.TransportError, sb.ThermometryError,
                    FloatingPointError, np.linalg.LinAlgError)

HELP = {
    "modes": "eigenfrequencies for a species, field and axial frequency",
    "solve": "electrode voltages for a target null and curvature",
    "null": "dc null of a voltage set and the rf null height",
    "cool-doppler": "Monte-Carlo Doppler cooling with optional axialization",
    "cool-sideband": "sideband cooling of one mode with heating",
    "thermometry": "sideband-ratio mean occupation from probe populations",
    "heating": "heating-rate fit and electric-field noise",
    "coherence": "Ramsey and Uhrig coherence under fitted noise",
    "transport": "transport waveform and motional excitation",
    "raster": "raster schedule from a waypoint file",
    "isolation": "detachment-ladder isolation versus frequency",
}


def _file_digest(text):
    return hashlib.sha256(text.encode()).hexdigest()


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input, so they exit 1 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="penningtrap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in HELP.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("-c", "--scenario", type=Path,
                       help="YAML scenario; without it the built-in operating point is used")
        p.add_argument("-o", "--out", type=Path,
                       help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        p.add_argument("--species", help="ion species, e.g. Be9")
        p.add_argument("--B", dest="B", help="magnetic field with unit, e.g. '3 T'")
        p.add_argument("--omega-z", dest="omega_z", help="axial frequency with unit, e.g. '2.5 MHz'")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("-q", "--quiet", action="store_true", help="do not print the summary")
    v = sub.add_parser("verify", help="check reported anchors or invariants",
                       description="Run a self-check suite and print target, computed value and tolerance.")
    v.add_argument("suite", choices=["paper-anchors", "invariants"])
    return parser


def _scenario(args):
    if args.scenario is not None:
        if not args.scenario.exists():
            raise ScenarioError(f"scenario file not found: {args.scenario}")
        sc = read_scenario(args.command, args.scenario)
        data, base = sc.raw, args.scenario.parent
    else:
        data, base = dict(DEFAULT_SCENARIO), Path(".")
    data = dict(data or {})
    for key in ("species", "B", "omega_z", "seed"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    return load_scenario(args.command, data, base)


def _output_dir(args):
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def write_outputs(sc, result, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in result.files.items():
        (out_dir / name).write_text(text)
    manifest = {
        "command": sc.command,
        "scenario_sha256": sc.digest(),
        "scenario": sc.raw,
        "seed": sc.seed,
        "versions": {"penningtrap": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": {name: _file_digest(text) for name, text in sorted(result.files.items())},
    }
    path = out_dir / f"manifest-{sc.command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def run_verify(suite):
    from . import verify
    checks, lines = verify.run_suite(suite)
    print("\n".join(lines))
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_VALIDATION


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return run_verify(args.suite)
    try:
        sc = _scenario(args)
        result = RUNNERS[args.command](sc)
        manifest = write_outputs(sc, result, _output_dir(args))
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, modes_mod.StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if not args.quiet:
        print("\n".join(result.summary))
        print(f"wrote {', '.join(sorted(result.files))} and {manifest.name} to {manifest.parent}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
