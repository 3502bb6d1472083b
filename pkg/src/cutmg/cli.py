"""Command line entry point: ``cutmg {convergence,mg-table,diagnostics,solve}``.

Exit codes: 0 success, 1 configuration error, 2 solver divergence.
"""
import argparse
import configparser
import dataclasses
import sys

from .errors import CutMGError
from .experiments import SWEEPS, ExperimentConfig, emit_outputs, run_convergence, \
    run_diagnostics, run_mg_table, solve

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2

_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _field_types():
    types = {}
    for f in dataclasses.fields(ExperimentConfig):
        default = f.default
        if f.name == "iso_p2":
            types[f.name] = _parse_bool
        elif isinstance(default, bool):
            types[f.name] = _parse_bool
        elif isinstance(default, int):
            types[f.name] = int
        elif isinstance(default, float):
            types[f.name] = float
        else:
            types[f.name] = str
    return types


def _parse_bool(text):
    key = str(text).strip().lower()
    if key not in _BOOL:
        raise ValueError(f"not a boolean: {text!r}")
    return _BOOL[key]


def load_config_file(path):
    """Flat ``key = value`` pairs from an INI-style file; section names are ignored."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise UsageError(f"malformed config file {path}: {exc}") from exc
    types = _field_types()
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            name = key.replace("-", "_")
            if name not in types:
                raise UsageError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[name] = types[name](raw)
            except ValueError as exc:
                raise UsageError(f"{path}: bad value for {key}: {exc}") from exc
    return values


def build_parser():
    parser = _Parser(prog="cutmg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    types = _field_types()

    def common(p):
        p.add_argument("--config", help="INI file with experiment keys")
        for f in dataclasses.fields(ExperimentConfig):
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(flag, dest=f.name, type=types[f.name], default=None,
                           metavar=f.name.upper())
        p.add_argument("--quiet", action="store_true", help="do not print tables")

    common(sub.add_parser("convergence", help="L2 errors and orders on levels 0..L"))
    p = sub.add_parser("mg-table", help="multigrid iteration counts")
    common(p)
    p.add_argument("--sweep", choices=sorted(SWEEPS), default="mu1")
    p.add_argument("--values", help="comma separated sweep values")
    common(sub.add_parser("diagnostics", help="condition numbers and Cholesky fill"))
    p = sub.add_parser("solve", help="one multigrid solve on the finest level")
    common(p)
    p.add_argument("--problem", choices=("manufactured", "product"), default="manufactured")
    return parser


def make_config(args):
    values = load_config_file(args.config) if args.config else {}
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return ExperimentConfig(**values)


def _values(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}") from exc


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        cfg = make_config(args)
        if args.command == "convergence":
            tables = [run_convergence(cfg)]
        elif args.command == "mg-table":
            values = _values(args.values) if args.values else None
            tables = [run_mg_table(cfg, args.sweep, values)]
        elif args.command == "diagnostics":
            tables = [run_diagnostics(cfg)]
        else:
            tables = [solve(cfg, args.problem)[1]]
        emit_outputs(tables, cfg.output, None if args.quiet else stdout)
        for t in tables:
            for label, lvl, msg in t.context.get("failures", []):
                sys.stderr.write(f"note: {label} level {lvl} counted as div: {msg}\n")
    except (UsageError, CutMGError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    return EXIT_DIVERGED if any(t.diverged for t in tables) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
