"""Command-line surface: sampling, exact laws, limit laws, verification.

One binary, four subcommands, long flags only.  Exit codes: 0 success,
1 validation error, 2 numerical/convergence error, 3 verification hard-fail.
Numbers in CSV output use the period as decimal separator and repr-style
shortest exact representation (at most 17 significant digits, round-trips
bit for bit); JSON uses native numbers carrying the same values.
"""

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile

from . import exact, limits, sampler, verify
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    ResourceCapError,
    ValidationError,
)

# one source of truth for flag types, defaults, and help text; subcommands
# pick the entries they support and may override the default
_FLAG_SPECS = {
    "alpha": dict(type=float, default=0.0,
                  help="discount parameter of the stick-breaking spec"),
    "theta": dict(type=float, default=None,
                  help="concentration parameter"),
    "n": dict(type=int, default=None, help="sample size"),
    "replicates": dict(type=int, default=None,
                       help="number of Monte Carlo replicates"),
    "seed": dict(type=int, default=0, help="64-bit master seed"),
    "threads": dict(type=int, default=None,
                    help="worker threads (falls back to GEMGAPS_THREADS, "
                         "then all cores)"),
    "format": dict(choices=("csv", "json"), default="csv",
                   help="output encoding"),
    "out": dict(default=None, metavar="PATH",
                help="output file (written atomically); default stdout"),
    "tol": dict(type=float, default=None,
                help="numerical tolerance for series/quadrature truncation"),
    "experiment": dict(default=None,
                       help="experiment name; omit to run the full suite"),
    "significance": dict(type=float, default=verify.SIGNIFICANCE_DEFAULT,
                         help="p-value threshold for the fail decision"),
    "op": dict(choices=("ewens", "dt", "mn", "k0"), default=None,
               help="which exact law to evaluate"),
    "partition": dict(default=None, metavar="PARTS",
                      help="comma-separated partition parts, e.g. 2,1"),
    "composition": dict(default=None, metavar="PARTS",
                        help="comma-separated ordered composition parts"),
    "x": dict(type=float, default=None, help="evaluation point"),
    "grid": dict(default=None, metavar="XS",
                 help="comma-separated evaluation points (CSV grid export)"),
    "i": dict(type=int, default=None, help="first gap index"),
    "j": dict(type=int, default=None, help="second gap index"),
    "b": dict(type=float, default=None, help="beta stopping-level parameter"),
    "a": dict(type=float, default=None, help="first beta parameter"),
    "tail_mean_cap": dict(type=float, default=None,
                          help="series truncation: cap on the dropped tail mean"),
    "threshold": dict(type=float, default=None,
                      help="sup-distance threshold for the normal-shape check"),
}

_CONFIG_FLAGS = ("theta", "alpha", "n", "i", "j", "b", "a",
                 "tail_mean_cap", "threshold")

_REPORT_FIELDS = ("experiment_name", "spec", "n", "replicates", "seed",
                  "statistic_name", "test_kind", "statistic_value",
                  "dof_or_n", "p_value", "decision", "notes")


@dataclasses.dataclass(frozen=True)
class CliConfig:
    """Validated common parameters shared by all subcommands."""

    command: str
    alpha: float = 0.0
    theta: float = None
    n: int = None
    replicates: int = None
    seed: int = 0
    threads: int = None
    format: str = "csv"
    out: str = None
    experiment: str = None
    tol: float = None

    def __post_init__(self):
        if self.command not in ("sample", "exact", "limit", "verify"):
            raise ValidationError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise ValidationError(f"--format must be csv or json, got {self.format!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError(f"--seed must fit in 64 unsigned bits, got {self.seed}")
        if self.n is not None and self.n < 1:
            raise ValidationError(f"--n must be a positive integer, got {self.n}")
        if self.replicates is not None and self.replicates < 1:
            raise ValidationError(f"--replicates must be >= 1, got {self.replicates}")
        if self.threads is not None and self.threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {self.threads}")
        if self.tol is not None and not self.tol > 0.0:
            raise ValidationError(f"--tol must be positive, got {self.tol}")


def _add_flag(parser, name, **overrides):
    spec = dict(_FLAG_SPECS[name])
    spec.update(overrides)
    parser.add_argument("--" + name.replace("_", "-"), dest=name, **spec)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gemgaps",
        description="Order-statistic gaps in residual allocation models: "
                    "draw samples, evaluate exact and limit laws, and run "
                    "the statistical verification suite.")
    subs = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = subs.add_parser("sample", formatter_class=fmt,
                        help="draw replicate samples from a GEM spec")
    for name in ("alpha", "theta", "n", "seed", "format", "out"):
        _add_flag(p, name)
    _add_flag(p, "replicates", default=1)

    p = subs.add_parser("exact", formatter_class=fmt,
                        help="evaluate an exact law (scalar or pmf table)")
    for name in ("op", "theta", "n", "partition", "composition",
                 "format", "out"):
        _add_flag(p, name)
    _add_flag(p, "tol", default=1e-10)

    p = subs.add_parser("limit", formatter_class=fmt,
                        help="evaluate the limiting CDF of the scaled maximum")
    for name in ("alpha", "theta", "x", "grid", "format", "out"):
        _add_flag(p, name)
    _add_flag(p, "tol", default=1e-8)

    p = subs.add_parser("verify", formatter_class=fmt,
                        help="run one statistical experiment or the full suite")
    for name in ("experiment", "replicates", "seed", "threads",
                 "significance", "out"):
        _add_flag(p, name)
    _add_flag(p, "format", default="json")
    for name in _CONFIG_FLAGS:
        # config flags must default to None so that only flags the user
        # actually passed reach the experiment's config dict
        _add_flag(p, name, default=None)
    return parser


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _write_output(text, out):
    """Write to stdout, or atomically (temp file + rename) to a path."""
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(out)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gemgaps-tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _scalar_text(fmt, op, value):
    if fmt == "json":
        return json.dumps({"op": op, "value": float(value)}) + "\n"
    return repr(float(value)) + "\n"


def _pmf_text(fmt, pmf):
    if fmt == "json":
        payload = {
            "values": [k + pmf.support_offset for k in range(pmf.probs.size)],
            "probabilities": [float(p) for p in pmf.probs],
            "tail_bound": float(pmf.tail_bound),
        }
        return json.dumps(payload) + "\n"
    return exact.pmf_to_csv(pmf)


def _reports_csv(reports):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_REPORT_FIELDS)
    for report in reports:
        spec = (sampler.spec_as_dict(report.spec)
                if report.spec is not None else None)
        row = []
        for field in _REPORT_FIELDS:
            if field == "spec":
                row.append("" if spec is None else json.dumps(spec))
            else:
                value = getattr(report, field)
                row.append(repr(value) if isinstance(value, float) else str(value))
        writer.writerow(row)
    return buffer.getvalue()


def _parse_number_list(text, flag, converter):
    parts = [piece.strip() for piece in text.split(",")]
    if not parts or any(piece == "" for piece in parts):
        raise ValidationError(f"{flag} expects a comma-separated list, got {text!r}")
    try:
        return [converter(piece) for piece in parts]
    except ValueError:
        raise ValidationError(f"{flag} has a non-numeric entry in {text!r}") from None


# ---------------------------------------------------------------------------
# subcommand runners: each returns (text, exit code)
# ---------------------------------------------------------------------------

def _run_sample(cfg, args):
    if cfg.theta is None:
        raise ValidationError("sample requires --theta")
    if cfg.n is None:
        raise ValidationError("sample requires --n")
    spec = sampler.GEM(cfg.alpha, cfg.theta)
    rows = []
    for r in range(cfg.replicates):
        rng = sampler.substream(cfg.seed, r)
        rows.append((r, sampler.sample_direct(spec, cfg.n, rng)))
    if cfg.format == "json":
        return json.dumps(sampler.sample_rows_json(rows)) + "\n", 0
    return sampler.sample_rows_csv(rows), 0


def _run_exact(cfg, args):
    if args.op is None:
        raise ValidationError("exact requires --op")
    if cfg.theta is None:
        raise ValidationError("exact requires --theta")
    if args.op == "ewens":
        if args.partition is None:
            raise ValidationError("--op ewens requires --partition")
        parts = _parse_number_list(args.partition, "--partition", int)
        value = exact.ewens_pmf(cfg.theta, exact.multiplicities_of(parts))
        return _scalar_text(cfg.format, "ewens", value), 0
    if args.op == "dt":
        if args.composition is None:
            raise ValidationError("--op dt requires --composition")
        parts = _parse_number_list(args.composition, "--composition", int)
        value = exact.dt_pmf(cfg.theta, parts)
        return _scalar_text(cfg.format, "dt", value), 0
    if args.op == "mn":
        if cfg.n is None:
            raise ValidationError("--op mn requires --n")
        pmf = exact.mn_pmf_product(cfg.theta, cfg.n, tol=cfg.tol)
        return _pmf_text(cfg.format, pmf), 0
    # k0: limiting law of the missing-value count
    pmf = exact.k0inf_pmf(cfg.theta, tol=cfg.tol)
    return _pmf_text(cfg.format, pmf), 0


def _run_limit(cfg, args):
    if cfg.theta is None:
        raise ValidationError("limit requires --theta")
    if args.grid is not None:
        xs = _parse_number_list(args.grid, "--grid", float)
        if cfg.format == "json":
            rows = []
            for x in xs:
                res = limits.limit_cdf_mn(
                    limits.LimitCdfRequest(cfg.alpha, cfg.theta, x, cfg.tol))
                rows.append({"x": x, "value": res.value,
                             "error_estimate": res.abs_error_estimate})
            return json.dumps(rows) + "\n", 0
        return limits.cdf_grid_csv(cfg.alpha, cfg.theta, xs, tol=cfg.tol), 0
    if args.x is None:
        raise ValidationError("limit requires --x (or --grid)")
    res = limits.limit_cdf_mn(
        limits.LimitCdfRequest(cfg.alpha, cfg.theta, args.x, cfg.tol))
    if cfg.format == "json":
        payload = {"x": args.x, "value": res.value,
                   "error_estimate": res.abs_error_estimate}
        return json.dumps(payload) + "\n", 0
    return repr(res.value) + "\n", 0


def _resolve_threads(explicit):
    if explicit is not None:
        return explicit
    env = os.environ.get("GEMGAPS_THREADS")
    if env is None or env.strip() == "":
        return None
    try:
        parsed = int(env)
    except ValueError:
        raise ValidationError(
            f"GEMGAPS_THREADS must be an integer, got {env!r}") from None
    if parsed < 1:
        raise ValidationError(f"GEMGAPS_THREADS must be >= 1, got {parsed}")
    return parsed


def _run_verify(cfg, args):
    threads = _resolve_threads(cfg.threads)
    config = {name: getattr(args, name) for name in _CONFIG_FLAGS
              if getattr(args, name) is not None}
    if cfg.experiment is not None:
        reports = [verify.run_experiment(
            cfg.experiment, config=config or None, master_seed=cfg.seed,
            replicates=cfg.replicates, threads=threads,
            significance=args.significance)]
    else:
        if config:
            flags = ", ".join("--" + k.replace("_", "-") for k in sorted(config))
            raise ValidationError(f"{flags} only apply to a single "
                                  "--experiment, not the full suite")
        reports = verify.run_suite(
            master_seed=cfg.seed, replicates=cfg.replicates,
            threads=threads, significance=args.significance)
    print(verify.format_table(reports), file=sys.stderr)
    if cfg.format == "json":
        text = verify.reports_to_json_lines(reports)
    else:
        text = _reports_csv(reports)
    return text, (3 if verify.any_hard_fail(reports) else 0)


_RUNNERS = {
    "sample": _run_sample,
    "exact": _run_exact,
    "limit": _run_limit,
    "verify": _run_verify,
}


def execute(argv):
    """Parse argv (no program name), run, and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; usage errors
        # are validation failures in this interface
        return 0 if not exc.code else 1
    try:
        cfg = CliConfig(**{field.name: getattr(args, field.name)
                           for field in dataclasses.fields(CliConfig)
                           if hasattr(args, field.name)})
        text, code = _RUNNERS[args.command](cfg, args)
        _write_output(text, cfg.out)
        return code
    except (ValidationError, DegenerateDataError) as exc:
        print(f"gemgaps: error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, ResourceCapError) as exc:
        print(f"gemgaps: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(execute(sys.argv[1:]))
