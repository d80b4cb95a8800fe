"""Command-line front end.

    python -m app.cli hcap  slits.json  [--mc-samples N] [--seed S]
    python -m app.cli drive slit.json   [--grid G] --out driving.csv
    python -m app.cli trace driving.csv --out slits.json
    python -m app.cli fit   slits.json  [--method bangbang|shooting|both] [--levels L] [--tol E]
    python -m app.cli verify            [--mc-samples N]

Exit status: 0 success, 1 I/O or usage error, 2 invalid input, 3 numerical
failure. Failures print a one-line summary on stderr and a diagnostic JSON.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from app.config import configure_logging
from app.errors import InvalidMultiSlitError, LoewnerError
from app.models.results import Estimate, FitResponse, FitSummary, HcapResponse
from app.models.run import Command, Method, RunConfig
from app.models.slit import MultiSlitPayload
from app.services.capacity import hcap_chain, hcap_mc
from app.services.fitter import agreement, fit
from app.services.forward import trace_hulls
from app.services.geometry import MultiSlit, validate_multislit
from app.services.inverse import drive_single
from app.services.verify import run_verify
from app.utils.parallel import thread_limit
from app.utils.serialization import driving_csv, dumps, read_driving_csv, read_multislit

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loewner", description="Multi-slit chordal Loewner toolkit")
    parser.add_argument("--log-level", default=None, help="override LOEWNER_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command in Command:
        p = sub.add_parser(command.value)
        p.add_argument("input", nargs="?" if command is Command.VERIFY else None, type=Path)
        p.add_argument("--out", type=Path, help="output file (default: stdout)")
        p.add_argument("--grid", type=int)
        p.add_argument("--levels", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--mc-samples", type=int, default=0)
        p.add_argument("--method", choices=[m.value for m in Method], default=Method.BANGBANG.value)
        p.add_argument("--threads", type=int)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {
        "command": args.command,
        "input": args.input,
        "out": args.out,
        "mc_samples": args.mc_samples,
        "method": args.method,
        "threads": args.threads,
    }
    for name in ("grid", "levels", "tol", "seed"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    return RunConfig(**fields)


def _multislit(config: RunConfig) -> MultiSlit:
    m = read_multislit(config.input)
    report = validate_multislit(m)
    if not report.ok:
        raise InvalidMultiSlitError(list(report.violations))
    return m


def _emit(config: RunConfig, text: str) -> None:
    if config.out is None:
        sys.stdout.write(text)
    else:
        config.out.write_text(text, encoding="utf-8")


def _hcap(config: RunConfig) -> int:
    m = _multislit(config)
    response = HcapResponse(chain=Estimate.from_domain(hcap_chain(m)))
    if config.mc_samples:
        response.montecarlo = Estimate.from_domain(hcap_mc(m, config.mc_samples, config.seed))
    _emit(config, dumps(response) + "\n")
    print(f"hcap: {response.chain.value:.12g}", file=sys.stderr)
    return 0


def _drive(config: RunConfig) -> int:
    """One slit: its driving function; several: the driving record of the fit."""
    m = _multislit(config)
    if m.n == 1:
        record, _, _ = drive_single(m.slits[0], config.grid)
    else:
        record = fit(m, config.method.value, config.levels, config.tol, config.grid)[0].driving
    _emit(config, driving_csv(record))
    print(f"drive: {record.n} driver(s), T = {record.T:.12g}", file=sys.stderr)
    return 0


def _trace(config: RunConfig) -> int:
    hulls = trace_hulls(read_driving_csv(config.input))
    _emit(config, dumps(MultiSlitPayload.from_domain(hulls)) + "\n")
    print(f"trace: {hulls.n} slit(s)", file=sys.stderr)
    return 0


def _fit(config: RunConfig) -> int:
    results = fit(_multislit(config), config.method.value, config.levels, config.tol, config.grid)
    fits = [FitResponse.from_domain(r) for r in results]
    if len(results) == 1:
        payload: Any = fits[0]
    else:
        payload = FitSummary(fits=fits, agreement=agreement(*results))
    _emit(config, dumps(payload) + "\n")
    if config.out is not None:
        config.out.with_suffix(".csv").write_text(driving_csv(results[0].driving), encoding="utf-8")
    lam = ", ".join(f"{v:.6f}" for v in results[0].lam.weights)
    print(f"fit ({results[0].method}): lambda = [{lam}]", file=sys.stderr)
    return 0


def _verify(config: RunConfig) -> int:
    report = run_verify(config.seed, config.levels, config.tol, config.grid, config.mc_samples)
    _emit(config, dumps(report.to_dict()) + "\n")
    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        print(f"verify: {len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 3
    print(f"verify: all {len(report.checks)} checks passed", file=sys.stderr)
    return 0


HANDLERS = {
    Command.HCAP: _hcap,
    Command.DRIVE: _drive,
    Command.TRACE: _trace,
    Command.FIT: _fit,
    Command.VERIFY: _verify,
}


def _diagnostics(config: Optional[RunConfig], payload: dict) -> None:
    text = dumps(payload) + "\n"
    if config is not None and config.out is not None:
        path = config.out.with_name(config.out.stem + ".diagnostics.json")
        try:
            path.write_text(text, encoding="utf-8")
            return
        except OSError:
            pass
    sys.stdout.write(text)


def run(config: RunConfig) -> int:
    """Execute one command and return its exit status."""
    try:
        with thread_limit(config.threads):
            return HANDLERS[config.command](config)
    except LoewnerError as exc:
        print(f"{config.command.value}: {type(exc).__name__}: {exc.message}", file=sys.stderr)
        _diagnostics(config, exc.to_dict())
        return exc.exit_code
    except ValidationError as exc:
        print(f"{config.command.value}: invalid input: {exc.error_count()} error(s)", file=sys.stderr)
        errors = [{"loc": [str(p) for p in e["loc"]], "msg": e["msg"]} for e in exc.errors()]
        _diagnostics(config, {"error": "ValidationError", "errors": errors})
        return 2
    except OSError as exc:
        print(f"{config.command.value}: {exc}", file=sys.stderr)
        return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level or "WARNING")
        config = config_from_args(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"invalid options: {exc.errors(include_url=False)[0]['msg']}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
