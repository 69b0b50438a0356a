"""Command line entry point.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 numerical breakdown.
"""
import json
import sys
from pathlib import Path

import click

from . import config as C
from . import io as aio
from .harness import NUMERICAL_ERRORS, GenerationError, generate_data, make_grid, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_BREAKDOWN = 0, 1, 2, 3


def _options(fn):
    fn = click.option("--tol", "tol", type=float, default=None,
                      help="Override the identity, flatness and constraint tolerances.")(fn)
    fn = click.option("--suite", type=click.Choice(C.SUITES), default=None)(fn)
    fn = click.option("--n", "n", type=int, default=None, help="Grid points per axis.")(fn)
    fn = click.option("--dim", type=click.IntRange(1, 3), default=None)(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None)(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None)(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      default=None)(fn)
    return fn


def _load(config_path, out, seed, dim, n, suite, tol, **fixed):
    try:
        cfg = C.load(config_path, out=out, seed=seed, dim=dim, n=n, suite=suite, **fixed)
        if tol is not None:
            tols = dict(cfg.tolerances)
            tols.update({k: float(tol) for k in ("identities", "flat", "constraints")})
            cfg = cfg.replace(tolerances=tols)
        return cfg
    except (C.ConfigError, OSError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _run(cfg, suite=None):
    try:
        result = run_suite(cfg, suite)
    except (C.ConfigError, GenerationError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except NUMERICAL_ERRORS as exc:
        click.echo(f"numerical breakdown: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_BREAKDOWN)
    out_dir = result.write(Path(cfg.out) / result.suite)
    for c in result.checks:
        status = "PASS" if c.passed else "FAIL"
        if c.error or c.bound is None:
            detail = c.error or f"{c.value}"
        else:
            detail = f"{c.value:.3e} <= {c.bound:.3e}"
        click.echo(f"[{status}] {c.name}: {detail}")
    click.echo(f"{result.suite}: {'passed' if result.passed else 'failed'} ({out_dir})")
    sys.exit(result.exit_code)


@click.group()
def main():
    """Minimal surface simulator and verification harness."""


@main.command()
@_options
def gen(config_path, out, seed, dim, n, suite, tol):
    """Generate the initial data pair and write it as a binary block."""
    cfg = _load(config_path, out, seed, dim, n, suite, tol)
    try:
        Ybar, nbar = generate_data(cfg)
    except (GenerationError, C.ConfigError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except NUMERICAL_ERRORS as exc:
        click.echo(f"numerical breakdown: {exc}", err=True)
        sys.exit(EXIT_BREAKDOWN)
    grid = make_grid(cfg)
    path = Path(cfg.out) / "data.bin"
    aio.write_block(path, {"Y": Ybar, "n": nbar}, dim=grid.dim, n=grid.n, codim=cfg.codim, time=0.0,
                    meta={"config_hash": cfg.config_hash(), "config": cfg.to_dict()})
    click.echo(str(path))


@main.command()
@_options
def run(config_path, out, seed, dim, n, suite, tol):
    """Run the configured suite."""
    _run(_load(config_path, out, seed, dim, n, suite, tol))


@main.command()
@_options
def converge(config_path, out, seed, dim, n, suite, tol):
    """Traveling-wave convergence study."""
    cfg = _load(config_path, out, seed, dim, n, None, tol, data="traveling_wave", mode="scalar", codim=1)
    _run(cfg, "convergence")


@main.command()
@_options
def gauge(config_path, out, seed, dim, n, suite, tol):
    """Gauge flow before/after comparison."""
    _run(_load(config_path, out, seed, dim, n, None, tol), "gauge_flow")


@main.command()
@click.option("--out", type=click.Path(file_okay=False), default="runs")
def report(out):
    """Summarize every suite summary found under the output directory."""
    files = sorted(Path(out).glob("**/*_summary.json"))
    if not files:
        click.echo(f"no summaries under {out}", err=True)
        sys.exit(EXIT_CONFIG)
    code = EXIT_PASS
    for f in files:
        s = json.loads(f.read_text())
        fails = ", ".join(s["failures"]) or "-"
        click.echo(f"{s['suite']:<13} {'PASS' if s['passed'] else 'FAIL'}  "
                   f"hash={s['provenance']['config_hash']}  failures: {fails}")
        code = max(code, s["exit_code"])
    sys.exit(code)


if __name__ == "__main__":
    main()
