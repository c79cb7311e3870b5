from __future__ import annotations
from typing import Any, Callable, Optional
from py4tcp import __version__
from py4tcp.cli.experiments import ExperimentsCLI
from py4tcp.custom_types import ExperimentKind, LogBase, OutputFormat
from py4tcp.exceptions import ConfigError
from py4tcp.harness.config import resolve_config
from py4tcp.session import TcpSession
import click


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _float_list(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[tuple[float, ...]]:
    if value is None:
        return None
    try:
        return _parse_floats(value)
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def _int_list(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[tuple[int, ...]]:
    if value is None:
        return None
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


def _dist_list(ctx: click.Context,
               param: click.Parameter,
               value: Optional[str]) -> Optional[tuple[tuple[float, ...], ...]]:
    if value is None:
        return None
    try:
        return tuple(_parse_floats(part) for part in value.split(";") if part.strip())
    except ValueError:
        raise click.BadParameter(f"expected ';'-separated probability vectors like 0.8,0.2;0.2,0.8, got {value!r}")


def common_options(func: Callable) -> Callable:
    options = [
        click.option("--out", "output", type=click.Path(dir_okay=False), default=None, help="Output file."),
        click.option("--format", "fmt", type=click.Choice([f.value for f in OutputFormat]), default=None,
                     help="Output format (csv)."),
        click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed (0)."),
        click.option("--log-base", type=click.Choice([b.value for b in LogBase]), default=None,
                     help="Unit of emitted quantities (nats)."),
        click.option("--n-grid", callback=_int_list, default=None, help="Comma-separated test sizes."),
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON or TOML config; its values override flags."),
        click.option("--log-file", default="./tlab_logs.log", show_default=True, help="Log file."),
        click.option("--quiet", is_flag=True, default=False, help="Suppress tables and progress output."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def channel_options(func: Callable) -> Callable:
    func = click.option("--m-classes", type=int, default=None, help="Number of labels M (10).")(func)
    func = click.option("--epsilon", type=float, default=None, help="Label-noise level of the channel (0.1).")(func)
    return func


def gutman_options(func: Callable) -> Callable:
    func = click.option("--lam", type=float, default=None, help="GJS threshold lambda (0.05).")(func)
    func = click.option("--alpha-ratio", type=float, default=None, help="Training over test length N/n (1).")(func)
    func = click.option("--dists", callback=_dist_list, default=None,
                        help="Class laws, e.g. '0.8,0.2;0.2,0.8'.")(func)
    return func


def _execute(kind: ExperimentKind,
             output: Optional[str],
             fmt: Optional[str],
             seed: Optional[int],
             log_base: Optional[str],
             config_path: Optional[str],
             log_file: str,
             quiet: bool,
             **flags: Any) -> None:
    session = TcpSession(show_prints=not quiet, exception_on_error=False, log_file=log_file)
    flags.update({"output": output, "fmt": fmt, "seed": seed, "log_base": log_base})
    try:
        cfg = resolve_config(kind, flags, config_path)
    except ConfigError as exc:
        session.logging.error(f"CONFIG -- {kind} -- FAILED")
        raise click.UsageError(str(exc))

    if not ExperimentsCLI(session).run(cfg):
        raise click.ClickException(f"Experiment {kind} failed. See log file {session.log_path}, please.")


@click.group()
@click.version_option(__version__, prog_name="tlab")
def tlab() -> None:
    """Finite-sample bounds and experiments for transductive confidence predictors."""


@tlab.command("bounds-curve")
@common_options
@channel_options
@click.option("--alpha", type=float, default=None, help="Significance level (0.1).")
@click.option("--delta", "delta_override", type=float, default=None, help="Slack of the exact converse (1/sqrt(n)).")
def bounds_curve(**kwargs: Any) -> None:
    """Per-sample converse, approximation, achievability and exact oracles over n."""
    _execute(ExperimentKind.BOUNDS_CURVE, **kwargs)


@tlab.command("alpha-sweep")
@common_options
@channel_options
@click.option("--alphas", callback=_float_list, default=None, help="Comma-separated levels (0.01,0.05,0.1,0.3).")
@click.option("--delta", "delta_override", type=float, default=None, help="Slack of the exact converse (1/sqrt(n)).")
def alpha_sweep(**kwargs: Any) -> None:
    """Per-sample converse curves for a grid of significance levels."""
    _execute(ExperimentKind.ALPHA_SWEEP, **kwargs)


@tlab.command("bonferroni")
@common_options
@channel_options
@click.option("--scores", "scores_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Score CSV with header p_0,...,p_{M-1},label used instead of the synthetic channel.")
@click.option("--alpha", type=float, default=None, help="Joint significance level (0.1).")
@click.option("--m-cal", type=click.IntRange(min=1), default=None, help="Calibration-set size (180).")
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Monte Carlo trials per n (500).")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker threads (1).")
@click.option("--delta", "delta_override", type=float, default=None, help="Slack of the exact converse (1/sqrt(n)).")
def bonferroni(**kwargs: Any) -> None:
    """Bonferroni transductive predictor against the converse bound."""
    _execute(ExperimentKind.BONFERRONI_COMPARE, **kwargs)


@tlab.command("gutman")
@common_options
@gutman_options
@click.option("--priors", callback=_float_list, default=None, help="Class priors (uniform).")
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Monte Carlo trials per n (10000).")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker threads (1).")
def gutman(**kwargs: Any) -> None:
    """Monte Carlo of Gutman's test with confidence."""
    _execute(ExperimentKind.GUTMAN_SIM, **kwargs)


@tlab.command("exponents")
@common_options
@gutman_options
@click.option("--instances", type=click.IntRange(min=0), default=None, help="Random binary instances (100).")
@click.option("--grid-points", type=click.IntRange(min=100), default=None, help="Grid oracle resolution (2001).")
@click.option("--alpha", type=float, default=None, help="Epsilon of the second-order lambda (0.1).")
def exponents(**kwargs: Any) -> None:
    """Large-deviation exponents: solver against grid oracle."""
    _execute(ExperimentKind.EXPONENT_TABLE, **kwargs)


@tlab.command("audit-thm1")
@common_options
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Random instances (1000).")
def audit_thm1(**kwargs: Any) -> None:
    """Exhaustive audit of the set-size inequality on small random instances."""
    _execute(ExperimentKind.THEOREM1_AUDIT, **kwargs)


if __name__ == "__main__":
    tlab()
