"""Command-line interface.

Options can also come from a YAML file given with `--config`: top-level keys
are command names (nested for `report`), values map option names (with
underscores) to values. Flags on the command line win over the file.
"""

from __future__ import annotations
from dataclasses import asdict
from functools import wraps
from pathlib import Path
from typing import Any, Callable, TypeVar
import logging
import click
import numpy as np
from rbacmine.errors import FormatError
from rbacmine.evaluation import Fitter, SplitSpec, calibration_curve, cross_validate_k, noise_curve, \
    run_protocol
from rbacmine.formats import RbacConfigDocument, read_attributes, read_matrix, read_yaml, \
    write_attributes, write_config, write_csv, write_matrix, write_yaml
from rbacmine.matrix import BinaryMatrix, hamming
from rbacmine.relevance import attribute_relevance, relevance_histogram
from rbacmine.synth import SyntheticDataset, gen_ddm_data, gen_mac_data, role_aligned_attributes
from rbacmine.model.ddm import DdmConfig, ddm_fitter, fit_ddm
from rbacmine.model.hybrid import HybridConfig, fit_hybrid, lambda_sweep
from rbacmine.model.mac import MacFitConfig, fit_mac, mac_fitter, posterior_cell_confidence

__all__ = ('cli', 'main', 'PARSE_ERROR', 'VALIDATION_ERROR', 'NOT_CONVERGED',)

logger = logging.getLogger(__name__)

PARSE_ERROR = 3
VALIDATION_ERROR = 4
NOT_CONVERGED = 5

F = TypeVar('F', bound=Callable[..., Any])

_PATH = click.Path(path_type=Path)
_EXISTING = click.Path(exists=True, dir_okay=False, path_type=Path)


def _exit_codes(func: F) -> F:
    """Report library errors on stderr and exit with their status code."""

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except FormatError as e:
            click.echo(f'error: {e}', err=True)
            raise click.exceptions.Exit(PARSE_ERROR) from None
        except (ValueError, OSError) as e:
            click.echo(f'error: {e}', err=True)
            raise click.exceptions.Exit(VALIDATION_ERROR) from None

    return wrapper  # type: ignore[return-value]


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise click.BadParameter(f'{text!r} is not a comma-separated list of numbers.') from None


def _parse_range(text: str) -> list[int]:
    """`a..b` inclusive, or a comma-separated list."""

    try:
        if '..' in text:
            lo, hi = (int(v) for v in text.split('..', 1))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise click.BadParameter(f'{text!r} is neither "a..b" nor a list of integers.') from None


def _mac_options(func: F) -> F:
    options = [
        click.option('--roles', '-k', type=int, default=10, show_default=True, help='Number of roles.'),
        click.option('--max-set-size', type=int, default=2, show_default=True,
                     help='Largest number of roles per user.'),
        click.option('--temperature-factor', type=float, default=1.0, show_default=True),
        click.option('--cooling-rate', type=float, default=0.95, show_default=True),
        click.option('--max-iterations', type=int, default=1000, show_default=True),
        click.option('--restarts', type=int, default=1, show_default=True),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _ddm_options(func: F) -> F:
    options = [
        click.option('--alpha', type=float, default=1.0, show_default=True,
                     help='Dirichlet-process concentration.'),
        click.option('--beta-prior', type=float, default=0.5, show_default=True,
                     help='Symmetric Beta prior strength.'),
        click.option('--max-alternations', type=int, default=200, show_default=True),
        click.option('--chains', type=int, default=1, show_default=True),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _split_options(func: F) -> F:
    options = [
        click.option('--train-fraction', type=float, default=0.8, show_default=True),
        click.option('--repetitions', type=int, default=5, show_default=True),
        click.option('--workers', type=int, default=1, show_default=True,
                     help='Folds evaluated in parallel.'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _mac_config(opts: dict[str, Any], seed: int | None) -> MacFitConfig:
    return MacFitConfig(num_roles=opts['roles'], max_set_size=opts['max_set_size'],
                        temperature_factor=opts['temperature_factor'],
                        cooling_rate=opts['cooling_rate'], max_iterations=opts['max_iterations'],
                        restarts=opts['restarts'], seed=seed)


def _ddm_config(opts: dict[str, Any], seed: int | None) -> DdmConfig:
    return DdmConfig(alpha=opts['alpha'], beta_prior_strength=opts['beta_prior'],
                     max_alternations=opts['max_alternations'], chains=opts['chains'], seed=seed)


def _fitter(model: str, opts: dict[str, Any], seed: int | None) -> Fitter:
    if model == 'ddm':
        return ddm_fitter(_ddm_config(opts, seed))
    if model == 'mac':
        return mac_fitter(_mac_config(opts, seed))
    raise click.UsageError(f'Model {model!r} cannot be cross-validated on the matrix alone.')


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.option('--config', 'config_file', type=_EXISTING, default=None,
              help='YAML file with option defaults per command.')
@click.option('--verbose', '-v', count=True, help='-v for progress, -vv for details.')
@click.version_option(package_name='rbacmine')
@click.pass_context
def cli(ctx: click.Context, config_file: Path | None, verbose: int) -> None:
    """Mine role-based access control configurations from user-permission data."""

    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    logging.captureWarnings(True)
    if config_file is not None:
        try:
            ctx.default_map = read_yaml(config_file)
        except FormatError as e:
            click.echo(f'error: {e}', err=True)
            raise click.exceptions.Exit(PARSE_ERROR) from None


@cli.command()
@click.option('--kind', type=click.Choice(['mac', 'ddm']), default='mac', show_default=True)
@click.option('--users', type=int, default=400, show_default=True)
@click.option('--perms', type=int, default=50, show_default=True)
@click.option('--roles', type=int, default=10, show_default=True)
@click.option('--max-roles', type=int, default=2, show_default=True,
              help='Most roles per user (mac).')
@click.option('--density', type=float, default=0.3, show_default=True,
              help='Permission density of a role (mac).')
@click.option('--alpha', type=float, default=1.0, show_default=True, help='Concentration (ddm).')
@click.option('--beta-prior', type=float, default=0.5, show_default=True,
              help='Beta prior strength (ddm).')
@click.option('--noise', type=float, default=0.0, show_default=True,
              help='Fraction of cells replaced by coin flips.')
@click.option('--layout', type=click.Choice(['dense', 'sparse']), default='dense', show_default=True)
@click.option('--attributes/--no-attributes', default=False,
              help='Also write role-aligned and distractor attributes.')
@click.option('--seed', type=int, default=None)
@click.option('--out', 'out_dir', type=_PATH, required=True, help='Output directory.')
@_exit_codes
def generate(kind: str, users: int, perms: int, roles: int, max_roles: int, density: float,
             alpha: float, beta_prior: float, noise: float, layout: str, attributes: bool,
             seed: int | None, out_dir: Path) -> None:
    """Generate a synthetic dataset with its ground truth."""

    dataset: SyntheticDataset
    if kind == 'mac':
        dataset = gen_mac_data(users, perms, roles, max_roles, noise, seed, density)
    else:
        dataset = gen_ddm_data(users, perms, alpha, beta_prior, seed, noise)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {'observed': 'observed.txt', 'clean': 'clean.txt', 'truth': 'truth.yaml'}
    write_matrix(out_dir / files['observed'], dataset.x_observed, layout)  # type: ignore[arg-type]
    write_matrix(out_dir / files['clean'], dataset.x_clean, layout)  # type: ignore[arg-type]
    write_config(out_dir / files['truth'], RbacConfigDocument(f'truth-{kind}', dataset.truth))
    if attributes:
        files['attributes'] = 'attributes.csv'
        tables = role_aligned_attributes(dataset, seed=seed)
        write_attributes(out_dir / files['attributes'], tables.values())
    write_yaml(out_dir / 'manifest.yaml', {
        'generator': kind,
        'parameters': {'users': users, 'perms': perms, 'roles': roles, 'max_roles': max_roles,
                       'density': density, 'alpha': alpha, 'beta_prior': beta_prior,
                       'noise': noise, 'layout': layout, 'seed': seed},
        'noise_cells': int(dataset.noise_cells.size),
        'files': files,
    })
    click.echo(f'wrote {len(files) + 1} files to {out_dir}')


def _diagnostics_dict(diagnostics: Any) -> dict[str, Any]:
    data = asdict(diagnostics)
    data.pop('fit_config', None)
    data.pop('trace', None)
    if isinstance(data.get('mac'), dict):
        data['mac'].pop('fit_config', None)
    return data


@cli.command()
@click.argument('matrix', type=_EXISTING)
@click.option('--model', type=click.Choice(['mac', 'ddm', 'hybrid']), default='mac', show_default=True)
@_mac_options
@_ddm_options
@click.option('--attributes', 'attributes_file', type=_EXISTING, default=None,
              help='Attribute file (hybrid).')
@click.option('--kind', default=None, help='Attribute kind to use (hybrid); the only one by default.')
@click.option('--lam', type=float, default=0.0, show_default=True, help='Business weight (hybrid).')
@click.option('--min-count', type=int, default=10, show_default=True,
              help='Ignore attribute values with fewer users (hybrid).')
@click.option('--sweep-k', default=None, help='Choose the number of roles by cross-validation, e.g. 2..10.')
@click.option('--sweep-out', type=_PATH, default=None, help='CSV with the per-k errors.')
@_split_options
@click.option('--seed', type=int, default=None)
@click.option('--out', type=_PATH, required=True, help='Mined configuration (YAML).')
@_exit_codes
def mine(matrix: Path, model: str, attributes_file: Path | None, kind: str | None, lam: float,
         min_count: int, sweep_k: str | None, sweep_out: Path | None, train_fraction: float,
         repetitions: int, workers: int, seed: int | None, out: Path, **opts: Any) -> None:
    """Mine an RBAC configuration from a user-permission matrix."""

    x = read_matrix(matrix)
    if sweep_k is not None:
        spec = SplitSpec(train_fraction, seed, repetitions)
        sweep = cross_validate_k(x, _parse_range(sweep_k), _fitter('mac' if model == 'hybrid' else model,
                                                                 opts, seed), spec, workers)
        if sweep_out is not None:
            write_csv(sweep_out, ('k', 'median', 'p25', 'p75', 'failed'), sweep.rows())
        click.echo(f'selected k = {sweep.selected_k}')
        opts['roles'] = sweep.selected_k

    converged = True
    if model == 'ddm':
        ddm = fit_ddm(x, _ddm_config(opts, seed))
        rec = ddm.rbac.reconstruct()
        diagnostics = _diagnostics_dict(ddm.diagnostics)
        parameters: dict[str, Any] = {'alpha': opts['alpha'], 'beta_prior_strength': opts['beta_prior']}
        document = RbacConfigDocument('ddm', ddm.rbac, parameters, diagnostics)
        click.echo(f'{ddm.diagnostics.num_business_roles} business roles, '
                   f'{ddm.diagnostics.num_technical_roles} technical roles')
    else:
        config = _mac_config(opts, seed)
        if model == 'hybrid':
            if attributes_file is None:
                raise click.UsageError('Hybrid mining needs --attributes.')
            tables = read_attributes(attributes_file, x.rows)
            if kind is None:
                if len(tables) != 1:
                    raise click.UsageError(f'Choose --kind among {sorted(tables)}.')
                kind = next(iter(tables))
            if kind not in tables:
                raise click.UsageError(f'No attribute kind {kind!r} in {attributes_file}.')
            fit = fit_hybrid(x, tables[kind], HybridConfig(config, lam, kind, min_count))
            converged = fit.diagnostics.converged
        else:
            fit = fit_mac(x, config)  # type: ignore[assignment]
            converged = fit.diagnostics.converged
        rec = fit.rbac.reconstruct()
        diagnostics = _diagnostics_dict(fit.diagnostics)
        parameters = {'beta': fit.params.beta, 'eps': fit.params.eps, 'r': fit.params.r}
        if model == 'hybrid':
            parameters.update(lam=lam, kind=kind, min_count=min_count)
        document = RbacConfigDocument(model, fit.rbac, parameters, diagnostics)
    document.diagnostics['reconstruction_error'] = hamming(rec, x) / x.size
    document.diagnostics['seed'] = seed
    write_config(out, document)
    click.echo(f'reconstruction error {document.diagnostics["reconstruction_error"]:.4%}')
    if not converged:
        click.echo('warning: annealing did not converge, best state written', err=True)
        raise click.exceptions.Exit(NOT_CONVERGED)


@cli.command()
@click.argument('matrix', type=_EXISTING)
@click.option('--model', type=click.Choice(['mac', 'ddm']), default='mac', show_default=True)
@_mac_options
@_ddm_options
@click.option('--sweep-k', default=None, help='Select k inside every repetition, e.g. 2..10.')
@click.option('--clean', 'clean_file', type=_EXISTING, default=None,
              help='Ground truth for an error breakdown.')
@_split_options
@click.option('--seed', type=int, default=None)
@click.option('--out', type=_PATH, required=True, help='CSV report.')
@_exit_codes
def evaluate(matrix: Path, model: str, sweep_k: str | None, clean_file: Path | None,
             train_fraction: float, repetitions: int, workers: int, seed: int | None, out: Path,
             **opts: Any) -> None:
    """Estimate the generalization error by repeated hold-out."""

    x = read_matrix(matrix)
    clean = read_matrix(clean_file) if clean_file is not None else None
    spec = SplitSpec(train_fraction, seed, repetitions)
    fit = _fitter(model, opts, seed)
    if sweep_k is not None:
        report = run_protocol(x, fit, spec, k_candidates=_parse_range(sweep_k), x_clean=clean,
                              workers=workers)
    else:
        report = run_protocol(x, fit, spec, k=opts['roles'], x_clean=clean, workers=workers)
    _write_report(out, report, clean is not None)
    click.echo(f'median generalization error {report.median:.4%} '
               f'(25%: {report.p25:.4%}, 75%: {report.p75:.4%})')


def _write_report(out: Path, report: Any, breakdown: bool) -> None:
    header = ['repetition', 'k', 'train_error', 'gen_error']
    if breakdown:
        header += ['new_fp', 'new_fn', 'repeated_fp', 'repeated_fn']
    rows: list[list[Any]] = []
    parts = iter(report.breakdowns)
    for fold in report.folds:
        row: list[Any] = [fold.repetition, fold.k, fold.train_error, fold.gen_error]
        if breakdown:
            b = None if fold.failed else next(parts)
            row += ['', '', '', ''] if b is None else [b.new_false_positive, b.new_false_negative,
                                                        b.repeated_false_positive,
                                                        b.repeated_false_negative]
        rows.append(row)
    padding = [''] * (len(header) - 4)
    rows += [[name, '', '', value, *padding]
             for name, value in (('median', report.median), ('p25', report.p25), ('p75', report.p75))]
    write_csv(out, header, rows)


@cli.command()
@click.argument('matrix', type=_EXISTING)
@click.argument('attributes_file', metavar='ATTRIBUTES', type=_EXISTING)
@click.option('--min-count', type=int, default=10, show_default=True)
@click.option('--bins', type=int, default=10, show_default=True)
@click.option('--seed', type=int, default=None, help='Unused; accepted for uniformity.')
@click.option('--out', 'out_dir', type=_PATH, required=True, help='Output directory.')
@_exit_codes
def relevance(matrix: Path, attributes_file: Path, min_count: int, bins: int,
              seed: int | None, out_dir: Path) -> None:  # pylint: disable=unused-argument
    """Relative mutual information between permissions and attributes."""

    x = read_matrix(matrix)
    tables = read_attributes(attributes_file, x.rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for kind, table in tables.items():
        report = attribute_relevance(x, table, min_count)
        write_csv(out_dir / f'relevance_{kind}.csv', ('permission', 'entropy', 'conditional_entropy',
                                                     'mutual_information', 'relevance'),
                  zip(range(1, x.cols + 1), report.entropy, report.conditional_entropy,
                      report.mutual_information, report.relevance))
        write_csv(out_dir / f'histogram_{kind}.csv', ('lower', 'upper', 'count'),
                  relevance_histogram(report, bins) if report.sufficient else [])
        summary.append((kind, report.mean_relevance, report.users_used, report.values_used))
        click.echo(f'{kind}: mean relevance {report.mean_relevance:.4f}')
    write_csv(out_dir / 'summary.csv', ('kind', 'mean_relevance', 'users_used', 'values_used'), summary)


@cli.command()
@click.argument('matrix', type=_EXISTING)
@_mac_options
@click.option('--clean', 'clean_file', type=_EXISTING, default=None,
              help='Ground truth for a calibration table.')
@click.option('--bins', type=int, default=10, show_default=True)
@click.option('--seed', type=int, default=None)
@click.option('--out', 'out_dir', type=_PATH, required=True, help='Output directory.')
@_exit_codes
def confidence(matrix: Path, clean_file: Path | None, bins: int, seed: int | None,
               out_dir: Path, **opts: Any) -> None:
    """Per-cell posterior confidence of a MAC reconstruction."""

    x = read_matrix(matrix)
    fit = fit_mac(x, _mac_config(opts, seed))
    conf = posterior_cell_confidence(x, fit.rbac, fit.params, fit.responsibilities, fit.catalog)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / 'confidence.csv', [f'p{d + 1}' for d in range(x.cols)],
              np.round(conf, 12))
    write_matrix(out_dir / 'reconstruction.txt', fit.rbac.reconstruct())
    if clean_file is not None:
        table = calibration_curve(conf, fit.rbac.reconstruct(), read_matrix(clean_file), bins)
        write_csv(out_dir / 'calibration.csv', ('bin', 'confidence', 'error_rate', 'count'),
                  [(b.center, b.mean_confidence, b.error_rate, b.count) for b in table])
    click.echo(f'mean confidence {float(np.mean(conf)):.4f}')


@cli.group()
def report() -> None:
    """Experiment drivers producing CSV tables."""


@report.command('noise-curve')
@click.option('--kind', type=click.Choice(['mac', 'ddm']), default='mac', show_default=True,
              help='Generator and fitter.')
@click.option('--noises', default='0,0.1,0.2,0.3', show_default=True)
@click.option('--seeds', type=int, default=10, show_default=True, help='Datasets per noise level.')
@click.option('--users', type=int, default=400, show_default=True)
@click.option('--perms', type=int, default=50, show_default=True)
@_mac_options
@_ddm_options
@click.option('--seed', type=int, default=0, show_default=True, help='First dataset seed.')
@click.option('--out', type=_PATH, required=True)
@_exit_codes
def noise_curve_cmd(kind: str, noises: str, seeds: int, users: int, perms: int, seed: int,
                    out: Path, **opts: Any) -> None:
    """Generalization error against noise on synthetic data."""

    def generate(noise: float, data_seed: int) -> BinaryMatrix:
        if kind == 'mac':
            return gen_mac_data(users, perms, opts['roles'], opts['max_set_size'], noise,
                                data_seed).x_observed
        return gen_ddm_data(users, perms, opts['alpha'], opts['beta_prior'], data_seed,
                            noise).x_observed

    points = noise_curve(_parse_floats(noises), list(range(seed, seed + seeds)), generate,
                         _fitter(kind, opts, seed), opts['roles'])
    write_csv(out, ('noise', 'median', 'p25', 'p75'), [(p.noise, p.median, p.p25, p.p75) for p in points])
    for p in points:
        click.echo(f'noise {p.noise:.2f}: median {p.median:.4%}')


@report.command('lambda-sweep')
@click.argument('matrix', type=_EXISTING)
@click.argument('attributes_file', metavar='ATTRIBUTES', type=_EXISTING)
@click.option('--kind', default=None, help='Attribute kind; the only one by default.')
@click.option('--lambdas', default='0,0.1,1,10', show_default=True)
@click.option('--min-count', type=int, default=10, show_default=True)
@_mac_options
@_split_options
@click.option('--seed', type=int, default=None)
@click.option('--out', type=_PATH, required=True)
@_exit_codes
def lambda_sweep_cmd(matrix: Path, attributes_file: Path, kind: str | None, lambdas: str,
                     min_count: int, train_fraction: float, repetitions: int, workers: int,
                     seed: int | None, out: Path, **opts: Any) -> None:
    """Generalization error and role entropy against the business weight."""

    x = read_matrix(matrix)
    tables = read_attributes(attributes_file, x.rows)
    kind = kind or (next(iter(tables)) if len(tables) == 1 else None)
    if kind is None or kind not in tables:
        raise click.UsageError(f'Choose --kind among {sorted(tables)}.')
    sweep = lambda_sweep(x, tables[kind], HybridConfig(_mac_config(opts, seed), 0.0, kind, min_count),
                         _parse_floats(lambdas), SplitSpec(train_fraction, seed, repetitions), workers)
    write_csv(out, ('lam', 'gen_error', 'role_entropy', 'knee'),
              [(p.lam, p.gen_error, p.role_entropy, int(i == sweep.knee))
               for i, p in enumerate(sweep.points)])
    click.echo(f'knee at lam = {sweep.knee_point.lam:g}')


@report.command('real-data')
@click.argument('matrix', type=_EXISTING)
@click.option('--model', type=click.Choice(['mac', 'ddm']), default='mac', show_default=True)
@click.option('--sweep-k', default='2..20', show_default=True)
@_mac_options
@_ddm_options
@_split_options
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', type=_PATH, required=True)
@_exit_codes
def real_data_cmd(matrix: Path, model: str, sweep_k: str, train_fraction: float, repetitions: int,
                  workers: int, seed: int, out: Path, **opts: Any) -> None:
    """Full protocol on a real matrix: split, select k on the training part, refit, score."""

    x = read_matrix(matrix)
    report_ = run_protocol(x, _fitter(model, opts, seed), SplitSpec(train_fraction, seed, repetitions),
                           k_candidates=_parse_range(sweep_k), workers=workers)
    _write_report(out, report_, False)
    chosen = sorted({f.k for f in report_.folds})
    click.echo(f'{x.rows} users x {x.cols} permissions: k in {chosen}, '
               f'median generalization error {report_.median:.2%}')


def main() -> None:
    cli(prog_name='rbacmine')  # pylint: disable=no-value-for-parameter
