import functools
from pathlib import Path

import click
import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from multical.calib.audit import SATURATION_THRESHOLD, audit_saturation, check_theorem1, sample_complexity
from multical.calib.calibrators import (calibrate_lsboost, calibrate_mcboost, calibrate_multiaccurate,
                                        calibrate_ours)
from multical.calib.config import get_logger
from multical.calib.dataset import load_csv, write_csv
from multical.calib.discretize import make_grid, make_quantile
from multical.calib.errors import DataError, MulticalError
from multical.calib.file_utils import dump_json, write_frame, write_json
from multical.calib.metrics import DEFAULT_BINS, evaluate_predictor, group_summary
from multical.calib.model import (BoostConfig, CalibratorKind, DiscretizerKind, GroupBiasSpec, Solver,
                                  SquareLevConfig, TreeFamily, XorSpec)
from multical.calib.serialization import load_model, save_model, write_trace
from multical.calib.sweep import GRID_METHODS, TARGET_MS, default_grid, run_sweep, winners
from multical.calib.synthetic import gen_group_bias, gen_xor

logger = get_logger(__name__)

METHODS = click.Choice([k.value for k in CalibratorKind])
SCHEMES = click.Choice([k.value for k in DiscretizerKind])


class CliError(click.ClickException):
    """One line on stderr: error=<kind> message=<text>."""

    def __init__(self, message: str, kind: str = 'usage', exit_code: int = 2):
        super().__init__(message)
        self.kind = kind
        self.exit_code = exit_code

    def format_message(self) -> str:
        return f'error={self.kind} message={self.message}'

    def show(self, file=None):
        click.echo(self.format_message(), err=True)


def reports_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except MulticalError as e:
            raise CliError(str(e).replace('\n', ' '), e.kind, e.exit_code)
        except ValidationError as e:
            raise CliError(str(e).replace('\n', ' '), 'usage', 2)
    return wrapper


def boost_options(f):
    options = [
        click.option('--lr', 'learning_rate', type=float, default=0.1, show_default=True),
        click.option('--subsample', type=float, default=1.0, show_default=True),
        click.option('--max-trees', type=int, default=5000, show_default=True),
        click.option('--patience', type=int, default=50, show_default=True),
        click.option('--holdout', 'holdout_fraction', type=float, default=0.3, show_default=True),
        click.option('--min-leaf-count', type=int, default=1, show_default=True),
        click.option('--threshold-bins', type=int, default=256, show_default=True),
        click.option('--tree-family', type=click.Choice([t.value for t in TreeFamily]), default='pooled',
                     show_default=True),
        click.option('--seed', type=int, default=0, show_default=True),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _boost_config(learning_rate, subsample, max_trees, patience, holdout_fraction, min_leaf_count, threshold_bins,
                  tree_family, seed) -> BoostConfig:
    return BoostConfig(learning_rate=learning_rate, feature_subsample=subsample, max_trees=max_trees,
                       patience=patience, holdout_fraction=holdout_fraction, min_leaf_count=min_leaf_count,
                       threshold_bins=threshold_bins, tree_family=tree_family, seed=seed)


def _echo_json(obj):
    click.echo(dump_json(obj).decode())


def _sibling(path: str, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


@click.group()
@click.option('--env-file', '-e', type=str)
@click.pass_context
def cli(ctx, env_file):
    if env_file:
        load_dotenv(env_file)


@click.group(name='gen')
def cli_gen():
    """Write a synthetic dataset CSV."""


@click.command(name='xor')
@click.option('--gamma', type=float, required=True)
@click.option('--n', type=int, default=200000, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--base-constant', type=float, default=0.5, show_default=True)
@click.option('--stratified', is_flag=True, default=False)
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True)
@reports_errors
def cli_gen_xor(gamma, n, seed, base_constant, stratified, out):
    spec = XorSpec(gamma=gamma, n=n, seed=seed, base_constant=base_constant, stratified=stratified)
    ds, sidecar = gen_xor(spec)
    write_csv(ds, out)
    write_json({'spec': spec.dict(), **sidecar.dict()}, _sibling(out, '.sidecar.json'))
    _echo_json({'rows': ds.n, 'groups': group_summary(ds)})


@click.command(name='group-bias')
@click.option('--k', type=int, required=True)
@click.option('--n', type=int, default=50000, show_default=True)
@click.option('--bias', 'biases', type=float, multiple=True, default=[0.2], show_default=True)
@click.option('--noise-sd', type=float, default=0.1, show_default=True)
@click.option('--group-rate', type=float, default=0.125, show_default=True)
@click.option('--f0-low', type=float, default=0.0, show_default=True)
@click.option('--f0-high', type=float, default=1.0, show_default=True)
@click.option('--binary-labels', is_flag=True, default=False)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True)
@reports_errors
def cli_gen_group_bias(k, n, biases, noise_sd, group_rate, f0_low, f0_high, binary_labels, seed, out):
    spec = GroupBiasSpec(k=k, n=n, biases=list(biases), noise_sd=noise_sd, group_rate=group_rate, f0_low=f0_low,
                         f0_high=f0_high, binary_labels=binary_labels, seed=seed)
    try:
        spec.resolved_biases()
    except ValueError as e:
        raise CliError(str(e))
    ds = gen_group_bias(spec)
    write_csv(ds, out)
    write_json({'spec': spec.dict()}, _sibling(out, '.sidecar.json'))
    _echo_json({'rows': ds.n, 'groups': group_summary(ds)})


cli_gen.add_command(cli_gen_xor)
cli_gen.add_command(cli_gen_group_bias)


def _discretizer(scheme: str, m: int, scores):
    if scheme == DiscretizerKind.quantile.value:
        return make_quantile(m, scores)
    return make_grid(m)


@click.command(name='calibrate')
@click.argument('method', type=METHODS)
@click.option('--in', 'in_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--m', type=int, default=None)
@click.option('--scheme', type=SCHEMES, default='grid', show_default=True)
@boost_options
@click.option('--solver', type=click.Choice([s.value for s in Solver]), default='greedy', show_default=True)
@click.option('--rho', type=float, default=0.0, show_default=True)
@click.option('--t-max', type=int, default=1000, show_default=True)
@click.option('--depth', type=click.IntRange(1, 2), default=2, show_default=True)
@click.option('--max-rounds', type=int, default=1000, show_default=True)
@click.option('--lam', type=float, default=0.0, show_default=True)
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True)
@click.option('--trace', 'trace_path', type=click.Path(dir_okay=False), default=None)
@reports_errors
def cli_calibrate(method, in_path, m, scheme, learning_rate, subsample, max_trees, patience, holdout_fraction,
                  min_leaf_count, threshold_bins, tree_family, seed, solver, rho, t_max, depth, max_rounds, lam,
                  out, trace_path):
    kind = CalibratorKind(method)
    if kind in GRID_METHODS and m is None:
        raise CliError(f'{method} needs --m')
    if kind not in GRID_METHODS and m is not None:
        raise CliError(f'{method} is discretization-free; --m is not accepted')
    ds = load_csv(in_path)
    if kind == CalibratorKind.ours:
        if solver == Solver.squarelev.value:
            cfg = SquareLevConfig(rho=rho, t_max=t_max, min_leaf_count=min_leaf_count, threshold_bins=threshold_bins,
                                  tree_family=tree_family, seed=seed)
        else:
            cfg = _boost_config(learning_rate, subsample, max_trees, patience, holdout_fraction, min_leaf_count,
                                threshold_bins, tree_family, seed)
        model = calibrate_ours(ds, cfg)
    elif kind == CalibratorKind.mcboost:
        model = calibrate_mcboost(ds, _discretizer(scheme, m, ds.base_scores), holdout_fraction, max_rounds, seed)
    elif kind == CalibratorKind.lsboost:
        model = calibrate_lsboost(ds, _discretizer(scheme, m, ds.base_scores), depth, learning_rate, subsample,
                                  max_rounds, seed, min_leaf_count, holdout_fraction)
    else:
        model = calibrate_multiaccurate(ds, lam)
    save_model(model, out)
    summary = {'kind': kind.value, 'model': out, 'config': model.config}
    if model.trace is not None:
        trace_path = trace_path or _sibling(out, '.trace.jsonl')
        write_trace(model.trace, trace_path)
        summary.update({'trace': str(trace_path), 'stop_reason': model.trace.stop_reason.value,
                        'iterations': model.trace.best_iteration})
    _echo_json(summary)


@click.command(name='evaluate')
@click.option('--model', 'model_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='omit to evaluate the base scores f0')
@click.option('--in', 'in_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--m', 'ms', type=int, multiple=True, default=TARGET_MS, show_default=True)
@click.option('--bins', type=click.IntRange(min=1), default=DEFAULT_BINS, show_default=True)
@click.option('--scheme', type=SCHEMES, default='grid', show_default=True)
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True)
@click.option('--json', 'json_path', type=click.Path(dir_okay=False), default=None)
@reports_errors
def cli_evaluate(model_path, in_path, ms, bins, scheme, out, json_path):
    ds = load_csv(in_path)
    if model_path is None:
        method, pred, native, config = 'uncalibrated', ds.base_scores, None, {}
    else:
        model = load_model(model_path)
        if model.num_groups != ds.k:
            raise DataError(f'model has {model.num_groups} groups but {in_path} has {ds.k}')
        method, config = model.kind.value, model.config
        pred = model.predict(ds.base_scores, ds.groups)
        native = model.discretizer.m if model.kind in GRID_METHODS else None

    if native is not None:
        others = sorted(set(ms) - {native})
        if others:
            logger.warning(f'{method} model is only evaluated at its native m={native}; ignoring m={others}')
        reports = [evaluate_predictor(method, ds, pred, None, bins, m=native)]
    else:
        reports = [evaluate_predictor(method, ds, pred, _discretizer(scheme, m, pred), bins) for m in sorted(set(ms))]
    reports.sort(key=lambda r: (r.method, r.m))
    write_frame(pd.DataFrame([r.csv_row() for r in reports]), out)
    if json_path:
        write_json({'model': model_path, 'data': in_path, 'scheme': scheme, 'config': config,
                    'reports': [r.dict() for r in reports]}, json_path)
    for r in reports:
        click.echo(f'{r.method} m={r.m} range={r.nonempty_range} mc_error={r.mc_error:.6f} '
                   f'squared_loss={r.squared_loss:.6f} epsilon_round={r.epsilon_round:.3g}')


@click.command(name='audit')
@click.option('--cal', 'cal_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--test', 'test_path', type=click.Path(exists=True, dir_okay=False), required=True)
@boost_options
@click.option('--m', type=int, default=20, show_default=True)
@click.option('--scheme', type=SCHEMES, default='grid', show_default=True)
@click.option('--threshold', type=float, default=SATURATION_THRESHOLD, show_default=True)
@click.option('--out', '-o', type=click.Path(dir_okay=False), default=None)
@reports_errors
def cli_audit(cal_path, test_path, learning_rate, subsample, max_trees, patience, holdout_fraction, min_leaf_count,
              threshold_bins, tree_family, seed, m, scheme, threshold, out):
    ds_cal = load_csv(cal_path)
    ds_test = load_csv(test_path)
    ds_cal.check_compatible(ds_test)
    cfg = _boost_config(learning_rate, subsample, max_trees, patience, holdout_fraction, min_leaf_count,
                        threshold_bins, tree_family, seed)
    model = calibrate_ours(ds_cal, cfg)
    saturation = audit_saturation(ds_cal, ds_test, cfg, threshold, model=model)
    pred = model.predict(ds_test.base_scores, ds_test.groups)
    bound = check_theorem1(ds_test, model, _discretizer(scheme, m, pred), saturation)
    if out:
        write_json({'config': cfg.dict(), 'm': m, 'scheme': scheme, 'saturation': saturation.dict(),
                    'bound': bound.dict()}, out)
    click.echo('loss_f0\tloss_fcal\tloss_second_pass\tepsilon_hat_loss\tpasses\tmc_error\tbound\tsatisfied')
    click.echo(f'{saturation.loss_f0:.6g}\t{saturation.loss_fcal:.6g}\t{saturation.loss_second_pass:.6g}\t'
               f'{saturation.epsilon_hat_loss:.3g}\t{saturation.passes}\t{bound.mc_error:.6g}\t'
               f'{bound.bound + bound.slack:.6g}\t{bound.satisfied}')


@click.command(name='sweep')
@click.argument('method', type=METHODS)
@click.option('--in', 'in_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--m', 'ms', type=int, multiple=True, help='target m for mcboost/lsboost; repeatable')
@click.option('--folds', type=click.IntRange(min=1), default=10, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--lr', 'learning_rates', type=float, multiple=True)
@click.option('--subsample', 'subsamples', type=float, multiple=True)
@click.option('--depth', 'depths', type=click.IntRange(1, 2), multiple=True)
@click.option('--holdout', 'holdout_fractions', type=float, multiple=True)
@click.option('--lam', 'lambdas', type=float, multiple=True)
@click.option('--max-trees', type=int, default=5000, show_default=True)
@click.option('--patience', type=int, default=50, show_default=True)
@click.option('--threads', type=int, default=None, help='defaults to MULTICAL_THREADS')
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True)
@click.option('--best', 'best_path', type=click.Path(dir_okay=False), default=None)
@reports_errors
def cli_sweep(method, in_path, ms, folds, seed, learning_rates, subsamples, depths, holdout_fractions, lambdas,
              max_trees, patience, threads, out, best_path):
    kind = CalibratorKind(method)
    if kind not in GRID_METHODS and ms:
        raise CliError(f'{method} is tuned on squared loss; --m is not accepted')
    grid = default_grid(kind, list(ms) or None, folds, seed)
    overrides = {'learning_rates': learning_rates, 'subsamples': subsamples, 'depths': depths,
                 'holdout_fractions': holdout_fractions, 'lambdas': lambdas}
    grid = grid.copy(update={k: list(v) for k, v in overrides.items() if v})
    ds = load_csv(in_path)
    df = run_sweep(ds, grid, BoostConfig(max_trees=max_trees, patience=patience, seed=seed), threads)
    write_frame(df, out)
    best = winners(df, grid)
    write_json(best, best_path or _sibling(out, '.best.json'))
    _echo_json(best['winners'])


@click.command(name='complexity')
@click.option('--alpha', type=float, required=True)
@click.option('--epsilon-min', type=float, required=True)
@click.option('--groups', 'num_groups', type=int, required=True)
@click.option('--delta', type=float, default=0.05, show_default=True)
@reports_errors
def cli_complexity(alpha, epsilon_min, num_groups, delta):
    _echo_json(sample_complexity(alpha, epsilon_min, num_groups, delta).dict())


cli.add_command(cli_gen)
cli.add_command(cli_calibrate)
cli.add_command(cli_evaluate)
cli.add_command(cli_audit)
cli.add_command(cli_sweep)
cli.add_command(cli_complexity)


def main():
    cli()


if __name__ == '__main__':
    main()
