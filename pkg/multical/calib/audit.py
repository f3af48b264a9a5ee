import math

import numpy as np

from multical.calib.calibrators import CalibratedModel, calibrate_ours
from multical.calib.config import get_logger
from multical.calib.dataset import CalibrationDataset
from multical.calib.discretize import Discretizer, discretization_error
from multical.calib.errors import ConfigError
from multical.calib.metrics import multicalibration_error, squared_loss
from multical.calib.model import BoostConfig, BoundCheck, CalibratorKind, SampleComplexity, SaturationReport
from multical.calib.oracle import optimal_patch_loss

logger = get_logger(__name__)

SATURATION_THRESHOLD = 1e-3
DEFAULT_DELTA = 0.05


def audit_saturation(ds_cal: CalibrationDataset, ds_test: CalibrationDataset, cfg: BoostConfig = None,
                     threshold: float = SATURATION_THRESHOLD, model: CalibratedModel = None) -> SaturationReport:
    """Test-set loss gained by running the calibrator a second time on its own output.

    The second pass is fit on the calibration rows with f_cal as the base score and evaluated on
    the test rows with f_cal's test outputs as the base.
    """
    ds_cal.check_compatible(ds_test)
    cfg = cfg or BoostConfig()
    if model is None:
        model = calibrate_ours(ds_cal, cfg)
    cal_pred = model.predict(ds_cal.base_scores, ds_cal.groups)
    test_pred = model.predict(ds_test.base_scores, ds_test.groups)
    second = calibrate_ours(ds_cal.with_base_scores(cal_pred), cfg)
    second_pred = second.predict(test_pred, ds_test.groups)

    loss_fcal = squared_loss(test_pred, ds_test.labels)
    loss_second = squared_loss(second_pred, ds_test.labels)
    epsilon_hat = loss_fcal - loss_second
    if epsilon_hat < 0:
        logger.info(f'second pass raised test loss by {-epsilon_hat:.3g}')
    return SaturationReport(loss_f0=squared_loss(ds_test.base_scores, ds_test.labels), loss_fcal=loss_fcal,
                            loss_second_pass=loss_second, epsilon_hat_loss=epsilon_hat, threshold=threshold,
                            passes=abs(epsilon_hat) < threshold)


def finite_sample_slack(n: int, k: int, delta: float = DEFAULT_DELTA) -> float:
    return 2.0 * math.sqrt(math.log(2 * k / delta) / (2 * n))


def check_theorem1(ds_test: CalibrationDataset, model: CalibratedModel, d: Discretizer,
                   saturation: SaturationReport, delta: float = DEFAULT_DELTA) -> BoundCheck:
    """Is mc_error(d(f_cal)) <= sqrt(max(0, eps_loss) + max(0, eps_round)) + slack on the test rows?"""
    if model.kind != CalibratorKind.ours:
        raise ConfigError(f'bound check needs a continuous model, got {model.kind.value}')
    pred = model.predict(ds_test.base_scores, ds_test.groups)
    mc_error, _ = multicalibration_error(d.apply(pred), ds_test.groups, ds_test.labels)
    epsilon_round = discretization_error(ds_test, pred, d)
    bound = math.sqrt(max(0.0, saturation.epsilon_hat_loss) + max(0.0, epsilon_round))
    slack = finite_sample_slack(ds_test.n, ds_test.k, delta)
    return BoundCheck(m=d.m, mc_error=mc_error, epsilon_hat_loss=saturation.epsilon_hat_loss,
                      epsilon_round=epsilon_round, bound=bound, slack=slack, delta=delta,
                      satisfied=mc_error <= bound + slack)


def sample_complexity(alpha: float, epsilon_min: float, num_groups: int, delta: float) -> SampleComplexity:
    """Tree count and sample size from the asymptotic rates with every hidden constant set to 1."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f'alpha must be in (0, 1), got {alpha}')
    if not 0.0 < epsilon_min <= 1.0:
        raise ConfigError(f'epsilon_min must be in (0, 1], got {epsilon_min}')
    if not 0.0 < delta < 1.0:
        raise ConfigError(f'delta must be in (0, 1), got {delta}')
    if num_groups < 1:
        raise ConfigError(f'num_groups must be >= 1, got {num_groups}')
    log_inv_alpha = math.log(1.0 / alpha)
    num_trees = math.ceil(2.0 * log_inv_alpha / epsilon_min ** 2)
    n = (alpha ** -4 * epsilon_min ** -4 * math.log(num_groups) * log_inv_alpha ** 2
         + alpha ** -4 * math.log(1.0 / delta))
    return SampleComplexity(num_trees=num_trees, sample_size=math.ceil(n))


def bound_excess_opt(ds: CalibrationDataset, fcal_pred) -> float:
    """Loss left on the table by f_cal relative to the best affine-in-g patch of its own level sets."""
    fcal_pred = np.asarray(fcal_pred, dtype=float)
    best, _ = optimal_patch_loss(ds, fcal_pred)
    return squared_loss(fcal_pred, ds.labels) - best
