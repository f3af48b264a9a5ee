from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Extra, Field, conint, validator

# numpy seeds are unsigned 64-bit
Seed = conint(ge=0, le=2 ** 64 - 1)


class CalibratorKind(str, Enum):
    ours = "ours"
    mcboost = "mcboost"
    lsboost = "lsboost"
    multiaccurate = "multiaccurate"


class DiscretizerKind(str, Enum):
    grid = "grid"
    quantile = "quantile"


class PredicateKind(str, Enum):
    threshold = "threshold"
    group = "group"


class TreeFamily(str, Enum):
    pooled = "pooled"
    level_group = "level_group"


class Solver(str, Enum):
    greedy = "greedy"
    squarelev = "squarelev"


class StopReason(str, Enum):
    MAX_TREES = "max trees"
    EARLY_STOPPING = "early stopping"
    CONVERGED = "converged"
    ZERO_VARIANCE = "zero variance"
    ZERO_EDGE = "zero edge"
    EDGE_FLOOR = "edge below floor"
    VARIANCE_FLOOR = "variance floor"
    T_MAX = "t max"
    MAX_ROUNDS = "max rounds"
    NO_IMPROVING_CELL = "no improving cell"


class SplitSpec(BaseModel, extra=Extra.forbid):
    seed: Seed = 0
    holdout_fraction: float = Field(0.3, ge=0.0, lt=1.0)


class BoostConfig(BaseModel, extra=Extra.forbid):
    learning_rate: float = Field(0.1, gt=0.0)
    max_trees: int = Field(5000, ge=1)
    patience: int = Field(50, ge=1)
    holdout_fraction: float = Field(0.3, ge=0.0, lt=1.0)
    feature_subsample: float = Field(1.0, gt=0.0, le=1.0)
    min_leaf_count: int = Field(1, ge=1)
    seed: Seed = 0
    threshold_bins: int = Field(256, ge=1)
    tree_family: TreeFamily = TreeFamily.pooled


class SquareLevConfig(BaseModel, extra=Extra.forbid):
    rho: float = Field(0.0, ge=0.0)
    t_max: int = Field(1000, ge=1)
    epsilon_floor: float = Field(0.0, ge=0.0)
    min_leaf_count: int = Field(1, ge=1)
    threshold_bins: int = Field(256, ge=1)
    tree_family: TreeFamily = TreeFamily.pooled
    seed: Seed = 0


class IterationRecord(BaseModel):
    iteration: int
    train_loss: float
    holdout_loss: Optional[float] = None
    holdout_mc: Optional[float] = None
    split: str = ''
    edge: Optional[float] = None
    alpha: Optional[float] = None
    variance_before: Optional[float] = None
    variance_after: Optional[float] = None


class FitTrace(BaseModel):
    solver: str
    records: List[IterationRecord] = []
    stop_reason: Optional[StopReason] = None
    best_iteration: int = 0

    def add(self, record: IterationRecord):
        self.records.append(record)

    def train_losses(self) -> List[float]:
        return [r.train_loss for r in self.records]


class XorSpec(BaseModel, extra=Extra.forbid):
    gamma: float = Field(..., gt=0.0, lt=1.0)
    n: int = Field(..., ge=1)
    seed: Seed = 0
    base_constant: float = Field(0.5, ge=0.0, le=1.0)
    stratified: bool = False


class XorSidecar(BaseModel):
    gamma: float
    n: int
    seed: int
    base_constant: float
    optimum_formula: str = "(1-gamma)*(g1/2 + g2/4 + g3/8) + gamma/2"
    optimum_loss: float
    optimum_mc_error: float
    epsilon_loss: float


class GroupBiasSpec(BaseModel, extra=Extra.forbid):
    k: int = Field(..., ge=1)
    n: int = Field(..., ge=1)
    noise_sd: float = Field(0.1, ge=0.0)
    biases: List[float] = [0.2]
    group_rate: float = Field(0.125, gt=0.0, lt=1.0)
    f0_low: float = Field(0.0, ge=0.0, le=1.0)
    f0_high: float = Field(1.0, ge=0.0, le=1.0)
    binary_labels: bool = False
    seed: Seed = 0

    @validator('f0_high')
    def high_above_low(cls, v, values):
        if 'f0_low' in values and v < values['f0_low']:
            raise ValueError('f0_high must be >= f0_low')
        return v

    def resolved_biases(self) -> List[float]:
        """A single value is shared by all k groups."""
        if len(self.biases) == 1:
            return [self.biases[0]] * self.k
        if len(self.biases) != self.k:
            raise ValueError(f'expected 1 or {self.k} biases, got {len(self.biases)}')
        return list(self.biases)


class EvaluationReport(BaseModel):
    method: str
    m: int
    nonempty_range: int
    squared_loss: float
    mc_error: float
    worst_group_index: int
    per_group_mc: List[float]
    multiaccuracy_error: float
    worst_group_binned_ece: float
    bins: int
    epsilon_round: float
    empty_groups: List[int] = []

    def csv_row(self) -> dict:
        return {'method': self.method, 'm': self.m, 'nonempty_range': self.nonempty_range,
                'mc_error': self.mc_error, 'squared_loss': self.squared_loss, 'epsilon_round': self.epsilon_round,
                'worst_group_binned_ece': self.worst_group_binned_ece,
                'multiaccuracy_error': self.multiaccuracy_error}


class SaturationReport(BaseModel):
    loss_f0: float
    loss_fcal: float
    loss_second_pass: float
    epsilon_hat_loss: float
    threshold: float
    passes: bool


class BoundCheck(BaseModel):
    m: int
    mc_error: float
    epsilon_hat_loss: float
    epsilon_round: float
    bound: float
    slack: float
    delta: float
    satisfied: bool


class SampleComplexity(BaseModel):
    num_trees: int
    sample_size: int
    label: str = "unit-constant asymptotic estimate"


class SweepGrid(BaseModel, extra=Extra.forbid):
    method: CalibratorKind
    learning_rates: List[float] = []
    subsamples: List[float] = []
    depths: List[int] = []
    holdout_fractions: List[float] = []
    lambdas: List[float] = []
    target_ms: List[int] = []
    folds: int = Field(10, ge=1)
    seed: Seed = 0
