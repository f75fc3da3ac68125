"""Optimization and the training protocols built on it.

The optimizer is AdamW with decoupled weight decay: the decay term and
the adaptive step are both computed from the parameter value before the
update, so one step is

    theta <- theta - lr * wd * theta - lr * mhat / (sqrt(vhat) + eps)

An elastic-net penalty (L1 + L2 over every trainable tensor) can ride
on the data loss; it flows through the same gradients as everything
else rather than being special-cased in the optimizer. Reported
training losses always exclude the penalty so they stay comparable
between regularized and unregularized runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from pvforecast import autodiff as ad
from pvforecast import model as M
from pvforecast import metrics as MET
from pvforecast.autodiff import NumericError, Tensor
from pvforecast.data import DataError, PreparedDataset, PreparedSample, stratified_split

__all__ = [
    "AblationRow",
    "AdamWState",
    "BaselineReport",
    "CvFoldRow",
    "CvReport",
    "ElasticNetConfig",
    "FinalResult",
    "OptimizerConfig",
    "TrainConfig",
    "TrainRecord",
    "ablate",
    "cross_validate",
    "elastic_net_penalty",
    "fit",
    "persistence_baseline",
    "predict_all",
    "to_arrays",
    "train_final",
]

EVAL_BATCH = 64
ABLATION_HOLDOUT_FRACTION = 0.2


@dataclass
class OptimizerConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1.0e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.lr < 0.0:
            raise DataError(f"learning rate must be >= 0, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise DataError("momentum coefficients must lie in [0, 1)")
        if self.eps <= 0.0:
            raise DataError(f"eps must be > 0, got {self.eps}")


@dataclass
class ElasticNetConfig:
    l1: float = 1.0e-4
    l2: float = 1.0e-4

    def __post_init__(self):
        if self.l1 < 0.0 or self.l2 < 0.0:
            raise DataError("elastic-net strengths must be >= 0")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    elastic: ElasticNetConfig | None = field(default_factory=ElasticNetConfig)

    def __post_init__(self):
        if self.epochs < 0:
            raise DataError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")


class AdamWState:
    """First and second moment estimates for one parameter set."""

    def __init__(self, named_params, config: OptimizerConfig):
        self.config = config
        self.t = 0
        self.slots = [
            (name, tensor, np.zeros_like(tensor.data), np.zeros_like(tensor.data))
            for name, tensor in named_params
        ]

    def step(self) -> None:
        """Apply one update from the gradients currently on the parameters.

        Parameters without a gradient are left untouched; a non-finite
        gradient aborts with the parameter's name.
        """
        c = self.config
        self.t += 1
        bias1 = 1.0 - c.beta1**self.t
        bias2 = 1.0 - c.beta2**self.t
        for name, tensor, m, v in self.slots:
            grad = tensor.grad
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            m *= c.beta1
            m += (1.0 - c.beta1) * grad
            v *= c.beta2
            v += (1.0 - c.beta2) * grad * grad
            m_hat = m / bias1
            v_hat = v / bias2
            tensor.data = (
                tensor.data
                - c.lr * c.weight_decay * tensor.data
                - c.lr * m_hat / (np.sqrt(v_hat) + c.eps)
            )

    def zero_grad(self) -> None:
        for _, tensor, _, _ in self.slots:
            tensor.grad = None


def elastic_net_penalty(params: M.ModelParams, config: ElasticNetConfig) -> Tensor:
    """L1 + L2 penalty over every trainable tensor, as a graph node."""
    l1_terms = None
    l2_terms = None
    for _, tensor in params.named_tensors():
        l1_part = tensor.abs().sum()
        l2_part = (tensor * tensor).sum()
        l1_terms = l1_part if l1_terms is None else l1_terms + l1_part
        l2_terms = l2_part if l2_terms is None else l2_terms + l2_part
    return l1_terms * config.l1 + l2_terms * config.l2


def to_arrays(samples: list[PreparedSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack prepared samples into (X, m, y) batch arrays."""
    if not samples:
        raise DataError("no samples to stack")
    X = np.stack([s.X for s in samples]).astype(np.float64)
    m = np.stack([s.m for s in samples]).astype(np.float64)
    y = np.stack([s.y for s in samples]).astype(np.float64)
    return X, m, y


def predict_all(
    params: M.ModelParams, X: np.ndarray, m: np.ndarray, batch_size: int = EVAL_BATCH
) -> np.ndarray:
    """Forecasts for every sample, computed outside any gradient graph."""
    frozen = M.detach_params(params)
    outputs = []
    for start in range(0, X.shape[0], batch_size):
        stop = start + batch_size
        out = M.forward_batch(frozen, Tensor(X[start:stop]), Tensor(m[start:stop]))
        outputs.append(out.data)
    return np.concatenate(outputs, axis=0)


def _epoch(
    params: M.ModelParams,
    state: AdamWState,
    X: np.ndarray,
    m: np.ndarray,
    y: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
    elastic: ElasticNetConfig | None,
) -> float:
    """One pass over the data; returns the point-weighted data MSE.

    The reported value excludes the penalty and weights each minibatch
    by its point count, so with the optimizer held still it equals the
    plain evaluation MSE over the same samples.
    """
    order = rng.permutation(X.shape[0])
    total_sq = 0.0
    total_points = 0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        prediction = M.forward_batch(params, Tensor(X[idx]), Tensor(m[idx]))
        data_loss = ad.mse(prediction, Tensor(y[idx]))
        loss = data_loss if elastic is None else data_loss + elastic_net_penalty(params, elastic)
        points = int(y[idx].size)
        total_sq += data_loss.item() * points
        total_points += points
        loss.backward()
        state.step()
        state.zero_grad()
    return total_sq / total_points


@dataclass
class TrainRecord:
    epoch: int
    train_mse: float
    val_mse: float | None


def fit(
    params: M.ModelParams,
    train_arrays: tuple[np.ndarray, np.ndarray, np.ndarray],
    config: TrainConfig,
    val_arrays: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> list[TrainRecord]:
    """Optimize `params` in place; one record per epoch."""
    X, m, y = train_arrays
    state = AdamWState(list(params.named_tensors()), config.optimizer)
    rng = np.random.default_rng([config.seed, 505])
    records = []
    for epoch in range(1, config.epochs + 1):
        train_mse = _epoch(params, state, X, m, y, config.batch_size, rng, config.elastic)
        val_mse = None
        if val_arrays is not None:
            vX, vm, vy = val_arrays
            val_mse = MET.mse(vy, predict_all(params, vX, vm))
        records.append(TrainRecord(epoch=epoch, train_mse=train_mse, val_mse=val_mse))
    return records


# -- cross-validation -------------------------------------------------


@dataclass
class CvFoldRow:
    fold: int
    reg_train_mse: float
    reg_val_mse: float
    unreg_train_mse: float
    unreg_val_mse: float


@dataclass
class CvReport:
    rows: list[CvFoldRow]

    def mean_gap(self, regularized: bool) -> float:
        """Average generalization gap (validation minus training MSE)."""
        if regularized:
            gaps = [r.reg_val_mse - r.reg_train_mse for r in self.rows]
        else:
            gaps = [r.unreg_val_mse - r.unreg_train_mse for r in self.rows]
        return float(np.mean(gaps))


def _fold_seed(base_seed: int, fold: int) -> int:
    return int(np.random.default_rng([base_seed, 606, fold]).integers(0, 2**31))


def cross_validate(
    dataset: PreparedDataset,
    model_config: M.ModelConfig,
    train_config: TrainConfig,
) -> CvReport:
    """Train on every fold twice, with and without the elastic net.

    Both runs of a fold start from the same initialization and data
    order, so their generalization gaps are directly comparable.
    """
    if not dataset.split.folds:
        raise DataError("dataset carries no validation folds")
    if train_config.elastic is None:
        raise DataError("cross-validation compares against the configured elastic net")
    train_samples = dataset.split.train
    rows = []
    for fold_index, (train_idx, val_idx) in enumerate(dataset.split.folds):
        fold_train = to_arrays([train_samples[i] for i in train_idx])
        fold_val = to_arrays([train_samples[i] for i in val_idx])
        seed = _fold_seed(train_config.seed, fold_index)
        results = {}
        for label, elastic in (("reg", train_config.elastic), ("unreg", None)):
            params = M.init_params(model_config, seed=seed)
            run_config = replace(train_config, seed=seed, elastic=elastic)
            records = fit(params, fold_train, run_config, val_arrays=fold_val)
            last = records[-1]
            results[label] = (last.train_mse, last.val_mse)
        rows.append(
            CvFoldRow(
                fold=fold_index,
                reg_train_mse=results["reg"][0],
                reg_val_mse=results["reg"][1],
                unreg_train_mse=results["unreg"][0],
                unreg_val_mse=results["unreg"][1],
            )
        )
    return CvReport(rows=rows)


# -- final training and evaluation ------------------------------------


@dataclass
class BaselineReport:
    """Yesterday-equals-today reference forecast over the test split."""

    pe: float
    mse: float
    covered: int
    total: int
    y_true: np.ndarray
    y_pred: np.ndarray
    test_indices: list[int]


def persistence_baseline(dataset: PreparedDataset) -> BaselineReport:
    """Score the previous-day persistence forecast on the test split.

    Test days whose previous calendar day exists nowhere in the data are
    skipped (counted in `total` but not `covered`).
    """
    by_key = {}
    for sample in dataset.split.train + dataset.split.test:
        by_key[(sample.station_id, sample.day_of_year)] = sample
    y_true, y_pred, indices = [], [], []
    for i, sample in enumerate(dataset.split.test):
        previous = by_key.get((sample.station_id, sample.day_of_year - 1))
        if previous is None:
            continue
        y_true.append(sample.y)
        y_pred.append(previous.y)
        indices.append(i)
    if not indices:
        raise DataError("persistence baseline undefined: no test day has a previous day")
    true_arr = np.stack(y_true)
    pred_arr = np.stack(y_pred)
    return BaselineReport(
        pe=MET.percentage_error(true_arr, pred_arr),
        mse=MET.mse(true_arr, pred_arr),
        covered=len(indices),
        total=len(dataset.split.test),
        y_true=true_arr,
        y_pred=pred_arr,
        test_indices=indices,
    )


@dataclass
class FinalResult:
    params: M.ModelParams
    records: list[TrainRecord]
    test_metrics: MET.MetricsReport
    test_predictions: np.ndarray
    baseline: BaselineReport


def train_final(
    dataset: PreparedDataset,
    model_config: M.ModelConfig,
    train_config: TrainConfig,
) -> FinalResult:
    """Train on the whole training split and score the held-out days."""
    train_arrays = to_arrays(dataset.split.train)
    test_arrays = to_arrays(dataset.split.test)
    params = M.init_params(model_config, seed=train_config.seed)
    records = fit(params, train_arrays, train_config, val_arrays=test_arrays)
    tX, tm, ty = test_arrays
    predictions = predict_all(params, tX, tm)
    return FinalResult(
        params=params,
        records=records,
        test_metrics=MET.evaluate(ty, predictions),
        test_predictions=predictions,
        baseline=persistence_baseline(dataset),
    )


# -- ablation ---------------------------------------------------------

ABLATION_SETTINGS: tuple[tuple[str, int, dict], ...] = (
    ("full_model", 2, {}),
    ("no_normalization", 2, {"disable_norm": True}),
    ("no_metadata", 2, {"disable_metadata": True}),
    ("no_skip_connections", 2, {"disable_skip": True}),
    ("no_attention", 2, {"disable_attention": True}),
    ("blocks_1", 1, {}),
    ("blocks_4", 4, {}),
    ("blocks_6", 6, {}),
)


@dataclass
class AblationRow:
    name: str
    blocks: int
    parameters: int
    train_mse: float
    val_mse: float
    test_mse: float
    val_pe: float


def ablate(
    dataset: PreparedDataset,
    model_config: M.ModelConfig,
    train_config: TrainConfig,
) -> list[AblationRow]:
    """Retrain structural variants under identical conditions.

    The training split is re-divided into a stratified 80/20 holdout;
    every variant starts from the same seed and sees the same data
    order, so differences in the table trace back to structure alone.
    """
    sub_train, sub_val = stratified_split(
        dataset.split.train,
        seed=train_config.seed,
        test_fraction=ABLATION_HOLDOUT_FRACTION,
    )
    train_arrays = to_arrays(sub_train)
    vX, vm, vy = to_arrays(sub_val)
    tX, tm, ty = to_arrays(dataset.split.test)
    rows = []
    for name, blocks, flags in ABLATION_SETTINGS:
        config = replace(
            model_config, blocks=blocks, ablation=M.AblationFlags(**flags)
        )
        params = M.init_params(config, seed=train_config.seed)
        records = fit(params, train_arrays, train_config)
        predictions = predict_all(params, vX, vm)
        test_predictions = predict_all(params, tX, tm)
        rows.append(
            AblationRow(
                name=name,
                blocks=blocks,
                parameters=M.parameter_count(config),
                train_mse=records[-1].train_mse if records else float("nan"),
                val_mse=MET.mse(vy, predictions),
                test_mse=MET.mse(ty, test_predictions),
                val_pe=MET.percentage_error(vy, predictions),
            )
        )
    return rows
