"""Base learners and the stacked ensemble.

Random Forest is backed by scikit-learn trees behind the config contract
(Gini CART on bootstrap resamples, majority vote); logistic regression and
the linear SVM are trained here so their losses and gradients stay
inspectable. The stacked ensemble feeds out-of-fold base scores to an SVM
meta-model.
"""

from __future__ import annotations

import io
import itertools
import json
import math
import pickle
import warnings
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np
from scipy import optimize
from sklearn.ensemble import RandomForestClassifier

from .errors import (
    InputError,
    InsufficientSamplesForStacking,
    ShapeMismatch,
    SingleClassInput,
)
from .selection import LinearSvmModel, Standardizer, fit_linear_svm
from .splits import stratified_kfold


@dataclass
class RandomForestConfig:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True
    features_per_split: int | None = None  # None -> floor(sqrt(d))
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1 or self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise InputError(f"invalid random-forest config: {self}")


@dataclass
class LogRegConfig:
    C: float = 1.0
    tolerance: float = 1e-6
    max_iterations: int = 2000

    def __post_init__(self):
        if self.C <= 0:
            raise InputError("logistic regression C must be positive")


@dataclass
class SvmConfig:
    C: float = 1.0
    tolerance: float = 1e-4
    max_iterations: int = 30_000
    kernel: str = "linear"
    gamma_mode: str = "scale"  # recorded for config parity; inert for a linear kernel

    def __post_init__(self):
        if self.C <= 0:
            raise InputError("SVM C must be positive")
        if self.kernel != "linear":
            raise InputError("only the linear kernel is supported")


@dataclass
class StackedConfig:
    rf: RandomForestConfig = field(default_factory=RandomForestConfig)
    lr: LogRegConfig = field(default_factory=LogRegConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    meta_svm: SvmConfig = field(default_factory=lambda: SvmConfig(C=10.0))
    oof_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.oof_folds < 2:
            raise InputError("need at least 2 internal folds for stacking")


def _check_binary(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassInput("training labels contain a single class")
    if classes.size > 2 or not np.all(np.isin(classes, [0, 1])):
        raise InputError("labels must be coded 0/1")
    return y.astype(np.int64)


# --- random forest ------------------------------------------------------------


@dataclass
class RandomForestModel:
    forest: RandomForestClassifier
    config: RandomForestConfig

    def _votes(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees voting for class 1 (hard majority votes)."""
        X = np.asarray(X, dtype=np.float64)
        leaves = self.forest.apply(X)
        classes = self.forest.classes_
        votes = np.zeros(X.shape[0])
        for i, tree in enumerate(self.forest.estimators_):
            value = tree.tree_.value[leaves[:, i], 0, :]
            votes += classes[np.argmax(value, axis=1)] == 1
        return votes / len(self.forest.estimators_)

    def score(self, X: np.ndarray) -> np.ndarray:
        return self._votes(X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self._votes(X) >= 0.5).astype(np.int64)


def train_random_forest(X: np.ndarray, y: np.ndarray, cfg: RandomForestConfig) -> RandomForestModel:
    """Gini CART trees on bootstrap resamples with majority-vote prediction."""
    y = _check_binary(y)
    X = np.asarray(X, dtype=np.float64)
    max_features = cfg.features_per_split
    if max_features is None:
        max_features = max(1, int(math.isqrt(X.shape[1])))
    forest = RandomForestClassifier(
        n_estimators=cfg.n_estimators,
        criterion="gini",
        max_depth=cfg.max_depth,
        min_samples_split=cfg.min_samples_split,
        min_samples_leaf=cfg.min_samples_leaf,
        bootstrap=cfg.bootstrap,
        max_features=max_features,
        random_state=cfg.seed,
        n_jobs=1,
    )
    forest.fit(X, y)
    return RandomForestModel(forest=forest, config=cfg)


# --- logistic regression --------------------------------------------------------


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    converged: bool

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision(X)))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision(X) >= 0.0).astype(np.int64)


def logreg_objective(params: np.ndarray, X: np.ndarray, y_pm: np.ndarray, C: float):
    """Regularized logistic loss 0.5*||w||^2 + C*sum log(1+exp(-y f)) and gradient."""
    w, b = params[:-1], params[-1]
    z = y_pm * (X @ w + b)
    # log(1 + exp(-z)) evaluated stably on both tails
    loss = np.logaddexp(0.0, -z)
    obj = 0.5 * float(w @ w) + C * float(loss.sum())
    sig = 1.0 / (1.0 + np.exp(z))  # d loss / d(-z)
    coef = -C * y_pm * sig
    grad_w = w + X.T @ coef
    grad_b = float(coef.sum())
    return obj, np.concatenate([grad_w, [grad_b]])


def train_logreg(X: np.ndarray, y: np.ndarray, cfg: LogRegConfig) -> LogRegModel:
    """L2-regularized logistic regression by quasi-Newton descent (unpenalized bias)."""
    y = _check_binary(y)
    X = np.asarray(X, dtype=np.float64)
    y_pm = np.where(y == 1, 1.0, -1.0)
    x0 = np.zeros(X.shape[1] + 1)
    res = optimize.minimize(
        logreg_objective, x0, args=(X, y_pm, cfg.C), jac=True, method="L-BFGS-B",
        options={"maxiter": cfg.max_iterations, "ftol": 1e-15, "gtol": cfg.tolerance},
    )
    grad_norm = float(np.max(np.abs(res.jac)))
    converged = grad_norm <= 10 * cfg.tolerance * (1.0 + abs(float(res.fun)))
    if not converged:
        warnings.warn(
            f"logistic regression stopped with gradient norm {grad_norm:.3e}",
            stacklevel=2,
        )
    return LogRegModel(weights=res.x[:-1], bias=float(res.x[-1]), converged=converged)


# --- linear SVM (shared with the RFE estimator) ----------------------------------


def train_svm(X: np.ndarray, y: np.ndarray, cfg: SvmConfig) -> LinearSvmModel:
    y = _check_binary(y)
    return fit_linear_svm(
        X, y, C=cfg.C, max_iterations=cfg.max_iterations, tolerance=cfg.tolerance
    )


# --- stacked ensemble -------------------------------------------------------------


@dataclass
class StackedModel:
    """Three base learners plus an SVM meta-model over their class scores."""

    config: StackedConfig
    rf: RandomForestModel
    lr: LogRegModel
    svm: LinearSvmModel
    meta: LinearSvmModel

    def _meta_features(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([
            self.rf.score(X),
            self.lr.predict_proba(X),
            self.svm.decision(X),
        ])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.meta.predict(self._meta_features(X))

    def score(self, X: np.ndarray) -> np.ndarray:
        return self.meta.decision(self._meta_features(X))


def _fit_bases(X, y, cfg: StackedConfig, seed: int):
    rf_cfg = RandomForestConfig(**{**asdict(cfg.rf), "seed": seed})
    rf = train_random_forest(X, y, rf_cfg)
    lr = train_logreg(X, y, cfg.lr)
    svm = train_svm(X, y, cfg.svm)
    return rf, lr, svm


def train_stacked(X: np.ndarray, y: np.ndarray, cfg: StackedConfig) -> StackedModel:
    """Out-of-fold stacking: base scores for the meta-model come from a
    stratified internal split so the meta-model never sees resubstitution
    scores; the bases are then refit on all training data for inference."""
    y = _check_binary(y)
    X = np.asarray(X, dtype=np.float64)
    counts = np.bincount(y, minlength=2)
    if counts.min() < 2 * cfg.oof_folds:
        raise InsufficientSamplesForStacking(
            f"need at least {2 * cfg.oof_folds} samples per class for "
            f"{cfg.oof_folds}-fold stacking, got {counts.tolist()}"
        )
    plan = stratified_kfold(y, cfg.oof_folds, seed=cfg.seed)
    oof = np.zeros((X.shape[0], 3))
    for fold in range(cfg.oof_folds):
        tr, va = plan.fold_indices(fold)
        rf, lr, svm = _fit_bases(X[tr], y[tr], cfg, seed=cfg.seed * 1000 + fold + 1)
        oof[va, 0] = rf.score(X[va])
        oof[va, 1] = lr.predict_proba(X[va])
        oof[va, 2] = svm.decision(X[va])
    meta = fit_linear_svm(
        oof, y, C=cfg.meta_svm.C,
        max_iterations=cfg.meta_svm.max_iterations, tolerance=cfg.meta_svm.tolerance,
    )
    rf, lr, svm = _fit_bases(X, y, cfg, seed=cfg.seed * 1000)
    return StackedModel(config=cfg, rf=rf, lr=lr, svm=svm, meta=meta)


# --- grid search --------------------------------------------------------------------


@dataclass
class GridSpec:
    """Cartesian grid over the stacked ensemble's tunable values."""

    rf_n_estimators: list[int] = field(default_factory=lambda: [50, 100])
    lr_C: list[float] = field(default_factory=lambda: [0.01, 1.0])
    svm_C: list[float] = field(default_factory=lambda: [0.01, 10.0])
    meta_C: list[float] = field(default_factory=lambda: [10.0])

    def cells(self) -> list[tuple[int, float, float, float]]:
        if not (self.rf_n_estimators and self.lr_C and self.svm_C and self.meta_C):
            raise InputError("grid axes must be nonempty")
        return list(itertools.product(
            self.rf_n_estimators, self.lr_C, self.svm_C, self.meta_C
        ))

    @classmethod
    def singleton(cls, rf_n: int, lr_c: float, svm_c: float, meta_c: float = 10.0) -> "GridSpec":
        return cls(rf_n_estimators=[rf_n], lr_C=[lr_c], svm_C=[svm_c], meta_C=[meta_c])


def config_for_cell(cell: tuple[int, float, float, float], template: StackedConfig) -> StackedConfig:
    rf_n, lr_c, svm_c, meta_c = cell
    return StackedConfig(
        rf=RandomForestConfig(**{**asdict(template.rf), "n_estimators": rf_n}),
        lr=LogRegConfig(**{**asdict(template.lr), "C": lr_c}),
        svm=SvmConfig(**{**asdict(template.svm), "C": svm_c}),
        meta_svm=SvmConfig(**{**asdict(template.meta_svm), "C": meta_c}),
        oof_folds=template.oof_folds,
        seed=template.seed,
    )


def _accuracy(y_true, y_pred) -> float:
    return float(np.mean(y_true == y_pred))


def _f1_high(y_true, y_pred) -> float:
    """Binary F1 with class 1 (high workload) as positive."""
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def grid_search(
    X: np.ndarray,
    y: np.ndarray,
    grid: GridSpec,
    folds: int,
    seed: int,
    template: StackedConfig | None = None,
) -> tuple[StackedConfig, list[dict]]:
    """Exhaustive stratified-CV evaluation of every grid cell.

    Picks the cell with highest mean accuracy; ties go to higher mean F1,
    then the lexicographically smallest cell. Failed cells are recorded in
    the score table and skipped.
    """
    y = _check_binary(y)
    template = replace(template or StackedConfig(), seed=seed)
    plan = stratified_kfold(y, folds, seed=seed)
    table: list[dict] = []
    best_key = None
    best_cell = None
    for cell in grid.cells():
        cfg = config_for_cell(cell, template)
        accs, f1s = [], []
        try:
            for fold in range(folds):
                tr, va = plan.fold_indices(fold)
                model = train_stacked(X[tr], y[tr], cfg)
                pred = model.predict(X[va])
                accs.append(_accuracy(y[va], pred))
                f1s.append(_f1_high(y[va], pred))
        except Exception as exc:
            table.append({
                "cell": cell, "failed": True,
                "error": f"{type(exc).__name__}: {exc}",
            })
            continue
        mean_acc = float(np.mean(accs))
        mean_f1 = float(np.mean(f1s))
        table.append({
            "cell": cell, "failed": False,
            "fold_accuracies": accs, "mean_accuracy": mean_acc,
            "sd_accuracy": float(np.std(accs)),
            "fold_f1s": f1s, "mean_f1": mean_f1, "sd_f1": float(np.std(f1s)),
        })
        key = (-mean_acc, -mean_f1, cell)
        if best_key is None or key < best_key:
            best_key = key
            best_cell = cell
    if best_cell is None:
        raise InputError("every grid cell failed")
    return config_for_cell(best_cell, template), table


def grid_table_csv(table: list[dict]) -> str:
    lines = ["rf_n_estimators,lr_C,svm_C,meta_C,fold_accuracies,mean_accuracy,sd_accuracy,mean_f1,sd_f1,failed"]
    for row in table:
        cell = row["cell"]
        if row["failed"]:
            lines.append(f"{cell[0]},{cell[1]},{cell[2]},{cell[3]},,,,,,{row['error']!r}")
        else:
            folds = ";".join(f"{a:.6f}" for a in row["fold_accuracies"])
            lines.append(
                f"{cell[0]},{cell[1]},{cell[2]},{cell[3]},{folds},"
                f"{row['mean_accuracy']:.6f},{row['sd_accuracy']:.6f},"
                f"{row['mean_f1']:.6f},{row['sd_f1']:.6f},False"
            )
    return "\n".join(lines) + "\n"


# --- trained model container (MDL1) ---------------------------------------------


@dataclass
class TrainedModel:
    """Deployable bundle: standardizer + stacked ensemble + feature-name contract."""

    feature_names: list[str]
    scaler: Standardizer
    stacked: StackedModel
    model_kind: str

    def predict_named(self, X: np.ndarray, names: list[str]) -> np.ndarray:
        """Predict on columns identified by name; order-insensitive."""
        if sorted(names) != sorted(self.feature_names):
            raise ShapeMismatch(
                "feature names do not match the model's training contract"
            )
        X = np.asarray(X, dtype=np.float64)
        cols = [names.index(n) for n in self.feature_names]
        return self.stacked.predict(self.scaler.transform(X[:, cols]))


def save_model(model: TrainedModel, path: str | Path) -> None:
    """MDL1 container: JSON header line + pickled estimator payload."""
    header = {
        "schema": "MDL1",
        "version": 1,
        "model_kind": model.model_kind,
        "feature_names": model.feature_names,
        "standardization": {
            "mean": [float(v) for v in model.scaler.mean],
            "std": [float(v) for v in model.scaler.std],
        },
        "config": {
            "rf": asdict(model.stacked.config.rf),
            "lr": asdict(model.stacked.config.lr),
            "svm": asdict(model.stacked.config.svm),
            "meta_svm": asdict(model.stacked.config.meta_svm),
            "oof_folds": model.stacked.config.oof_folds,
            "seed": model.stacked.config.seed,
        },
    }
    buf = io.BytesIO()
    pickle.dump(model, buf, protocol=4)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(buf.getvalue())


def load_model(path: str | Path) -> TrainedModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise InputError(f"{path}: not an MDL1 container")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("schema") != "MDL1":
        raise InputError(f"{path}: not an MDL1 container")
    model = pickle.loads(raw[nl + 1:])
    if not isinstance(model, TrainedModel):
        raise InputError(f"{path}: payload is not a trained model")
    return model
