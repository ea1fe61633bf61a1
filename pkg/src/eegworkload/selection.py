"""Recursive feature elimination driven by an L2-regularized linear SVM.

One feature (the smallest absolute weight) is dropped per round until the
target count remains; the ranking is the reverse elimination order with
the survivors ordered by final-fit weight magnitude.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import InputError, ShapeMismatch, SingleClassInput


@dataclass
class FeatureMatrix:
    """Samples x named feature values, with optional aligned labels."""

    names: list[str]
    X: np.ndarray
    kinds: list[str] | None = None  # "spectral" | "plv" per column
    sample_keys: list[tuple[str, str]] | None = None  # (subject_id, condition)
    y: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.names):
            raise ShapeMismatch(
                f"matrix {self.X.shape} does not match {len(self.names)} names"
            )
        if len(set(self.names)) != len(self.names):
            raise ShapeMismatch("feature names must be unique")
        if not np.all(np.isfinite(self.X)):
            raise InputError("feature matrix contains missing or non-finite values")
        if self.kinds is not None and len(self.kinds) != len(self.names):
            raise ShapeMismatch("kinds must align with names")
        if self.sample_keys is not None and len(self.sample_keys) != self.X.shape[0]:
            raise ShapeMismatch("sample_keys must align with rows")
        if self.y is not None:
            self.y = np.asarray(self.y)
            if self.y.shape != (self.X.shape[0],):
                raise ShapeMismatch("label vector must align with rows")

    def column_subset(self, names: list[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(
            names=list(names),
            X=self.X[:, idx],
            kinds=None if self.kinds is None else [self.kinds[i] for i in idx],
            sample_keys=self.sample_keys,
            y=self.y,
        )


@dataclass
class Standardizer:
    """Per-feature z-scoring; constant columns divide by 1 instead of 0."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        return cls(mean=mean, std=std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


@dataclass
class RfeConfig:
    n_select: int = 8
    step: int = 1
    C: float = 1.0
    max_iterations: int = 30_000
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.n_select < 1 or self.step < 1 or self.C <= 0:
            raise InputError(f"invalid RFE config: {self}")


@dataclass
class LinearSvmModel:
    """Linear classifier w.x + b with squared-hinge training loss."""

    weights: np.ndarray
    bias: float
    converged: bool
    duality_gap: float
    objective: float

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision(X) >= 0.0).astype(np.int64)


def _svm_objective(params, X, y_pm, C):
    w, b = params[:-1], params[-1]
    margins = 1.0 - y_pm * (X @ w + b)
    hinge = np.maximum(margins, 0.0)
    obj = 0.5 * float(w @ w) + C * float(hinge @ hinge)
    coef = -2.0 * C * y_pm * hinge
    grad_w = w + X.T @ coef
    grad_b = float(coef.sum())
    return obj, np.concatenate([grad_w, [grad_b]])


def _svm_duality_gap(w, b, X, y_pm, C) -> float:
    """Primal minus dual at the candidate multipliers alpha = 2C * hinge."""
    hinge = np.maximum(1.0 - y_pm * (X @ w + b), 0.0)
    primal = 0.5 * float(w @ w) + C * float(hinge @ hinge)
    alpha = 2.0 * C * hinge
    v = X.T @ (alpha * y_pm)
    dual = float(alpha.sum()) - float(alpha @ alpha) / (4.0 * C) - 0.5 * float(v @ v)
    return primal - dual


def fit_linear_svm(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    max_iterations: int = 30_000,
    tolerance: float = 1e-4,
) -> LinearSvmModel:
    """Train an L2-regularized squared-hinge linear classifier (unpenalized bias).

    Optimized with L-BFGS up to the iteration cap; the fit is accepted when
    the relative duality gap falls below ``tolerance``, otherwise the best
    iterate is returned with a NonConvergence warning carrying the gap.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassInput("training labels contain a single class")
    if classes.size > 2:
        raise InputError("binary labels required")
    y_pm = np.where(y == classes[1], 1.0, -1.0)

    x0 = np.zeros(X.shape[1] + 1)
    res = optimize.minimize(
        _svm_objective, x0, args=(X, y_pm, C), jac=True, method="L-BFGS-B",
        options={"maxiter": max_iterations, "ftol": 1e-14, "gtol": 1e-10},
    )
    w, b = res.x[:-1], float(res.x[-1])
    gap = _svm_duality_gap(w, b, X, y_pm, C)
    obj = float(res.fun)
    converged = gap <= tolerance * (abs(obj) + 1.0)
    if not converged:
        warnings.warn(
            f"linear SVM did not reach tolerance {tolerance}: duality gap {gap:.3e}",
            stacklevel=2,
        )
    return LinearSvmModel(
        weights=w, bias=b, converged=converged, duality_gap=float(gap), objective=obj,
    )


@dataclass
class FeatureRanking:
    """Feature names most-important-first; ``selected`` is the head prefix."""

    ranking: list[str]
    selected: list[str]
    tie_events: list[dict] = field(default_factory=list)
    config: RfeConfig | None = None

    def to_json_dict(self) -> dict:
        cfg = self.config or RfeConfig()
        return {
            "schema": "RANK1",
            "config": {
                "n_select": cfg.n_select,
                "step": cfg.step,
                "C": cfg.C,
                "max_iterations": cfg.max_iterations,
                "tolerance": cfg.tolerance,
            },
            "ranking": list(self.ranking),
            "selected": list(self.selected),
            "tie_events": list(self.tie_events),
        }


def rfe(X: np.ndarray, y: np.ndarray, names: list[str], cfg: RfeConfig) -> FeatureRanking:
    """Recursive feature elimination with a linear-SVM importance score.

    ``X`` is expected to be standardized already (margin methods are
    scale-sensitive). Ties in |weight| break lexicographically by feature
    name and are recorded as tie events. Survivors are ordered by the
    final fit's weight magnitudes.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != len(names):
        raise ShapeMismatch("names must match matrix columns")
    if cfg.n_select > len(names):
        raise InputError(
            f"cannot select {cfg.n_select} of {len(names)} features"
        )
    remaining = list(range(len(names)))
    eliminated: list[int] = []
    tie_events: list[dict] = []
    while len(remaining) > cfg.n_select:
        model = fit_linear_svm(
            X[:, remaining], y, C=cfg.C,
            max_iterations=cfg.max_iterations, tolerance=cfg.tolerance,
        )
        importance = np.abs(model.weights)
        n_drop = min(cfg.step, len(remaining) - cfg.n_select)
        # sort worst-first; ties resolved by feature name
        order = sorted(
            range(len(remaining)),
            key=lambda j: (importance[j], names[remaining[j]]),
        )
        lowest = importance[order[0]]
        tied = [names[remaining[j]] for j in order if importance[j] == lowest]
        if len(tied) > 1:
            tie_events.append({"weight": float(lowest), "features": tied})
        dropped = [remaining[j] for j in order[:n_drop]]  # worst first
        eliminated.extend(dropped)
        remaining = [i for i in remaining if i not in set(dropped)]
    final = fit_linear_svm(
        X[:, remaining], y, C=cfg.C,
        max_iterations=cfg.max_iterations, tolerance=cfg.tolerance,
    )
    survivor_order = sorted(
        range(len(remaining)),
        key=lambda j: (-np.abs(final.weights[j]), names[remaining[j]]),
    )
    ranking = [names[remaining[j]] for j in survivor_order]
    ranking += [names[i] for i in reversed(eliminated)]
    return FeatureRanking(
        ranking=ranking,
        selected=ranking[: cfg.n_select],
        tie_events=tie_events,
        config=cfg,
    )
