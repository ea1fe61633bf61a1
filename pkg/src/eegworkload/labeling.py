"""NASA-TLX label processing.

Covers subscale aggregation with equal weights, the random-intercept
mixed-effects model whose conditional residuals replace raw workload
scores, median-split binarization, and the exhaustive search over the 63
nonempty subscale subsets.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSplit,
    EmptySubset,
    InputError,
    NonConvergence,
    ShapeMismatch,
    SingularDesign,
)
from .recordings import Condition, TaskKind


class Subscale(str, Enum):
    MENTAL_DEMAND = "MentalDemand"
    PHYSICAL_DEMAND = "PhysicalDemand"
    TEMPORAL_DEMAND = "TemporalDemand"
    PERFORMANCE = "Performance"
    EFFORT = "Effort"
    FRUSTRATION = "Frustration"


ALL_SUBSCALES = tuple(Subscale)

#: Aggregate used by default: mental demand, physical demand, performance, effort.
FOUR_SCALE_SET = frozenset(
    {Subscale.MENTAL_DEMAND, Subscale.PHYSICAL_DEMAND, Subscale.PERFORMANCE, Subscale.EFFORT}
)

_CSV_COLUMNS = {
    "mental": Subscale.MENTAL_DEMAND,
    "physical": Subscale.PHYSICAL_DEMAND,
    "temporal": Subscale.TEMPORAL_DEMAND,
    "performance": Subscale.PERFORMANCE,
    "effort": Subscale.EFFORT,
    "frustration": Subscale.FRUSTRATION,
}

_TOKEN_ALIASES = {
    "md": Subscale.MENTAL_DEMAND, "mental": Subscale.MENTAL_DEMAND,
    "pd": Subscale.PHYSICAL_DEMAND, "physical": Subscale.PHYSICAL_DEMAND,
    "td": Subscale.TEMPORAL_DEMAND, "temporal": Subscale.TEMPORAL_DEMAND,
    "perf": Subscale.PERFORMANCE, "performance": Subscale.PERFORMANCE,
    "effort": Subscale.EFFORT,
    "frust": Subscale.FRUSTRATION, "frustration": Subscale.FRUSTRATION,
}


def parse_subscale_tokens(spec: str) -> frozenset[Subscale]:
    """Parse a comma-separated subscale list such as 'md,pd,perf,effort'."""
    members = set()
    for token in spec.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in _TOKEN_ALIASES:
            raise InputError(f"unknown subscale token {token!r}")
        members.add(_TOKEN_ALIASES[token])
    if not members:
        raise EmptySubset("no subscales given")
    return frozenset(members)


class LabelValue(str, Enum):
    LOW = "Low"
    HIGH = "High"


@dataclass(frozen=True)
class TlxRecord:
    """Six subscale scores for one (subject, condition) trial."""

    subject_id: str
    condition: Condition
    task: TaskKind
    order: int
    subscales: dict[Subscale, float] = field(repr=False)

    def __post_init__(self):
        missing = [s for s in ALL_SUBSCALES if s not in self.subscales]
        if missing:
            raise InputError(f"missing subscales {missing} for {self.subject_id}")
        for s, v in self.subscales.items():
            if not 0.0 <= v <= 100.0:
                raise InputError(
                    f"{self.subject_id}: subscale {s.value} score {v} outside [0, 100]"
                )


def read_tlx_csv(path: str | Path) -> list[TlxRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"subject_id", "condition", "task", "order", *_CSV_COLUMNS}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(
                f"{path}: TLX CSV must have columns {sorted(required)}"
            )
        for row in reader:
            records.append(TlxRecord(
                subject_id=row["subject_id"],
                condition=Condition(row["condition"]),
                task=TaskKind(row["task"]),
                order=int(row["order"]),
                subscales={s: float(row[col]) for col, s in _CSV_COLUMNS.items()},
            ))
    return records


def write_tlx_csv(records: list[TlxRecord], path: str | Path) -> None:
    cols = ["subject_id", "condition", "task", "order", *_CSV_COLUMNS]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in records:
            writer.writerow(
                [r.subject_id, r.condition.value, r.task.value, r.order]
                + [repr(r.subscales[s]) for s in _CSV_COLUMNS.values()]
            )


def aggregate_subscales(rec: TlxRecord, members: frozenset[Subscale]) -> float:
    """Equal-weight mean of the selected subscale scores."""
    if not members:
        raise EmptySubset("subscale subset is empty")
    return float(np.mean([rec.subscales[s] for s in members]))


# --- random-intercept mixed model -------------------------------------------


@dataclass
class MixedModelFit:
    """REML fit of score ~ condition + task with a per-subject intercept."""

    fixed_coefs: dict[str, dict[str, float]]  # name -> {coef, se, z, p}
    group_variance: float
    residual_variance: float
    intercepts: dict[str, float]
    residuals: np.ndarray
    lambda_ratio: float
    converged: bool


def _profiled_reml_parts(y, X, group_codes, group_slices, lam):
    """GLS sufficient statistics for V = I + lam * Z Z' (block diagonal)."""
    n, p = X.shape
    XtX = X.T @ X
    Xty = X.T @ y
    yty = float(y @ y)
    logdet_v = 0.0
    for idx in group_slices:
        n_i = idx.size
        w = lam / (1.0 + lam * n_i)
        s = X[idx].sum(axis=0)
        t = float(y[idx].sum())
        XtX = XtX - w * np.outer(s, s)
        Xty = Xty - w * s * t
        yty -= w * t * t
        logdet_v += math.log1p(lam * n_i)
    return XtX, Xty, yty, logdet_v


def _reml_deviance(y, X, group_slices, lam):
    n, p = X.shape
    XtViX, XtViy, ytViy, logdet_v = _profiled_reml_parts(y, X, None, group_slices, lam)
    sign, logdet_x = np.linalg.slogdet(XtViX)
    if sign <= 0:
        raise SingularDesign("fixed-effect design is collinear")
    beta = np.linalg.solve(XtViX, XtViy)
    rss = ytViy - float(beta @ XtViy)
    rss = max(rss, 1e-300)
    return (n - p) * math.log(rss) + logdet_v + logdet_x, beta, rss, XtViX


def _reml_score(y, X, group_slices, lam):
    """d(deviance)/d(lambda); exact, so the optimum can be pinned far below
    the resolution of deviance differences."""
    n, p = X.shape
    _, beta, rss, XtViX = _reml_deviance(y, X, group_slices, lam)
    A = np.linalg.inv(XtViX)
    raw = y - X @ beta
    # dV^-1/dlam is -J_i/(1+lam*n_i)^2 per group; the beta dependence of the
    # GLS residual sum of squares vanishes at the minimizer (envelope theorem)
    d_rss = 0.0
    d_logdet_v = 0.0
    d_logdet_x = 0.0
    for idx in group_slices:
        n_i = idx.size
        denom = (1.0 + lam * n_i) ** 2
        s = X[idx].sum(axis=0)
        r_sum = float(raw[idx].sum())
        d_rss -= r_sum ** 2 / denom
        d_logdet_v += n_i / (1.0 + lam * n_i)
        d_logdet_x -= float(s @ A @ s) / denom
    return (n - p) * d_rss / rss + d_logdet_v + d_logdet_x


_PROBE_GRID = np.concatenate([[0.0], np.logspace(-8, 8, 33)])
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def fit_random_intercept_lmm(
    scores: np.ndarray,
    condition: np.ndarray,
    task: np.ndarray,
    subject: list[str],
) -> MixedModelFit:
    """REML fit of score = b0 + b1*condition + b2*task + u_subject + eps.

    The single variance ratio sigma_g^2 / sigma^2 is profiled out and
    located by golden-section search; residuals are conditional (the
    estimated subject intercept is subtracted).

    Parameters
    ----------
    scores : per-sample workload values.
    condition, task : 0/1 contrast codes per sample.
    subject : per-sample group identifier.
    """
    y = np.asarray(scores, dtype=np.float64)
    cond = np.asarray(condition, dtype=np.float64)
    tsk = np.asarray(task, dtype=np.float64)
    if not (y.shape == cond.shape == tsk.shape) or y.ndim != 1:
        raise ShapeMismatch("scores, condition and task must be equal-length vectors")
    if len(subject) != y.size:
        raise ShapeMismatch("subject list must match the sample count")
    X = np.column_stack([np.ones_like(y), cond, tsk])
    names = ["intercept", "condition_effect", "task_effect"]

    subjects_sorted = sorted(set(subject))
    code_of = {s: i for i, s in enumerate(subjects_sorted)}
    codes = np.array([code_of[s] for s in subject])
    group_slices = [np.nonzero(codes == g)[0] for g in range(len(subjects_sorted))]

    def objective(lam: float) -> float:
        return _reml_deviance(y, X, group_slices, lam)[0]

    probe_vals = [objective(l) for l in _PROBE_GRID]
    i_best = int(np.argmin(probe_vals))
    if i_best == len(_PROBE_GRID) - 1:
        raise NonConvergence("variance ratio diverged beyond 1e8")
    a = _PROBE_GRID[max(i_best - 1, 0)]
    b = _PROBE_GRID[min(i_best + 1, len(_PROBE_GRID) - 1)]

    # golden-section to well below the documented 1e-8 tolerance
    tol = 1e-10 * max(1.0, b)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(200):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(d)
    else:
        raise NonConvergence("golden-section search did not close its bracket")
    lam = (a + b) / 2.0

    # the deviance is numerically flat near its optimum, so pin the root of
    # the analytic score to recover full precision in the variance ratio
    pad = 1e-3 * (1.0 + lam)
    lo, hi = max(lam - pad, 0.0), lam + pad
    s_lo = _reml_score(y, X, group_slices, lo)
    s_hi = _reml_score(y, X, group_slices, hi)
    if s_lo >= 0.0 and lo <= 1e-12:
        lam = 0.0  # deviance increasing from the boundary: no group variance
    elif s_lo < 0.0 < s_hi:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _reml_score(y, X, group_slices, mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * max(1.0, hi):
                break
        lam = 0.5 * (lo + hi)

    _, beta, rss, XtViX = _reml_deviance(y, X, group_slices, lam)
    n, p = X.shape
    sigma2 = rss / (n - p)
    sigma_g2 = lam * sigma2

    cov = sigma2 * np.linalg.inv(XtViX)
    ses = np.sqrt(np.diag(cov))
    fixed = {}
    for name, b_i, se in zip(names, beta, ses):
        z = b_i / se if se > 0 else math.inf
        pval = math.erfc(abs(z) / math.sqrt(2.0))
        fixed[name] = {"coef": float(b_i), "se": float(se), "z": float(z), "p": float(pval)}

    raw = y - X @ beta
    intercepts = {}
    u = np.zeros(len(group_slices))
    for g, idx in enumerate(group_slices):
        n_i = idx.size
        shrink = lam * n_i / (1.0 + lam * n_i)
        u[g] = shrink * raw[idx].mean()
        intercepts[subjects_sorted[g]] = float(u[g])
    residuals = raw - u[codes]

    return MixedModelFit(
        fixed_coefs=fixed,
        group_variance=float(sigma_g2),
        residual_variance=float(sigma2),
        intercepts=intercepts,
        residuals=residuals,
        lambda_ratio=float(lam),
        converged=True,
    )


def residual_labels(fit: MixedModelFit) -> np.ndarray:
    """Conditional residuals used as replacement workload scores."""
    return np.asarray(fit.residuals, dtype=np.float64)


def median_split(values: np.ndarray) -> tuple[list[LabelValue], float]:
    """Binarize at the sample median: at-or-below -> Low, above -> High.

    Raises DegenerateSplit when every value is identical; warns when ties
    at the median leave the classes imbalanced by more than one sample.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise InputError("median_split needs at least two values")
    if np.all(v == v[0]):
        raise DegenerateSplit("all values equal; median split would put everything Low")
    threshold = float(np.median(v))
    labels = [LabelValue.LOW if x <= threshold else LabelValue.HIGH for x in v]
    n_low = sum(1 for l in labels if l is LabelValue.LOW)
    if abs(2 * n_low - v.size) > 1:
        warnings.warn(
            f"median ties leave classes imbalanced: {n_low} Low vs {v.size - n_low} High",
            stacklevel=2,
        )
    return labels, threshold


# --- label pipeline and LBL1 serialization -----------------------------------


@dataclass
class LabelTable:
    """Binary workload labels aligned to (subject, condition) samples."""

    subset: frozenset[Subscale]
    threshold: float
    rows: list[dict]  # {subject_id, condition, residual, label}

    def label_map(self) -> dict[tuple[str, str], LabelValue]:
        return {
            (r["subject_id"], r["condition"]): LabelValue(r["label"]) for r in self.rows
        }

    def to_json_dict(self) -> dict:
        return {
            "schema": "LBL1",
            "threshold": self.threshold,
            "subset": sorted(s.value for s in self.subset),
            "labels": self.rows,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LabelTable":
        if doc.get("schema") != "LBL1":
            raise InputError("not a LBL1 document")
        return cls(
            subset=frozenset(Subscale(s) for s in doc["subset"]),
            threshold=float(doc["threshold"]),
            rows=list(doc["labels"]),
        )


def build_labels(
    records: list[TlxRecord], subset: frozenset[Subscale]
) -> tuple[LabelTable, MixedModelFit]:
    """Aggregate -> mixed-model residuals -> median split, in sample order."""
    scores = np.array([aggregate_subscales(r, subset) for r in records])
    cond = np.array([1.0 if r.condition is Condition.VR else 0.0 for r in records])
    task = np.array([1.0 if r.task is TaskKind.SPEED_CHANGE else 0.0 for r in records])
    fit = fit_random_intercept_lmm(scores, cond, task, [r.subject_id for r in records])
    residuals = residual_labels(fit)
    labels, threshold = median_split(residuals)
    rows = [
        {
            "subject_id": r.subject_id,
            "condition": r.condition.value,
            "residual": float(res),
            "label": lab.value,
        }
        for r, res, lab in zip(records, residuals, labels)
    ]
    return LabelTable(subset=subset, threshold=threshold, rows=rows), fit


def subscale_subset_search(
    records: list[TlxRecord],
    feature_matrix,
    eval_config,
) -> tuple[list[dict], list[dict]]:
    """Score all 63 nonempty subscale subsets with the classification pipeline.

    For each subset the aggregate scores are relabeled through the mixed
    model and median split, then the standard selection + stacked-ensemble
    protocol is cross-validated (features are reused across subsets; only
    labels change). Returns (ranking, failures); ranking entries are sorted
    by mean accuracy, ties broken by mean F1 then smaller subset size.
    """
    from .evaluation import cross_validated_scores  # deferred: avoids import cycle

    results = []
    failures = []
    for r in range(1, len(ALL_SUBSCALES) + 1):
        for combo in itertools.combinations(ALL_SUBSCALES, r):
            subset = frozenset(combo)
            name = sorted(s.value for s in subset)
            try:
                table, _ = build_labels(records, subset)
                y = _align_labels(feature_matrix, table)
                scores = cross_validated_scores(feature_matrix.X, y, feature_matrix.names, eval_config)
                results.append({
                    "subset": name,
                    "size": len(subset),
                    "mean_accuracy": scores["mean_accuracy"],
                    "mean_f1": scores["mean_f1"],
                })
            except Exception as exc:  # per-subset failures are recorded, not fatal
                failures.append({"subset": name, "error": f"{type(exc).__name__}: {exc}"})
    results.sort(key=lambda e: (-e["mean_accuracy"], -e["mean_f1"], e["size"], e["subset"]))
    return results, failures


def _align_labels(feature_matrix, table: LabelTable) -> np.ndarray:
    lookup = table.label_map()
    y = np.empty(len(feature_matrix.sample_keys), dtype=np.int64)
    for i, key in enumerate(feature_matrix.sample_keys):
        if key not in lookup:
            raise InputError(f"no label for sample {key}")
        y[i] = 1 if lookup[key] is LabelValue.HIGH else 0
    return y
