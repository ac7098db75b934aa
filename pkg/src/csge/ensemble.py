"""The soft gating ensemble: out-of-fold training, weight fusion and prediction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    Dataset,
    EtaVector,
    FoldTooSmall,
    LeadTimeOutOfRange,
    NotFitted,
    PredictionCube,
    Scorer,
    ShapeMismatch,
    WeightBreakdown,
    validate_dataset,
)
from .estimators import EstimatorSpec, FittedEstimator
from .estimators import fit as fit_estimator
from .optim import EvalContext, MinimizeResult, ObjectiveConfig, fuse, minimize
from .softgate import SoftGateConfig, log_soft_gate
from .weighting import (
    GlobalScores,
    LocalMemory,
    TimeScores,
    build_local_memory,
    combine_log_weights,
    fit_global,
    fit_time,
    local_errors_batch,
)

# -- fold plans ------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of training rows to folds.

    With ``protocol="kfold"`` every row is predicted once by member copies
    trained on the other folds. With ``protocol="holdout"`` rows in fold 0
    train the members and rows in fold 1 train the ensemble.
    """

    K: int
    assignments: np.ndarray
    seed: int = 0
    protocol: str = "kfold"

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int)
        object.__setattr__(self, "assignments", a)
        if self.protocol not in ("kfold", "holdout"):
            raise ValueError(f"unknown fold protocol {self.protocol!r}")
        if self.protocol == "holdout" and self.K != 2:
            raise ValueError("holdout plans have exactly two parts")
        if self.K < 2:
            raise FoldTooSmall("need at least two folds")
        if a.min(initial=0) < 0 or a.max(initial=0) >= self.K:
            raise ValueError("fold index out of range")
        counts = np.bincount(a, minlength=self.K)
        if np.any(counts == 0):
            raise FoldTooSmall(f"empty fold in plan (sizes {counts.tolist()})")

    @property
    def n_samples(self) -> int:
        return len(self.assignments)

    @property
    def prediction_rows(self) -> np.ndarray:
        if self.protocol == "holdout":
            return np.flatnonzero(self.assignments == 1)
        return np.arange(self.n_samples)

    def splits(self):
        """Yield (train_rows, predict_rows) pairs."""
        if self.protocol == "holdout":
            yield np.flatnonzero(self.assignments == 0), self.prediction_rows
            return
        for k in range(self.K):
            yield np.flatnonzero(self.assignments != k), np.flatnonzero(self.assignments == k)


def make_fold_plan(n: int, k: int = 5, seed: int = 0, labels=None) -> FoldPlan:
    """Seeded shuffle cut into ``k`` contiguous blocks.

    With ``labels`` the shuffled rows are grouped by class and dealt round-robin,
    so every fold sees each class in proportion.
    """
    if k < 2 or k > n:
        raise FoldTooSmall(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    assign = np.empty(n, dtype=int)
    if labels is None:
        for i, block in enumerate(np.array_split(perm, k)):
            assign[block] = i
    else:
        labels = np.asarray(labels)
        order = perm[np.argsort(labels[perm], kind="stable")]
        assign[order] = np.arange(n) % k
    return FoldPlan(k, assign, seed)


def make_holdout_plan(n: int, fraction: float = 0.5, seed: int = 0) -> FoldPlan:
    """Single split: ``fraction`` of the rows train the ensemble, the rest the members."""
    n_hold = int(round(n * fraction))
    n_hold = min(max(n_hold, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    assign = np.zeros(n, dtype=int)
    assign[perm[:n_hold]] = 1
    return FoldPlan(2, assign, seed, protocol="holdout")


def _member_ids(specs: Sequence[EstimatorSpec]) -> tuple:
    ids = []
    for j, spec in enumerate(specs):
        label = spec.label
        ids.append(label if label not in ids else f"{label}#{j}")
    return tuple(ids)


def build_prediction_cube(
    specs: Sequence[EstimatorSpec],
    data: Dataset,
    plan: FoldPlan,
    fitter: Callable = fit_estimator,
) -> PredictionCube:
    """Out-of-fold member predictions for the rows of ``plan.prediction_rows``."""
    validate_dataset(data)
    if plan.n_samples != data.n_samples:
        raise ShapeMismatch(f"plan covers {plan.n_samples} rows, data has {data.n_samples}")
    rows = plan.prediction_rows
    position = np.full(data.n_samples, -1)
    position[rows] = np.arange(len(rows))
    T, J = data.n_lead_times, len(specs)
    shape = (len(rows), J, T) + ((data.n_classes,) if data.is_classification else ())
    values = np.empty(shape)
    for train_rows, pred_rows in plan.splits():
        train = data.subset(train_rows)
        X_pred = data.features[pred_rows]
        for j, spec in enumerate(specs):
            est = fitter(spec, train)
            for t in range(T):
                values[position[pred_rows], j, t] = est.predict(X_pred, t)
    return PredictionCube(values, _member_ids(specs))


# -- the model -------------------------------------------------------------------


@dataclass(frozen=True)
class BatchPrediction:
    """Fused predictions for M queries at one lead time, with all weights."""

    fused: np.ndarray
    members: np.ndarray
    w_global: np.ndarray
    w_local: np.ndarray
    w_time: np.ndarray
    w_final: np.ndarray
    member_ids: tuple

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.fused, axis=-1)

    def breakdown(self, i: int) -> WeightBreakdown:
        return WeightBreakdown(
            self.w_global.copy(), self.w_local[i].copy(), self.w_time.copy(),
            self.w_final[i].copy(), self.member_ids,
        )


@dataclass(frozen=True)
class CsgeModel:
    """A fitted ensemble.

    ``members`` is None when the member predictions are produced outside this
    package; prediction then needs them passed in explicitly.
    """

    members: Optional[tuple]
    member_ids: tuple
    eta: EtaVector
    global_scores: GlobalScores
    local_memory: LocalMemory
    time_scores: TimeScores
    scorer: Scorer
    gate: SoftGateConfig
    n_features: int
    n_classes: Optional[int] = None
    config: dict = field(default_factory=dict)
    optimization: Optional[MinimizeResult] = field(default=None, compare=False, repr=False)

    @property
    def n_members(self) -> int:
        return len(self.member_ids)

    @property
    def n_lead_times(self) -> int:
        return self.time_scores.n_lead_times

    @property
    def is_classification(self) -> bool:
        return self.n_classes is not None

    def member_predictions(self, X, t: int = 0) -> np.ndarray:
        if self.members is None:
            raise NotFitted("model uses external members; pass member_predictions")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([m.predict(X, t) for m in self.members], axis=1)

    def predict_batch(self, X, t: int = 0, member_predictions=None) -> BatchPrediction:
        if not 0 <= t < self.n_lead_times:
            raise LeadTimeOutOfRange(f"lead time {t} outside 0..{self.n_lead_times - 1}")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ShapeMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        if member_predictions is None:
            P = self.member_predictions(X, t)
        else:
            P = np.asarray(member_predictions, dtype=float)
            expected = (X.shape[0], self.n_members) + ((self.n_classes,) if self.n_classes else ())
            if P.shape != expected:
                raise ShapeMismatch(f"member predictions {P.shape}, expected {expected}")
        eta = self.eta
        log_g = log_soft_gate(self.global_scores.R, eta.eta_global, self.gate)
        log_l = log_soft_gate(local_errors_batch(self.local_memory, X), eta.eta_local, self.gate)
        log_t = log_soft_gate(self.time_scores.r_t[t], eta.eta_time, self.gate)
        w = combine_log_weights(log_g[None, :], log_l, log_t[None, :])
        fused = fuse(w, P, self.is_classification)
        if self.is_classification:
            fused = fused / fused.sum(axis=-1, keepdims=True)
        return BatchPrediction(
            fused, P, np.exp(log_g), np.exp(log_l), np.exp(log_t), w, self.member_ids
        )

    def predict(self, x, t: int = 0, member_predictions=None):
        """Fused prediction for one feature vector and its weight breakdown.

        Classification returns the winning class index.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ShapeMismatch("predict takes one feature vector; use predict_batch")
        mp = None if member_predictions is None else np.asarray(member_predictions)[None]
        batch = self.predict_batch(x[None, :], t, mp)
        value = int(batch.labels[0]) if self.is_classification else float(batch.fused[0])
        return value, batch.breakdown(0)

    def predict_proba(self, X, t: int = 0, member_predictions=None) -> np.ndarray:
        if not self.is_classification:
            raise ValueError("predict_proba is only defined for classification")
        return self.predict_batch(X, t, member_predictions).fused


def _default_scorer(data: Dataset) -> Scorer:
    return Scorer("zero_one_error" if data.is_classification else "absolute_error")


def _weighting_from_cube(cube, data, scorer, n_dim, n_neighbors):
    y = data.target_matrix()
    glob = fit_global(cube, y, scorer)
    tim = fit_time(cube, y, scorer)
    # local weighting ignores the lead-time axis and uses t=0 errors
    errors = scorer(cube.values[:, :, 0], y[:, None, 0])
    memory = build_local_memory(data.features, errors, n_dim, n_neighbors)
    return glob, memory, tim


def _context(cube, data, glob, memory, tim, gate) -> EvalContext:
    # a training row never uses its own stored error for its local weight
    Q = local_errors_batch(memory, data.features, exclude_rows=np.arange(data.n_samples))
    return EvalContext(
        np.moveaxis(cube.values, 1, 2),
        data.target_matrix(),
        glob.R,
        Q,
        tim.r_t,
        data.n_classes,
        gate,
    )


def fit_from_cube(
    cube: PredictionCube,
    data: Dataset,
    obj_cfg: Optional[ObjectiveConfig] = None,
    *,
    n_dim: Optional[int] = None,
    n_neighbors: Optional[int] = None,
    scorer: Optional[Scorer] = None,
    members: Optional[tuple] = None,
    config: Optional[dict] = None,
) -> CsgeModel:
    """Fit the weighting and exponents on an existing prediction cube.

    ``data`` holds exactly the rows the cube predicts. ``members`` are the
    final fitted members, or None for externally produced predictions.
    """
    validate_dataset(data)
    if cube.n_members < 2:
        raise ShapeMismatch("an ensemble needs at least two members")
    if cube.n_samples != data.n_samples or cube.n_lead_times != data.n_lead_times:
        raise ShapeMismatch(
            f"cube ({cube.n_samples}, {cube.n_lead_times}) does not match data "
            f"({data.n_samples}, {data.n_lead_times})"
        )
    if cube.is_probabilistic != data.is_classification:
        raise ShapeMismatch("classification needs probability predictions and vice versa")
    obj_cfg = obj_cfg or ObjectiveConfig()
    scorer = scorer or _default_scorer(data)
    gate = SoftGateConfig(eta_max=obj_cfg.eta_max)
    glob, memory, tim = _weighting_from_cube(cube, data, scorer, n_dim, n_neighbors)
    result = minimize(obj_cfg, _context(cube, data, glob, memory, tim, gate))
    snapshot = {
        "objective": {
            "c_reg": obj_cfg.c_reg,
            "use_penalty_heuristic": obj_cfg.use_penalty_heuristic,
            "eta_max": obj_cfg.eta_max,
            "grid_resolution": obj_cfg.grid_resolution,
            "max_refine_iters": obj_cfg.max_refine_iters,
            "tolerance": obj_cfg.tolerance,
        },
        "n_dim": int(memory.projection.basis.shape[1]),
        "n_neighbors": int(memory.k_neighbors),
    }
    snapshot.update(config or {})
    return CsgeModel(
        members=members,
        member_ids=cube.member_ids,
        eta=result.eta,
        global_scores=glob,
        local_memory=memory,
        time_scores=tim,
        scorer=scorer,
        gate=gate,
        n_features=data.n_features,
        n_classes=data.n_classes,
        config=snapshot,
        optimization=result,
    )


def _heldout_error(model: CsgeModel, cube: PredictionCube, data: Dataset) -> float:
    errs = []
    y = data.target_matrix()
    for t in range(data.n_lead_times):
        batch = model.predict_batch(data.features, t, cube.values[:, :, t])
        pred = batch.labels if model.is_classification else batch.fused
        errs.append(model.scorer(pred, y[:, t]))
    return float(np.mean(errs))


def select_hyperparams(
    cube: PredictionCube,
    data: Dataset,
    obj_cfg: ObjectiveConfig,
    search: dict,
    *,
    n_dim=None,
    n_neighbors=None,
    scorer=None,
    k: int = 5,
    seed: int = 0,
) -> tuple:
    """Grid search ``c_reg`` and the neighbour count on the cube itself.

    Each candidate is scored by the configured scorer on held-out cube rows
    of an inner k-fold split. Returns ``(c_reg, n_neighbors, table)``.
    """
    scorer = scorer or _default_scorer(data)
    c_grid = list(search.get("c_reg", [obj_cfg.c_reg]))
    k_grid = list(search.get("n_neighbors", [n_neighbors]))
    labels = data.targets if data.is_classification else None
    plan = make_fold_plan(data.n_samples, min(k, data.n_samples), seed, labels)
    table = []
    for c in c_grid:
        for nn in k_grid:
            cfg = replace(obj_cfg, c_reg=float(c))
            scores = []
            for train_rows, test_rows in plan.splits():
                sub = PredictionCube(cube.values[train_rows], cube.member_ids)
                model = fit_from_cube(
                    sub, data.subset(train_rows), cfg,
                    n_dim=n_dim, n_neighbors=nn, scorer=scorer,
                )
                held = PredictionCube(cube.values[test_rows], cube.member_ids)
                scores.append(_heldout_error(model, held, data.subset(test_rows)))
            table.append((float(c), nn, float(np.mean(scores))))
    best = min(range(len(table)), key=lambda i: table[i][2])
    return table[best][0], table[best][1], table


def fit(
    specs: Sequence[EstimatorSpec],
    data: Dataset,
    plan: Optional[FoldPlan] = None,
    obj_cfg: Optional[ObjectiveConfig] = None,
    *,
    n_dim: Optional[int] = None,
    n_neighbors: Optional[int] = None,
    scorer: Optional[Scorer] = None,
    search: Optional[dict] = None,
    fitter: Callable = fit_estimator,
    seed: int = 0,
) -> CsgeModel:
    """Build the out-of-fold cube, fit weights and exponents, refit the members."""
    validate_dataset(data)
    specs = list(specs)
    if len(specs) < 2:
        raise ShapeMismatch("an ensemble needs at least two members")
    obj_cfg = obj_cfg or ObjectiveConfig()
    if plan is None:
        labels = data.targets if data.is_classification else None
        plan = make_fold_plan(data.n_samples, min(5, data.n_samples), seed, labels)
    cube = build_prediction_cube(specs, data, plan, fitter)
    rows = plan.prediction_rows
    ens_data = data.subset(rows)
    extra = {"fold_plan": {"K": plan.K, "seed": plan.seed, "protocol": plan.protocol}}
    if search:
        c_reg, n_neighbors, table = select_hyperparams(
            cube, ens_data, obj_cfg, search,
            n_dim=n_dim, n_neighbors=n_neighbors, scorer=scorer, seed=seed,
        )
        obj_cfg = replace(obj_cfg, c_reg=c_reg)
        extra["search"] = [list(row) for row in table]
    if plan.protocol == "holdout":
        member_data = data.subset(np.flatnonzero(plan.assignments == 0))
    else:
        member_data = data
    members = tuple(fitter(spec, member_data) for spec in specs)
    return fit_from_cube(
        cube, ens_data, obj_cfg,
        n_dim=n_dim, n_neighbors=n_neighbors, scorer=scorer,
        members=members, config=extra,
    )


# -- evaluation ------------------------------------------------------------------


def _metric(pred, truth, classification: bool) -> float:
    if classification:
        return float(np.mean(np.argmax(pred, axis=-1) != truth))
    return float(np.sqrt(np.mean((np.asarray(pred) - truth) ** 2)))


def evaluate(model: CsgeModel, test: Dataset, member_predictions=None) -> dict:
    """Error of every member and of the ensemble on ``test``.

    Regression reports RMSE over all (sample, lead time) pairs; classification
    reports the misclassification rate. ``member_predictions`` is an
    ``(M, J, T[, C])`` array for models with external members.
    """
    validate_dataset(test)
    y = test.target_matrix()
    cls = model.is_classification
    fused, members = [], []
    for t in range(model.n_lead_times):
        mp = None if member_predictions is None else np.asarray(member_predictions)[:, :, t]
        batch = model.predict_batch(test.features, t, mp)
        fused.append(batch.fused)
        members.append(batch.members)
    fused = np.stack(fused, axis=1)
    members = np.stack(members, axis=2)
    report = {"csge": _metric(fused, y, cls)}
    mean_pred = members.mean(axis=1)
    report["averaging"] = _metric(mean_pred, y, cls)
    report["members"] = {
        mid: _metric(members[:, j], y, cls) for j, mid in enumerate(model.member_ids)
    }
    return report


@dataclass
class EvaluationReport:
    """Per-fold metrics of every member and ensemble over repeated CV."""

    metric: str
    rows: dict
    etas: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            name: {
                "mean": float(np.mean(v)),
                "std": float(np.std(v)),
                "min": float(np.min(v)),
                "max": float(np.max(v)),
            }
            for name, v in self.rows.items()
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "metric", "mean", "std", "min", "max", "n_folds"])
        for name, s in self.summary().items():
            w.writerow([name, self.metric, *(repr(s[k]) for k in ("mean", "std", "min", "max")),
                        len(self.rows[name])])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = [
            f"| model | mean {self.metric} | std | min | max |",
            "|---|---|---|---|---|",
        ]
        for name, s in self.summary().items():
            lines.append(
                f"| {name} | {s['mean']:.4f} | {s['std']:.4f} | {s['min']:.4f} | {s['max']:.4f} |"
            )
        return "\n".join(lines) + "\n"


def cross_validate(
    specs: Sequence[EstimatorSpec],
    data: Dataset,
    n_folds: int = 10,
    seeds: Sequence[int] = tuple(range(10)),
    inner_folds: int = 5,
    **fit_kwargs,
) -> EvaluationReport:
    """Repeated k-fold evaluation of the members, plain averaging and the ensemble."""
    validate_dataset(data)
    labels = data.targets if data.is_classification else None
    rows: dict = {}
    etas = []
    for seed in seeds:
        plan = make_fold_plan(data.n_samples, n_folds, seed, labels)
        for train_rows, test_rows in plan.splits():
            train, test = data.subset(train_rows), data.subset(test_rows)
            inner_labels = train.targets if train.is_classification else None
            inner = make_fold_plan(train.n_samples, inner_folds, seed, inner_labels)
            model = fit(specs, train, inner, seed=seed, **fit_kwargs)
            result = evaluate(model, test)
            for mid, v in result["members"].items():
                rows.setdefault(mid, []).append(v)
            rows.setdefault("averaging", []).append(result["averaging"])
            rows.setdefault("csge", []).append(result["csge"])
            etas.append(model.eta.as_array().tolist())
    metric = "error_rate" if data.is_classification else "rmse"
    return EvaluationReport(metric, {k: np.array(v) for k, v in rows.items()}, etas)
