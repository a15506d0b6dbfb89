"""Training and prediction for the granular ensemble.

Training: generate meta-data of the training set by stratified T-fold
cross-validation, grid-search the specificity weight alpha against the
training-set error of the granular combiner, then refit all base
classifiers on the full training set.  Prediction assembles the posterior
profile from the refitted classifiers, builds per-class intervals, and
decides by maximum numerical class membership.

Caveat: alpha is selected on the same meta-data its error is measured on
(no nested validation), so the reported alpha-error curve is optimistically
biased as a generalization estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import combiners
from .combiners import DEFAULT_H, Granule, granular_intervals, ncm
from .learners import Dataset, FittedClassifier, LearnerSpec, fit
from .metadata import ClassCatalog, MetaMatrix, MetaProfile

__all__ = [
    "AlphaGrid",
    "FoldPlan",
    "TrainedEnsemble",
    "PredictionDetail",
    "TrainingError",
    "default_alpha_grid",
    "derive_seed",
    "make_fold_plan",
    "generate_meta_cv",
    "error_for_alpha",
    "select_alpha",
    "train",
    "predict",
    "predict_batch",
    "save_ensemble",
    "load_ensemble",
]

ENSEMBLE_FORMAT_VERSION = 1


class TrainingError(ValueError):
    pass


def derive_seed(master: int, *parts: int) -> int:
    """Derive an independent child seed from a master seed and a tuple of
    integer coordinates, splitmix64-style, so parallel schedules cannot
    change which seed a task receives."""
    z = master & 0xFFFFFFFFFFFFFFFF
    for part in parts:
        z = (z + 0x9E3779B97F4A7C15 + part) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        z = z ^ (z >> 31)
    return z


@dataclass(frozen=True)
class AlphaGrid:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise TrainingError("empty alpha grid")
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise TrainingError("alpha grid values must be finite and >= 0")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise TrainingError("alpha grid must be strictly increasing")
        object.__setattr__(self, "values", vals)


def default_alpha_grid() -> AlphaGrid:
    """The 41-point grid {0, 0.1, ..., 4}."""
    return AlphaGrid(tuple(round(0.1 * i, 1) for i in range(41)))


@dataclass(frozen=True)
class FoldPlan:
    assignments: np.ndarray  # (N,) fold index per observation
    n_folds: int
    seed: int

    def __post_init__(self) -> None:
        a = np.asarray(self.assignments, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def fold_indices(self, t: int) -> np.ndarray:
        return np.nonzero(self.assignments == t)[0]

    def complement_indices(self, t: int) -> np.ndarray:
        return np.nonzero(self.assignments != t)[0]


def make_fold_plan(labels: np.ndarray, n_folds: int, seed: int) -> FoldPlan:
    """Stratified fold assignment: per-class and overall fold sizes each
    differ by at most one."""
    labels = np.asarray(labels, dtype=np.int64)
    if n_folds < 2:
        raise TrainingError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(labels), dtype=np.int64)
    cursor = 0  # global round-robin pointer keeps overall sizes balanced
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        rng.shuffle(idx)
        for i in idx:
            assignments[i] = cursor % n_folds
            cursor += 1
    return FoldPlan(assignments, n_folds, seed)


def generate_meta_cv(
    data: Dataset,
    specs: Sequence[LearnerSpec],
    plan: FoldPlan,
    seed: int,
) -> MetaMatrix:
    """Meta-data of the training set: the profile of each observation in
    fold t comes from classifiers fitted on all other folds."""
    n = data.n_observations
    k = len(specs)
    m = data.catalog.size
    scores = np.empty((n, k, m))
    for t in range(plan.n_folds):
        held = plan.fold_indices(t)
        rest = plan.complement_indices(t)
        rest_labels = data.labels[rest]
        for c in range(m):
            if not (rest_labels == c).any():
                raise TrainingError(
                    f"class {data.catalog.labels[c]!r} absent from the "
                    f"training complement of fold {t}"
                )
        train_part = data.subset(rest)
        test_features = data.features[held]
        for j, spec in enumerate(specs):
            model = fit(spec, train_part, derive_seed(seed, t, j))
            scores[held, j, :] = model.predict_proba_batch(test_features)
    ids = tuple(spec.name for spec in specs)
    return MetaMatrix(scores, data.catalog, ids)


def error_for_alpha(
    meta: MetaMatrix, labels: np.ndarray, alpha: float, h: str = DEFAULT_H
) -> float:
    """Fraction of observations the granular combiner misclassifies."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != meta.n_observations:
        raise TrainingError("labels length does not match meta matrix")
    decisions = combiners.granular_decide_batch(meta.scores, alpha, h)
    return float(np.mean(decisions != labels))


def select_alpha(
    meta: MetaMatrix,
    labels: np.ndarray,
    grid: AlphaGrid,
    h: str = DEFAULT_H,
) -> tuple[float, list[tuple[float, float]]]:
    """Grid value with the lowest meta-level error; ties go to the smallest
    alpha. Returns (alpha, full error curve)."""
    curve = [(a, error_for_alpha(meta, labels, a, h)) for a in grid.values]
    best_alpha, _ = min(curve, key=lambda pair: (pair[1], pair[0]))
    return best_alpha, curve


@dataclass(frozen=True)
class TrainedEnsemble:
    classifiers: tuple[FittedClassifier, ...]
    alpha: float
    h: str
    catalog: ClassCatalog
    alpha_error_curve: tuple[tuple[float, float], ...] = field(default=())

    @property
    def classifier_ids(self) -> tuple[str, ...]:
        return tuple(c.spec.name for c in self.classifiers)


def train(
    data: Dataset,
    specs: Sequence[LearnerSpec],
    seed: int,
    grid: AlphaGrid | None = None,
    fixed_alpha: float | None = None,
    h: str = DEFAULT_H,
    n_folds: int = 10,
) -> TrainedEnsemble:
    """Full training pass.

    Grid mode (grid given): meta-data by n_folds-fold CV, alpha by grid
    search. Fixed mode (fixed_alpha given): no CV and no search; the
    combiner behaves as a fixed combining rule.
    """
    if (grid is None) == (fixed_alpha is None):
        raise TrainingError("provide exactly one of grid or fixed_alpha")
    if len(specs) < 2:
        raise TrainingError("need at least two base learners")
    if h not in combiners.H_KINDS:
        raise TrainingError(f"unknown h function {h!r}")

    if grid is not None:
        if n_folds < 2:
            raise TrainingError("need at least 2 folds")
        counts = np.bincount(data.labels, minlength=data.catalog.size)
        short = [
            data.catalog.labels[c] for c in range(data.catalog.size)
            if counts[c] < n_folds
        ]
        if short:
            raise TrainingError(
                f"classes with fewer observations than folds: {short}"
            )
        plan = make_fold_plan(data.labels, n_folds, derive_seed(seed, 0xF01D))
        meta = generate_meta_cv(data, specs, plan, seed)
        alpha, curve = select_alpha(meta, data.labels, grid, h)
    else:
        alpha = float(fixed_alpha)
        if alpha < 0 or not np.isfinite(alpha):
            raise TrainingError("fixed alpha must be finite and >= 0")
        curve = []

    models = tuple(
        fit(spec, data, derive_seed(seed, 0xF111, j))
        for j, spec in enumerate(specs)
    )
    return TrainedEnsemble(
        classifiers=models,
        alpha=alpha,
        h=h,
        catalog=data.catalog,
        alpha_error_curve=tuple(curve),
    )


@dataclass(frozen=True)
class PredictionDetail:
    """All stages of one granular prediction, for inspection."""

    profile: MetaProfile
    intervals: tuple[Granule, ...]
    memberships: tuple[float, ...]
    decision: int


def ensemble_profiles(ensemble: TrainedEnsemble, x: np.ndarray) -> np.ndarray:
    """(n, K, M) posterior profiles from the refitted base classifiers."""
    x = np.asarray(x, dtype=np.float64)
    return np.stack(
        [model.predict_proba_batch(x) for model in ensemble.classifiers], axis=1
    )


def predict(ensemble: TrainedEnsemble, x: Sequence[float]) -> PredictionDetail:
    return predict_batch(ensemble, np.asarray(x, dtype=np.float64)[None, :])[0]


def predict_batch(
    ensemble: TrainedEnsemble, x: np.ndarray
) -> list[PredictionDetail]:
    profiles = ensemble_profiles(ensemble, x)
    out = []
    for i in range(profiles.shape[0]):
        profile = MetaProfile(profiles[i], ensemble.classifier_ids)
        intervals = tuple(granular_intervals(profile, ensemble.alpha))
        values = tuple(ncm(g, ensemble.h) for g in intervals)
        out.append(
            PredictionDetail(
                profile=profile,
                intervals=intervals,
                memberships=values,
                decision=int(np.argmax(values)),
            )
        )
    return out


def save_ensemble(path, ensemble: TrainedEnsemble) -> None:
    payload = {
        "format_version": ENSEMBLE_FORMAT_VERSION,
        "alpha": ensemble.alpha,
        "h": ensemble.h,
        "catalog": list(ensemble.catalog.labels),
        "alpha_error_curve": [list(p) for p in ensemble.alpha_error_curve],
        "classifiers": [c.to_state() for c in ensemble.classifiers],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_ensemble(path) -> TrainedEnsemble:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != ENSEMBLE_FORMAT_VERSION:
        raise TrainingError(f"unsupported ensemble format version {version!r}")
    return TrainedEnsemble(
        classifiers=tuple(
            FittedClassifier.from_state(c) for c in payload["classifiers"]
        ),
        alpha=float(payload["alpha"]),
        h=payload["h"],
        catalog=ClassCatalog(tuple(payload["catalog"])),
        alpha_error_curve=tuple(
            (float(a), float(e)) for a, e in payload["alpha_error_curve"]
        ),
    )
