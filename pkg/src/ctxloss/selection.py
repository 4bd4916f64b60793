"""Greedy information-based feature ranking and dimensionality selection.

Ranking picks, at every step, the unselected feature whose information
about the loss minus its redundancy with already-selected features is
largest (ties to the lowest feature index). Dimensionality selection plays
deployment inside the test set: repeatedly split into fit and validation
halves, fit a loss map on the fit rows over the top-K features, predict
the validation loss, and keep the K whose mean absolute error is smallest.
Both are deterministic given the table, the seed, and the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ctxloss.data import SampleTable, ValidationError, empirical_loss
from ctxloss.infotheory import LOSS, mutual_information
from ctxloss.seeding import stream
from ctxloss.subspace import build_subspace, domain_from_samples, fit_loss_map, predict

DEFAULT_ITERATIONS = 50
DEFAULT_SPLIT = 0.5
DEFAULT_K_CAP = 6
# Relative improvement over the K=1 error below which the curve counts as
# flat; the error floor scales with the table, so an absolute cutoff cannot
# separate flat from dipping curves.
FLAT_TOLERANCE = 0.10


@dataclass(frozen=True)
class RankedFeatures:
    """Greedy ranking output: selection order, winning scores, and the full
    per-iteration score tables for reporting."""

    order: tuple
    feature_names: tuple
    scores: tuple
    per_iteration_scores: tuple

    def __post_init__(self):
        if not (len(self.order) == len(self.feature_names) == len(self.scores)):
            raise ValidationError("order, names and scores must align")
        if len(set(self.order)) != len(self.order):
            raise ValidationError("ranking order must not repeat features")

    def top(self, k: int) -> tuple:
        return self.order[:k]

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "feature_names": list(self.feature_names),
            "scores": list(self.scores),
            "per_iteration_scores": [
                [{"index": i, "feature": name, "score": s} for i, name, s in it]
                for it in self.per_iteration_scores
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankedFeatures":
        return cls(
            order=tuple(d["order"]),
            feature_names=tuple(d["feature_names"]),
            scores=tuple(d["scores"]),
            per_iteration_scores=tuple(
                tuple((e["index"], e["feature"], e["score"]) for e in it)
                for it in d["per_iteration_scores"]
            ),
        )


def greedy_rank(table: SampleTable, k_max: int = None) -> RankedFeatures:
    """Rank features greedily by redundancy-adjusted information.

    Iteration one reduces to plain max mutual information with the loss.
    Pairwise feature-feature information is computed once per pair and
    cached as a running redundancy total, so iteration k scores the
    remaining J-k+1 candidates with no repeated work.
    """
    j = table.j
    k_max = j if k_max is None else int(k_max)
    if not 1 <= k_max <= j:
        raise ValidationError(f"k_max must be in [1, {j}]")
    names = table.schema.names
    mi_loss = np.array([mutual_information(table, LOSS, f) for f in range(j)])
    redundancy = np.zeros(j)
    available = list(range(j))
    order, chosen_scores, per_iteration = [], [], []
    for k in range(k_max):
        best_f, best_score = None, None
        table_k = []
        for f in available:
            score = float(mi_loss[f] - redundancy[f])
            table_k.append((f, names[f], score))
            if best_score is None or score > best_score:
                best_f, best_score = f, score
        per_iteration.append(tuple(table_k))
        order.append(best_f)
        chosen_scores.append(best_score)
        available.remove(best_f)
        if k + 1 < k_max:
            for f in available:
                redundancy[f] += mutual_information(table, best_f, f)
    return RankedFeatures(
        order=tuple(order),
        feature_names=tuple(names[f] for f in order),
        scores=tuple(chosen_scores),
        per_iteration_scores=tuple(per_iteration),
    )


def _partition(n: int, split: float, seed: int, iteration: int):
    """Deterministic fit/val row split from the (seed, iteration) stream."""
    if not 0.0 < split < 1.0:
        raise ValidationError("split must lie strictly between 0 and 1")
    n_fit = int(round(split * n))
    if n_fit == 0 or n_fit == n:
        raise ValidationError(
            f"split {split} leaves an empty fit or validation partition for n={n}"
        )
    perm = stream(seed, "split", iteration).permutation(n)
    return perm[:n_fit], perm[n_fit:]


def expected_prediction_error(
    table: SampleTable,
    ranked: RankedFeatures,
    k: int,
    iterations: int = DEFAULT_ITERATIONS,
    split: float = DEFAULT_SPLIT,
    seed: int = 0,
):
    """Mean within-test prediction error of the top-k subspace.

    Each iteration fits a loss map on a random fit half and predicts the
    validation half's mean loss through its empirical cell distribution;
    validation cells untested in the fit half get the maximum loss, the
    same conservative imputation used at deployment. Returns the mean error
    and the raw per-iteration errors.
    """
    if not 1 <= k <= len(ranked.order):
        raise ValidationError(f"k must be in [1, {len(ranked.order)}]")
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    sub = build_subspace(table.schema, ranked.order[:k])
    errors = []
    for it in range(iterations):
        fit_idx, val_idx = _partition(table.n, split, seed, it)
        fit_table = table.subset(fit_idx)
        val_table = table.subset(val_idx)
        loss_map = fit_loss_map(fit_table, sub)
        val_domain = domain_from_samples(val_table, sub, label="val")
        predicted = predict(loss_map, val_domain).predicted_loss
        errors.append(abs(empirical_loss(val_table) - predicted))
    return float(np.mean(errors)), errors


@dataclass(frozen=True)
class DimensionalityReport:
    """Error curve over K with the argmin choice and its provenance."""

    epsilon_tilde: tuple
    per_iteration_errors: tuple
    chosen_k: int
    iterations: int
    split_fraction: float
    seed: int
    context_uninformative: bool
    flat_tolerance: float

    def to_dict(self) -> dict:
        return {
            "epsilon_tilde": list(self.epsilon_tilde),
            "per_iteration_errors": [list(e) for e in self.per_iteration_errors],
            "chosen_k": self.chosen_k,
            "iterations": self.iterations,
            "split_fraction": self.split_fraction,
            "seed": self.seed,
            "context_uninformative": self.context_uninformative,
            "flat_tolerance": self.flat_tolerance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DimensionalityReport":
        return cls(
            epsilon_tilde=tuple(d["epsilon_tilde"]),
            per_iteration_errors=tuple(tuple(e) for e in d["per_iteration_errors"]),
            chosen_k=d["chosen_k"],
            iterations=d["iterations"],
            split_fraction=d["split_fraction"],
            seed=d["seed"],
            context_uninformative=d["context_uninformative"],
            flat_tolerance=d["flat_tolerance"],
        )


def select_dimensionality(
    table: SampleTable,
    ranked: RankedFeatures,
    k_max: int = None,
    iterations: int = DEFAULT_ITERATIONS,
    split: float = DEFAULT_SPLIT,
    seed: int = 0,
    flat_tolerance: float = FLAT_TOLERANCE,
) -> DimensionalityReport:
    """Pick the subspace dimensionality with the smallest mean error.

    All K share the same per-iteration partitions (common random numbers),
    so the curve differences reflect the subspaces, not split luck. Ties go
    to the smallest K.

    A curve that never improves on the K=1 error by more than the relative
    ``flat_tolerance`` is flagged as context-uninformative (flat or rising).
    The flag reads the curve only from K=1 on, so a context whose single
    best feature already saturates prediction also shows up as flat.
    """
    if k_max is None:
        k_max = min(len(ranked.order), DEFAULT_K_CAP)
    if not 1 <= k_max <= len(ranked.order):
        raise ValidationError(f"k_max must be in [1, {len(ranked.order)}]")
    eps_tilde, raw = [], []
    for k in range(1, k_max + 1):
        mean_err, errors = expected_prediction_error(
            table, ranked, k, iterations=iterations, split=split, seed=seed
        )
        eps_tilde.append(mean_err)
        raw.append(tuple(errors))
    chosen = int(np.argmin(eps_tilde)) + 1
    uninformative = k_max >= 2 and all(
        e >= eps_tilde[0] * (1.0 - flat_tolerance) for e in eps_tilde[1:]
    )
    return DimensionalityReport(
        epsilon_tilde=tuple(eps_tilde),
        per_iteration_errors=tuple(raw),
        chosen_k=chosen,
        iterations=iterations,
        split_fraction=split,
        seed=seed,
        context_uninformative=uninformative,
        flat_tolerance=flat_tolerance,
    )
