"""Plug-in information measures over discrete sample tables.

All quantities are in nats and use empirical cell frequencies with the
0 * log 0 = 0 convention: cells with zero joint mass are skipped. Cells are
visited in row-major order, so repeated evaluations are bit-identical and
independent of row order (counts are exact integers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ctxloss.data import SampleTable, ValidationError


class _LossSelector:
    def __repr__(self):
        return "LOSS"


#: Column selector naming the loss variable in information queries.
LOSS = _LossSelector()


def _column(table: SampleTable, selector):
    """Resolve a selector (LOSS, feature index, or feature name) to
    (codes, cardinality)."""
    if selector is LOSS:
        return table.loss_codes, len(table.support.values)
    if isinstance(selector, str):
        selector = table.schema.index_of(selector)
    if not 0 <= selector < table.j:
        raise ValidationError(f"feature index {selector} out of range")
    return table.codes[:, selector], table.schema.features[selector].cardinality


@dataclass(frozen=True)
class JointDistribution:
    """Dense empirical joint distribution over one or more discrete axes.

    Counts are kept as exact integers; probability mass is derived, so
    marginalizing over any axis reproduces the lower-order empirical
    distribution exactly.
    """

    axes: tuple
    counts: np.ndarray
    n: int

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        axes = tuple(int(a) for a in self.axes)
        if counts.shape != axes:
            raise ValidationError("counts shape must match axes")
        if (counts < 0).any():
            raise ValidationError("counts must be non-negative")
        if counts.sum() != self.n or self.n <= 0:
            raise ValidationError("counts must sum to the number of rows")
        counts.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "counts", counts)

    @cached_property
    def mass(self) -> np.ndarray:
        mass = self.counts / self.n
        mass.setflags(write=False)
        return mass

    def marginal(self, keep) -> "JointDistribution":
        """Marginal over the kept axes (by position, order preserved)."""
        keep = tuple(keep)
        drop = tuple(i for i in range(len(self.axes)) if i not in keep)
        counts = self.counts.sum(axis=drop) if drop else self.counts
        # After summing, remaining axes sit in ascending original order;
        # put them back into the requested order.
        counts = np.moveaxis(counts, list(range(len(keep))), list(np.argsort(keep)))
        return JointDistribution(tuple(self.axes[i] for i in keep), counts, self.n)


def joint_distribution(table: SampleTable, features=(), include_loss=False) -> JointDistribution:
    """Empirical joint over the selected columns; loss axis first if included."""
    selectors = ([LOSS] if include_loss else []) + list(features)
    if not selectors:
        raise ValidationError("select at least one column")
    cols, cards = zip(*(_column(table, s) for s in selectors))
    flat = np.ravel_multi_index(cols, dims=cards)
    counts = np.bincount(flat, minlength=int(np.prod(cards))).reshape(cards)
    return JointDistribution(tuple(cards), counts, table.n)


def _entropy_nats(counts: np.ndarray, n: int) -> float:
    c = counts[counts > 0].astype(np.float64)
    return float((c / n * (math.log(n) - np.log(c))).sum())


def mutual_information(table: SampleTable, a, b) -> float:
    """I(A, B) = sum p(a,b) log[p(a,b) / (p(a) p(b))], symmetric, >= 0 up to
    float slack."""
    ca, ka = _column(table, a)
    cb, kb = _column(table, b)
    flat = np.ravel_multi_index((ca, cb), dims=(ka, kb))
    counts = np.bincount(flat, minlength=ka * kb).reshape(ka, kb)
    return _mi_from_counts(counts, table.n)


def _mi_from_counts(counts: np.ndarray, n: int) -> float:
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    i, j = np.nonzero(counts)
    c = counts[i, j].astype(np.float64)
    # log[p(ab)/(p(a)p(b))] = log c + log n - log c_a - log c_b
    terms = (c / n) * (np.log(c) + math.log(n) - np.log(row[i]) - np.log(col[j]))
    return float(terms.sum())


def conditional_mutual_information(table: SampleTable, a, b, given) -> float:
    """I(A, B | G) = sum p(a,b,g) log[p(g) p(a,b,g) / (p(a,g) p(b,g))].

    Equals the p(g)-weighted average of I(A, B) within each slice of G, and
    is non-negative up to float slack.
    """
    ca, ka = _column(table, a)
    cb, kb = _column(table, b)
    cg, kg = _column(table, given)
    flat = np.ravel_multi_index((ca, cb, cg), dims=(ka, kb, kg))
    counts = np.bincount(flat, minlength=ka * kb * kg).reshape(ka, kb, kg)
    n_ag = counts.sum(axis=1)
    n_bg = counts.sum(axis=0)
    n_g = counts.sum(axis=(0, 1))
    i, j, g = np.nonzero(counts)
    c = counts[i, j, g].astype(np.float64)
    # n cancels: p(g)p(abg)/(p(ag)p(bg)) = c_g * c_abg / (c_ag * c_bg)
    terms = (c / table.n) * (np.log(c) + np.log(n_g[g]) - np.log(n_ag[i, g]) - np.log(n_bg[j, g]))
    return float(terms.sum())


def interaction_information(table: SampleTable, features, cell_cap: int = 1_000_000) -> float:
    """Multi-way information between the loss and an ordered feature list.

    Defined recursively: the K-feature value equals the (K-1)-feature value
    minus the same quantity conditioned on the last feature, grounding out
    at plain mutual information for a single feature. Can be positive or
    negative. Cost grows exponentially with the feature count; this is the
    exact small-K oracle, guarded by ``cell_cap`` on the enumerated grid.
    """
    feats = [f if isinstance(f, int) else table.schema.index_of(f) for f in features]
    if not feats:
        raise ValidationError("at least one feature is required")
    if len(set(feats)) != len(feats):
        raise ValidationError("features must be distinct")
    cells = 1
    for f in feats:
        cells *= table.schema.features[f].cardinality
    if cells > cell_cap:
        raise ValidationError(
            f"interaction oracle would enumerate {cells} cells, above the cap of {cell_cap}"
        )
    return _interaction(table, feats)


def _interaction(table: SampleTable, feats) -> float:
    if len(feats) == 1:
        return mutual_information(table, LOSS, feats[0])
    rest = feats[:-1]
    codes, card = _column(table, feats[-1])
    conditional = 0.0
    for value in range(card):
        idx = np.flatnonzero(codes == value)
        if idx.size == 0:
            continue
        conditional += (idx.size / table.n) * _interaction(table.subset(idx), rest)
    return _interaction(table, rest) - conditional


def information_gain(table: SampleTable, candidate, selected=()) -> float:
    """Net new information a candidate feature adds about the loss.

    The candidate's mutual information with the loss minus its summed
    pairwise mutual information with each already-selected feature (the
    redundancy). With nothing selected this is plain mutual information.
    Cost is linear in the number of selected features; the result may be
    negative for redundant candidates.
    """
    cand = candidate if isinstance(candidate, int) else table.schema.index_of(candidate)
    chosen = [f if isinstance(f, int) else table.schema.index_of(f) for f in selected]
    if cand in chosen:
        raise ValidationError(f"candidate feature {candidate!r} is already selected")
    score = mutual_information(table, LOSS, cand)
    for f in chosen:
        score -= mutual_information(table, f, cand)
    return score
