"""Scikit-learn style wrappers around the functional pipeline.

These estimators accept pandas DataFrames or 2-D arrays of raw feature
values (strings and numbers mixed), so the toolkit composes with the usual
fit/transform/predict ecosystem. The functional modules remain the source
of truth; nothing here adds behavior beyond input adaptation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ctxloss.data import (
    RawTable,
    SampleTable,
    ValidationError,
    discretize,
    encode_contexts,
    finalize_schema,
    infer_schema,
)
from ctxloss.selection import greedy_rank, select_dimensionality
from ctxloss.subspace import (
    build_subspace,
    domain_from_marginals,
    domain_from_samples,
    fit_loss_map,
    predict,
)


def _raw_table(X, feature_names=None, losses=None) -> RawTable:
    if hasattr(X, "columns") and hasattr(X, "to_numpy"):
        names = [str(c) for c in X.columns]
        columns = []
        for c in X.columns:
            col = X[c].to_numpy()
            if col.dtype.kind not in "fiu":
                col = np.asarray([str(v) for v in col])
            columns.append(col)
        return RawTable(tuple(names), tuple(columns), losses)
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-D array or DataFrame")
    if feature_names is None:
        names = [f"f{i}" for i in range(X.shape[1])]
    else:
        names = [str(n) for n in feature_names]
        if len(names) != X.shape[1]:
            raise ValidationError("feature_names length must match the columns of X")
    columns = []
    for i in range(X.shape[1]):
        col = X[:, i]
        if col.dtype.kind not in "fiu":
            col = np.asarray([str(v) for v in col])
        columns.append(col)
    return RawTable(tuple(names), tuple(columns), losses)


class ContextDiscretizer(TransformerMixin, BaseEstimator):
    """Fit a context schema on raw features and transform rows to codes.

    Numeric columns with more than ``max_numeric_levels`` distinct values
    are binned into ``bins`` uniform-width intervals over the fitted range;
    everything else becomes coded categories. Transform clamps numeric
    values outside the fitted range into the edge bins.
    """

    def __init__(self, bins=10, max_numeric_levels=10, feature_names=None):
        self.bins = bins
        self.max_numeric_levels = max_numeric_levels
        self.feature_names = feature_names

    def fit(self, X, y=None):
        raw = _raw_table(X, self.feature_names)
        provisional = infer_schema(raw, self.max_numeric_levels)
        self.schema_ = finalize_schema(provisional, self.bins)
        self.feature_names_in_ = list(raw.feature_names)
        self.n_features_in_ = len(raw.feature_names)
        return self

    def transform(self, X):
        check_is_fitted(self, "schema_")
        raw = _raw_table(X, self.feature_names_in_)
        return encode_contexts(raw, self.schema_).codes

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "schema_")
        return np.asarray(self.schema_.names, dtype=object)


class GreedyContextSelector(TransformerMixin, BaseEstimator):
    """Keep the k features ranked most informative about the loss."""

    def __init__(self, k=2, bins=10, max_numeric_levels=10, feature_names=None):
        self.k = k
        self.bins = bins
        self.max_numeric_levels = max_numeric_levels
        self.feature_names = feature_names

    def fit(self, X, y):
        raw = _raw_table(X, self.feature_names, losses=np.asarray(y, dtype=np.float64))
        table = discretize(raw, infer_schema(raw, self.max_numeric_levels), self.bins)
        if not 1 <= self.k <= table.j:
            raise ValidationError(f"k must be in [1, {table.j}]")
        self.ranking_ = greedy_rank(table)
        self.selected_indices_ = list(self.ranking_.order[: self.k])
        self.selected_features_ = list(self.ranking_.feature_names[: self.k])
        self.feature_names_in_ = list(raw.feature_names)
        self.n_features_in_ = len(raw.feature_names)
        return self

    def transform(self, X):
        check_is_fitted(self, "selected_indices_")
        if hasattr(X, "columns"):
            return X.loc[:, self.selected_features_]
        return np.asarray(X)[:, self.selected_indices_]

    def get_support(self):
        check_is_fitted(self, "selected_indices_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_indices_] = True
        return mask


class DomainLossPredictor(BaseEstimator):
    """End-to-end estimator: fit a loss map over an automatically selected
    context subspace, then predict expected loss in operating domains.

    ``fit`` takes raw context features and the per-sample loss. ``predict``
    returns each record's cell-level expected loss (max loss for untested
    cells), so the mean over a batch is the domain-level prediction for
    that batch's empirical context distribution; ``predict_domain`` returns
    the full report.
    """

    def __init__(
        self,
        k=None,
        k_max=None,
        bins=10,
        max_numeric_levels=10,
        iterations=50,
        split=0.5,
        seed=0,
        feature_names=None,
    ):
        self.k = k
        self.k_max = k_max
        self.bins = bins
        self.max_numeric_levels = max_numeric_levels
        self.iterations = iterations
        self.split = split
        self.seed = seed
        self.feature_names = feature_names

    def fit(self, X, y):
        losses = np.asarray(y, dtype=np.float64)
        raw = _raw_table(X, self.feature_names, losses=losses)
        table = discretize(raw, infer_schema(raw, self.max_numeric_levels), self.bins)
        self.table_: SampleTable = table
        self.schema_ = table.schema
        self.ranking_ = greedy_rank(table)
        if self.k is None:
            self.dimensionality_ = select_dimensionality(
                table,
                self.ranking_,
                k_max=self.k_max,
                iterations=self.iterations,
                split=self.split,
                seed=self.seed,
            )
            self.k_ = self.dimensionality_.chosen_k
        else:
            if not 1 <= self.k <= table.j:
                raise ValidationError(f"k must be in [1, {table.j}]")
            self.dimensionality_ = None
            self.k_ = int(self.k)
        self.subspace_ = build_subspace(self.schema_, self.ranking_.order[: self.k_])
        self.selected_features_ = list(self.ranking_.feature_names[: self.k_])
        self.loss_map_ = fit_loss_map(table, self.subspace_)
        self.feature_names_in_ = list(raw.feature_names)
        self.n_features_in_ = len(raw.feature_names)
        return self

    def _contexts(self, X):
        raw = _raw_table(X, self.feature_names_in_)
        return encode_contexts(raw, self.schema_)

    def predict(self, X):
        """Per-record expected loss looked up from the fitted loss map."""
        check_is_fitted(self, "loss_map_")
        cells = self.subspace_.flat_cells(self._contexts(X))
        return self.loss_map_.expected_loss[cells]

    def predict_domain(self, X=None, marginals=None, label="operating"):
        """Domain-level prediction report for context records or per-feature
        marginals (assumed independent)."""
        check_is_fitted(self, "loss_map_")
        if (X is None) == (marginals is None):
            raise ValidationError("provide exactly one of X or marginals")
        if X is not None:
            domain = domain_from_samples(self._contexts(X), self.subspace_, label)
        else:
            domain = domain_from_marginals(marginals, self.subspace_, label)
        return predict(self.loss_map_, domain)
