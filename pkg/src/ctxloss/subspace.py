"""Context subspaces, per-cell loss maps, domain distributions, prediction.

A subspace is an ordered selection of discretized features; its cells are
indexed row-major over the feature order. A loss map holds each cell's
mean observed loss, with untested cells (no test samples) imputed with the
maximum loss so that downstream predictions stay conservative. A domain
distribution is a probability mass over the same cells; the predicted
expected loss in a domain is the mass-weighted average of the loss map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ctxloss.data import (
    ContextSchema,
    ContextTable,
    FeatureDescriptor,
    SampleTable,
    ValidationError,
)

_MASS_TOL = 1e-9


@dataclass(frozen=True)
class ContextSubspace:
    """Ordered feature axes with a row-major cell indexing bijection."""

    features: tuple

    def __post_init__(self):
        feats = tuple(self.features)
        if not feats:
            raise ValidationError("subspace needs at least one feature")
        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise ValidationError("subspace features must be distinct")
        for f in feats:
            if f.is_provisional:
                raise ValidationError(
                    f"feature {f.name!r} is not binned yet; discretize first"
                )
        object.__setattr__(self, "features", feats)

    @property
    def k(self) -> int:
        return len(self.features)

    @property
    def cardinalities(self) -> tuple:
        return tuple(f.cardinality for f in self.features)

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.cardinalities))

    def column_positions(self, schema: ContextSchema) -> list:
        """Positions of the subspace features inside a schema, matched by
        name; descriptors must agree exactly (categories and bin edges)."""
        positions = []
        for f in self.features:
            pos = schema.index_of(f.name)
            if schema.features[pos] != f:
                raise ValidationError(
                    f"feature {f.name!r} differs between subspace and table schema"
                )
            positions.append(pos)
        return positions

    def flat_cells(self, table) -> np.ndarray:
        """Flat cell id of every row of a sample or context table."""
        positions = self.column_positions(table.schema)
        cols = tuple(table.codes[:, p] for p in positions)
        return np.ravel_multi_index(cols, dims=self.cardinalities)

    def cell_id(self, codes) -> int:
        return int(np.ravel_multi_index(tuple(codes), dims=self.cardinalities))

    def cell_codes(self, cell_id: int) -> tuple:
        return tuple(int(c) for c in np.unravel_index(cell_id, self.cardinalities))

    def cell_labels(self, cell_id: int) -> tuple:
        codes = self.cell_codes(cell_id)
        return tuple(f.labels()[c] for f, c in zip(self.features, codes))

    def to_dict(self) -> dict:
        return {"features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, d: dict) -> "ContextSubspace":
        return cls(tuple(FeatureDescriptor.from_dict(f) for f in d["features"]))


def build_subspace(schema: ContextSchema, feature_indices) -> ContextSubspace:
    """Subspace over the given schema features (indices or names)."""
    indices = [
        i if isinstance(i, int) else schema.index_of(i) for i in feature_indices
    ]
    if len(set(indices)) != len(indices):
        raise ValidationError("subspace feature indices must be distinct")
    for i in indices:
        if not 0 <= i < len(schema):
            raise ValidationError(f"feature index {i} out of range")
    return ContextSubspace(tuple(schema.features[i] for i in indices))


@dataclass(frozen=True)
class LossMap:
    """Per-cell expected loss with tested/untested bookkeeping."""

    subspace: ContextSubspace
    expected_loss: np.ndarray
    sample_count: np.ndarray
    max_loss: float
    loss_values: tuple

    def __post_init__(self):
        expected = np.array(self.expected_loss, dtype=np.float64, copy=True)
        counts = np.array(self.sample_count, dtype=np.int64, copy=True)
        cc = self.subspace.cell_count
        if expected.shape != (cc,) or counts.shape != (cc,):
            raise ValidationError("per-cell arrays must match the subspace cell count")
        expected.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "expected_loss", expected)
        object.__setattr__(self, "sample_count", counts)
        object.__setattr__(self, "loss_values", tuple(float(v) for v in self.loss_values))

    @property
    def tested(self) -> np.ndarray:
        return self.sample_count > 0

    @property
    def untested_cells(self) -> int:
        return int((self.sample_count == 0).sum())

    def to_dict(self) -> dict:
        return {
            "subspace": self.subspace.to_dict(),
            "expected_loss": [float(v) for v in self.expected_loss],
            "sample_count": [int(v) for v in self.sample_count],
            "tested": [bool(v) for v in self.tested],
            "max_loss": self.max_loss,
            "loss_values": list(self.loss_values),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossMap":
        return cls(
            subspace=ContextSubspace.from_dict(d["subspace"]),
            expected_loss=np.asarray(d["expected_loss"], dtype=np.float64),
            sample_count=np.asarray(d["sample_count"], dtype=np.int64),
            max_loss=float(d["max_loss"]),
            loss_values=tuple(d["loss_values"]),
        )


def fit_loss_map(table: SampleTable, subspace: ContextSubspace) -> LossMap:
    """Mean loss per subspace cell over the rows that land in it.

    Cells with no rows get the support's maximum loss. Per-cell sums run in
    (cell, loss) sorted order, so refitting after a row shuffle reproduces
    the map bit-for-bit.
    """
    cells = subspace.flat_cells(table)
    cc = subspace.cell_count
    counts = np.bincount(cells, minlength=cc)
    order = np.lexsort((table.losses, cells))
    sorted_cells = cells[order]
    sorted_losses = table.losses[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_cells)) + 1]
    sums = np.zeros(cc, dtype=np.float64)
    sums[sorted_cells[starts]] = np.add.reduceat(sorted_losses, starts)
    max_loss = table.support.max_loss
    expected = np.where(counts > 0, sums / np.maximum(counts, 1), max_loss)
    return LossMap(subspace, expected, counts, max_loss, table.support.values)


@dataclass(frozen=True)
class DomainDistribution:
    """Probability mass over subspace cells for one testing or operating
    domain."""

    subspace: ContextSubspace
    mass: np.ndarray
    label: str = "domain"

    def __post_init__(self):
        mass = np.array(self.mass, dtype=np.float64, copy=True)
        if mass.shape != (self.subspace.cell_count,):
            raise ValidationError("mass must have one entry per subspace cell")
        if (mass < 0).any():
            raise ValidationError("mass must be non-negative")
        if abs(float(mass.sum()) - 1.0) > 1e-12:
            raise ValidationError("mass must sum to 1")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    def to_dict(self) -> dict:
        return {
            "subspace": self.subspace.to_dict(),
            "mass": [float(v) for v in self.mass],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainDistribution":
        return cls(
            subspace=ContextSubspace.from_dict(d["subspace"]),
            mass=np.asarray(d["mass"], dtype=np.float64),
            label=d.get("label", "domain"),
        )


def domain_from_samples(records, subspace: ContextSubspace, label: str = "empirical") -> DomainDistribution:
    """Empirical cell frequencies of context records (no loss labels
    needed)."""
    if not isinstance(records, (SampleTable, ContextTable)):
        raise ValidationError("records must be a SampleTable or ContextTable")
    cells = subspace.flat_cells(records)
    counts = np.bincount(cells, minlength=subspace.cell_count)
    return DomainDistribution(subspace, counts / records.n, label)


def domain_from_marginals(marginals: dict, subspace: ContextSubspace, label: str = "marginals") -> DomainDistribution:
    """Product distribution over cells from one marginal per subspace
    feature.

    Marginals are matched by feature name, must have the feature's
    cardinality, and must each sum to 1 within 1e-9; they are renormalized
    exactly before the product is taken.
    """
    factors = []
    for feat in subspace.features:
        if feat.name not in marginals:
            raise ValidationError(f"missing marginal for feature {feat.name!r}")
        m = np.asarray(marginals[feat.name], dtype=np.float64)
        if m.shape != (feat.cardinality,):
            raise ValidationError(
                f"marginal for {feat.name!r} has {m.size} entries, "
                f"expected {feat.cardinality}"
            )
        if (m < 0).any():
            raise ValidationError(f"marginal for {feat.name!r} has negative mass")
        total = float(m.sum())
        if abs(total - 1.0) > _MASS_TOL:
            raise ValidationError(
                f"marginal for {feat.name!r} sums to {total!r}, expected 1"
            )
        factors.append(m / total)
    extra = set(marginals) - {f.name for f in subspace.features}
    if extra:
        raise ValidationError(f"marginals name unknown features {sorted(extra)}")
    mass = factors[0]
    for m in factors[1:]:
        mass = np.multiply.outer(mass, m)
    return DomainDistribution(subspace, mass.ravel(), label)


@dataclass(frozen=True)
class PredictionReport:
    """Domain-weighted expected loss plus untested-mass diagnostics."""

    predicted_loss: float
    predicted_recall: float | None
    untested_mass: float
    per_cell_contribution: np.ndarray
    domain_label: str

    def to_dict(self) -> dict:
        return {
            "predicted_loss": self.predicted_loss,
            "predicted_recall": self.predicted_recall,
            "untested_mass": self.untested_mass,
            "per_cell_contribution": [float(v) for v in self.per_cell_contribution],
            "domain_label": self.domain_label,
        }


def predict(loss_map: LossMap, domain: DomainDistribution) -> PredictionReport:
    """Expected loss in a domain: the mass-weighted average of the loss map.

    The loss map and the domain must be built over the same subspace
    (feature names, categories, and bin edges all equal). With a binary
    0/1 loss the report also carries the predicted recall.
    """
    if loss_map.subspace != domain.subspace:
        raise ValidationError("loss map and domain use different subspaces")
    contribution = domain.mass * loss_map.expected_loss
    predicted = float(contribution.sum())
    untested = float(domain.mass[~loss_map.tested].sum())
    recall = None
    if set(loss_map.loss_values) <= {0.0, 1.0}:
        recall = 1.0 - predicted
    return PredictionReport(
        predicted_loss=predicted,
        predicted_recall=recall,
        untested_mass=untested,
        per_cell_contribution=contribution,
        domain_label=domain.label,
    )
