"""Synthetic test/operating scenarios with analytically known truth.

A scenario plants a small set of features that causally drive a Bernoulli
loss through an explicit per-cell failure-rate table; remaining features
are independent noise. Because the rates and the domain distributions are
declared, the per-cell expected loss and each operating domain's true
expected loss are available in closed form, which makes generated data an
end-to-end oracle for the whole selection/fitting/prediction chain.

Scenario specs are declarative JSON files. Generation is deterministic:
every column of every domain draws from its own (seed, purpose, name)
stream, so outputs are bit-identical per seed regardless of evaluation
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ctxloss.data import (
    CATEGORICAL,
    NUMERICAL,
    RawTable,
    ValidationError,
    _canon_number,
    discretize,
    encode_contexts,
    empirical_loss,
    infer_schema,
)
from ctxloss.seeding import stream
from ctxloss.selection import greedy_rank, select_dimensionality
from ctxloss.subspace import build_subspace, domain_from_samples, fit_loss_map, predict

_MASS_TOL = 1e-9


def _pipeline_category_order(categories) -> list:
    """The order schema inference would assign to these category labels."""
    cats = [str(c) for c in categories]
    try:
        values = [float(c) for c in cats]
    except ValueError:
        return sorted(cats)
    return [_canon_number(v) for v in sorted(values)]


@dataclass(frozen=True)
class SynthFeature:
    """One generated feature: explicit categories, or a continuous range
    sampled uniformly within ``grid`` equal-width cells."""

    name: str
    kind: str
    categories: tuple = None
    lo: float = None
    hi: float = None
    grid: int = None

    def __post_init__(self):
        if self.kind == CATEGORICAL:
            if not self.categories or len(self.categories) < 2:
                raise ValidationError(f"feature {self.name!r}: need >= 2 categories")
            cats = tuple(str(c) for c in self.categories)
            if list(cats) != _pipeline_category_order(cats):
                raise ValidationError(
                    f"feature {self.name!r}: categories must be listed in "
                    "schema-inference order (lexicographic, or numeric for "
                    "number-like labels)"
                )
            object.__setattr__(self, "categories", cats)
        elif self.kind == NUMERICAL:
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValidationError(f"feature {self.name!r}: need lo < hi")
            if not self.grid or self.grid < 2:
                raise ValidationError(f"feature {self.name!r}: grid must be >= 2")
        else:
            raise ValidationError(f"feature {self.name!r}: unknown kind {self.kind!r}")

    @property
    def cardinality(self) -> int:
        return len(self.categories) if self.kind == CATEGORICAL else self.grid

    def to_dict(self) -> dict:
        if self.kind == CATEGORICAL:
            return {"name": self.name, "kind": self.kind, "categories": list(self.categories)}
        return {
            "name": self.name,
            "kind": self.kind,
            "range": [self.lo, self.hi],
            "grid": self.grid,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthFeature":
        if d["kind"] == CATEGORICAL:
            return cls(d["name"], CATEGORICAL, categories=tuple(d["categories"]))
        lo, hi = d["range"]
        return cls(d["name"], NUMERICAL, lo=float(lo), hi=float(hi), grid=int(d["grid"]))


def _normalize(mass: np.ndarray, what: str) -> np.ndarray:
    mass = np.asarray(mass, dtype=np.float64)
    if (mass < 0).any():
        raise ValidationError(f"{what}: negative probability mass")
    total = float(mass.sum())
    if abs(total - 1.0) > _MASS_TOL:
        raise ValidationError(f"{what}: mass sums to {total!r}, expected 1")
    return mass / total


@dataclass(frozen=True)
class DomainSpec:
    """A named context distribution: a joint (or product of marginals) over
    the planted grid, plus independent marginals for the noise features
    (uniform when omitted)."""

    name: str
    planted_mass: np.ndarray
    noise_marginals: dict

    def __post_init__(self):
        mass = np.asarray(self.planted_mass, dtype=np.float64)
        mass.setflags(write=False)
        object.__setattr__(self, "planted_mass", mass)
        object.__setattr__(self, "noise_marginals", dict(self.noise_marginals))


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative generator input; see tests/fixtures for examples."""

    name: str
    seed: int
    n_test: int
    n_operating: int
    features: tuple
    planted: tuple
    failure_rates: np.ndarray
    test_domain: DomainSpec
    operating_domains: tuple

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValidationError("feature names must be unique")
        unknown = [p for p in self.planted if p not in names]
        if unknown:
            raise ValidationError(f"planted features {unknown} are not declared")
        rates = np.asarray(self.failure_rates, dtype=np.float64)
        if rates.shape != self.planted_cards:
            raise ValidationError(
                f"failure_rates shape {rates.shape} does not match the planted "
                f"grid {self.planted_cards}"
            )
        if (rates < 0).any() or (rates > 1).any():
            raise ValidationError("failure rates must lie in [0, 1]")
        if self.n_test < 1 or self.n_operating < 1:
            raise ValidationError("n_test and n_operating must be >= 1")
        rates = rates.copy()
        rates.setflags(write=False)
        object.__setattr__(self, "failure_rates", rates)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "planted", tuple(self.planted))
        object.__setattr__(self, "operating_domains", tuple(self.operating_domains))
        for dom in (self.test_domain, *self.operating_domains):
            if dom.planted_mass.shape != (int(np.prod(self.planted_cards)),):
                raise ValidationError(
                    f"domain {dom.name!r}: planted mass has the wrong cell count"
                )
            for fname in dom.noise_marginals:
                if fname in self.planted or fname not in names:
                    raise ValidationError(
                        f"domain {dom.name!r}: {fname!r} is not a noise feature"
                    )

    @property
    def feature_names(self) -> tuple:
        return tuple(f.name for f in self.features)

    @property
    def planted_cards(self) -> tuple:
        by_name = {f.name: f for f in self.features}
        return tuple(by_name[p].cardinality for p in self.planted)

    def feature(self, name: str) -> SynthFeature:
        for f in self.features:
            if f.name == name:
                return f
        raise ValidationError(f"unknown feature {name!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        features = tuple(SynthFeature.from_dict(f) for f in d["features"])
        planted = tuple(d.get("planted", ()))
        by_name = {f.name: f for f in features}
        cards = tuple(by_name[p].cardinality for p in planted if p in by_name)
        rates = np.asarray(d.get("failure_rates", []), dtype=np.float64).reshape(
            cards if planted else ()
        )
        test_domain = _domain_from_dict(d["test_domain"], planted, cards, default_name="test")
        operating = tuple(
            _domain_from_dict(dom, planted, cards) for dom in d.get("operating_domains", [])
        )
        return cls(
            name=d["name"],
            seed=int(d["seed"]),
            n_test=int(d["n_test"]),
            n_operating=int(d.get("n_operating", d["n_test"])),
            features=features,
            planted=planted,
            failure_rates=rates,
            test_domain=test_domain,
            operating_domains=operating,
        )

    @classmethod
    def from_json(cls, path) -> "ScenarioSpec":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"scenario spec not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def _domain_from_dict(d: dict, planted, cards, default_name=None) -> DomainSpec:
    name = d.get("name", default_name)
    if not name:
        raise ValidationError("operating domains must be named")
    spec = d.get("planted", {})
    if not planted:
        mass = np.ones(1)
    elif "joint" in spec:
        mass = _normalize(
            np.asarray(spec["joint"], dtype=np.float64).reshape(-1),
            f"domain {name!r} joint",
        )
        if mass.size != int(np.prod(cards)):
            raise ValidationError(f"domain {name!r}: joint has the wrong cell count")
    elif "product" in spec:
        factors = []
        for p, card in zip(planted, cards):
            if p not in spec["product"]:
                raise ValidationError(f"domain {name!r}: missing marginal for {p!r}")
            m = _normalize(spec["product"][p], f"domain {name!r} marginal {p!r}")
            if m.size != card:
                raise ValidationError(
                    f"domain {name!r}: marginal for {p!r} has wrong cardinality"
                )
            factors.append(m)
        mass = factors[0]
        for m in factors[1:]:
            mass = np.multiply.outer(mass, m)
        mass = mass.reshape(-1)
    else:
        raise ValidationError(f"domain {name!r}: provide a planted joint or product")
    noise = {
        k: tuple(_normalize(v, f"domain {name!r} noise marginal {k!r}"))
        for k, v in d.get("noise", {}).items()
    }
    return DomainSpec(name, mass, noise)


@dataclass(frozen=True)
class TruthBundle:
    """Closed-form quantities implied by a scenario spec."""

    planted: tuple
    planted_cards: tuple
    g_star: np.ndarray
    test_mass: np.ndarray
    test_true_loss: float
    domain_true_loss: dict
    domain_mass: dict

    def to_dict(self) -> dict:
        return {
            "planted": list(self.planted),
            "planted_cards": list(self.planted_cards),
            "g_star": [float(v) for v in self.g_star],
            "test_mass": [float(v) for v in self.test_mass],
            "test_true_loss": self.test_true_loss,
            "domain_true_loss": {k: float(v) for k, v in self.domain_true_loss.items()},
            "domain_mass": {
                k: [float(v) for v in m] for k, m in self.domain_mass.items()
            },
        }


@dataclass(frozen=True)
class GeneratedScenario:
    test: RawTable
    domains: dict
    truth: TruthBundle


def _materialize(spec: ScenarioSpec, feat: SynthFeature, codes: np.ndarray, purpose: str) -> np.ndarray:
    if feat.kind == CATEGORICAL:
        return np.asarray(feat.categories)[codes]
    width = (feat.hi - feat.lo) / feat.grid
    jitter = stream(spec.seed, purpose, "jitter", feat.name).random(codes.size)
    return feat.lo + (codes + jitter) * width


def _sample_records(spec: ScenarioSpec, dom: DomainSpec, n: int, purpose: str):
    cards = spec.planted_cards
    cell_count = int(np.prod(cards)) if cards else 1
    if cell_count > 1:
        cells = stream(spec.seed, purpose, "cells").choice(
            cell_count, size=n, p=dom.planted_mass
        )
    else:
        cells = np.zeros(n, dtype=np.int64)
    planted_codes = dict(zip(spec.planted, np.unravel_index(cells, cards))) if cards else {}
    columns = []
    for feat in spec.features:
        if feat.name in planted_codes:
            codes = planted_codes[feat.name]
        else:
            marginal = dom.noise_marginals.get(feat.name)
            p = np.asarray(marginal) if marginal is not None else np.full(
                feat.cardinality, 1.0 / feat.cardinality
            )
            codes = stream(spec.seed, purpose, "noise", feat.name).choice(
                feat.cardinality, size=n, p=p
            )
        columns.append(_materialize(spec, feat, codes, purpose))
    return columns, cells


def generate(spec: ScenarioSpec) -> GeneratedScenario:
    """Sample the test table and every operating domain's context records,
    along with the closed-form truth bundle."""
    columns, cells = _sample_records(spec, spec.test_domain, spec.n_test, "test")
    rates_flat = spec.failure_rates.reshape(-1)
    uniform = stream(spec.seed, "test", "loss").random(spec.n_test)
    losses = (uniform < rates_flat[cells]).astype(np.float64)
    test = RawTable(spec.feature_names, tuple(columns), losses)
    domains = {}
    for dom in spec.operating_domains:
        cols, _ = _sample_records(spec, dom, spec.n_operating, f"domain:{dom.name}")
        domains[dom.name] = RawTable(spec.feature_names, tuple(cols), None)
    truth = TruthBundle(
        planted=spec.planted,
        planted_cards=spec.planted_cards,
        g_star=rates_flat,
        test_mass=spec.test_domain.planted_mass,
        test_true_loss=float(np.dot(spec.test_domain.planted_mass, rates_flat)),
        domain_true_loss={
            d.name: float(np.dot(d.planted_mass, rates_flat))
            for d in spec.operating_domains
        },
        domain_mass={d.name: d.planted_mass for d in spec.operating_domains},
    )
    return GeneratedScenario(test=test, domains=domains, truth=truth)


@dataclass(frozen=True)
class DomainEvaluation:
    name: str
    predicted_loss: float
    true_loss: float
    abs_error: float
    untested_mass: float
    conservative: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "predicted_loss": self.predicted_loss,
            "true_loss": self.true_loss,
            "abs_error": self.abs_error,
            "untested_mass": self.untested_mass,
            "conservative": self.conservative,
        }


@dataclass(frozen=True)
class PipelineEvaluation:
    """Full-chain run of a scenario against its truth bundle."""

    chosen_k: int
    epsilon_tilde: tuple
    context_uninformative: bool
    ranking: tuple
    ranking_correct: bool | None
    empirical_test_loss: float
    test_true_loss: float
    domains: dict

    def to_dict(self) -> dict:
        return {
            "chosen_k": self.chosen_k,
            "epsilon_tilde": list(self.epsilon_tilde),
            "context_uninformative": self.context_uninformative,
            "ranking": list(self.ranking),
            "ranking_correct": self.ranking_correct,
            "empirical_test_loss": self.empirical_test_loss,
            "test_true_loss": self.test_true_loss,
            "domains": {k: v.to_dict() for k, v in self.domains.items()},
        }


def evaluate_pipeline(
    spec: ScenarioSpec,
    bins: int = 10,
    iterations: int = 50,
    split: float = 0.5,
    k_max: int = None,
    seed: int = None,
) -> PipelineEvaluation:
    """Run discretize -> rank -> select K -> fit -> predict on generated
    data and compare every prediction against the closed-form truth."""
    for p in spec.planted:
        feat = spec.feature(p)
        if feat.kind == NUMERICAL and feat.grid != bins:
            raise ValidationError(
                f"planted feature {p!r} uses a {feat.grid}-cell grid; "
                f"discretizing with bins={bins} would misalign the truth"
            )
    if seed is None:
        seed = spec.seed
    gen = generate(spec)
    table = discretize(gen.test, infer_schema(gen.test), bins)
    ranked = greedy_rank(table)
    report = select_dimensionality(
        table, ranked, k_max=k_max, iterations=iterations, split=split, seed=seed
    )
    sub = build_subspace(table.schema, ranked.order[: report.chosen_k])
    loss_map = fit_loss_map(table, sub)
    evaluations = {}
    for name, raw in gen.domains.items():
        contexts = encode_contexts(raw, table.schema)
        domain = domain_from_samples(contexts, sub, label=name)
        pred = predict(loss_map, domain)
        true_loss = gen.truth.domain_true_loss[name]
        evaluations[name] = DomainEvaluation(
            name=name,
            predicted_loss=pred.predicted_loss,
            true_loss=true_loss,
            abs_error=abs(pred.predicted_loss - true_loss),
            untested_mass=pred.untested_mass,
            conservative=pred.predicted_loss >= true_loss - 1e-9,
        )
    ranking_correct = None
    if spec.planted:
        top = set(ranked.feature_names[: len(spec.planted)])
        ranking_correct = top == set(spec.planted)
    return PipelineEvaluation(
        chosen_k=report.chosen_k,
        epsilon_tilde=report.epsilon_tilde,
        context_uninformative=report.context_uninformative,
        ranking=ranked.feature_names,
        ranking_correct=ranking_correct,
        empirical_test_loss=empirical_loss(table),
        test_true_loss=gen.truth.test_true_loss,
        domains=evaluations,
    )
