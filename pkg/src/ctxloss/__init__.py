"""ctxloss: predict a fixed model's expected loss in new operating domains.

The workflow: ingest a loss/context table, discretize it onto a finite
context grid, rank features by how much information they carry about the
loss, choose a small context subspace, fit per-cell expected loss, and
reweight by an operating domain's context distribution. Cells never seen
during testing are imputed with the maximum loss so predictions stay
conservative.
"""

from ctxloss.data import (
    CATEGORICAL,
    NUMERICAL,
    ContextSchema,
    ContextTable,
    FeatureDescriptor,
    LossSupport,
    RawTable,
    SampleTable,
    ValidationError,
    discretize,
    empirical_loss,
    encode_contexts,
    finalize_schema,
    infer_schema,
    load_context_records,
    load_samples,
)
from ctxloss.infotheory import (
    LOSS,
    JointDistribution,
    conditional_mutual_information,
    information_gain,
    interaction_information,
    joint_distribution,
    mutual_information,
)
from ctxloss.selection import (
    DimensionalityReport,
    RankedFeatures,
    expected_prediction_error,
    greedy_rank,
    select_dimensionality,
)
from ctxloss.subspace import (
    ContextSubspace,
    DomainDistribution,
    LossMap,
    PredictionReport,
    build_subspace,
    domain_from_marginals,
    domain_from_samples,
    fit_loss_map,
    predict,
)
from ctxloss.synth import ScenarioSpec, evaluate_pipeline, generate
from ctxloss.estimators import (
    ContextDiscretizer,
    DomainLossPredictor,
    GreedyContextSelector,
)

__version__ = "0.1.0"

__all__ = [
    "CATEGORICAL",
    "NUMERICAL",
    "LOSS",
    "ContextDiscretizer",
    "ContextSchema",
    "ContextSubspace",
    "ContextTable",
    "DimensionalityReport",
    "DomainDistribution",
    "DomainLossPredictor",
    "FeatureDescriptor",
    "GreedyContextSelector",
    "JointDistribution",
    "LossMap",
    "LossSupport",
    "PredictionReport",
    "RankedFeatures",
    "RawTable",
    "SampleTable",
    "ScenarioSpec",
    "ValidationError",
    "build_subspace",
    "conditional_mutual_information",
    "discretize",
    "domain_from_marginals",
    "domain_from_samples",
    "empirical_loss",
    "encode_contexts",
    "evaluate_pipeline",
    "expected_prediction_error",
    "finalize_schema",
    "fit_loss_map",
    "generate",
    "greedy_rank",
    "infer_schema",
    "information_gain",
    "interaction_information",
    "joint_distribution",
    "load_context_records",
    "load_samples",
    "mutual_information",
    "predict",
    "select_dimensionality",
]
