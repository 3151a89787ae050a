"""Label-noise channels, oracle distributions, plug-in classifiers, and the
experiment harness that measures their breakdown behavior."""

from .noise_channel import (
    ChannelError,
    SingularChannelError,
    TransitionMatrix,
    apply_to_posterior,
    breakdown_threshold,
    build_general,
    build_shift,
    build_symmetric,
    corrupt_labels,
    invert_symmetric,
    is_invertible,
    load_channel,
)
from .distributions import (
    Dataset,
    DiscreteJointDistribution,
    DistributionError,
    GaussianMixtureDistribution,
    bayes_classify,
    bayes_classify_batch,
    circle_mixture_benchmark,
    load_dataset,
    load_discrete,
    posterior_oracle,
    random_discrete,
    sample,
    save_dataset,
    save_discrete,
)
from .estimators import (
    EstimatorError,
    MlpConfig,
    PosteriorEstimate,
    TrainingError,
    as_classifier,
    classify_argmax,
    classify_argmax_batch,
    fit_histogram,
    fit_knn,
    fit_mlp,
    oracle_noisy_posterior,
    oracle_posterior,
)
from .mitigation import correct_backward, correct_known_symmetric
from .evaluation import (
    ConsistencySpec,
    EstimatorSpec,
    EvaluationError,
    RiskReport,
    SweepSpec,
    cell_rng,
    conditional_risk_exact,
    conditional_risk_mc,
    consistency_trend,
    asymmetric_risk_factor,
    posterior_l1_error,
    sweep_noise,
    verify_asymmetric_risk_bound,
    verify_argmax_preservation,
)

__version__ = "0.1.0"
