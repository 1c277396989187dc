"""Learning approximate market equilibria for indivisible goods from sampled bundles."""
from .additive import direct_additive, preprocess_additive
from .baselines import (
    divisible_additive_equilibrium,
    opt_welfare_additive,
    opt_welfare_bruteforce,
    optimal_sm_welfare_equilibrium,
    optimal_ud_equilibrium,
)
from .core import (
    BURN,
    Additive,
    MarketError,
    MarketInstance,
    Outcome,
    ResourceLimitError,
    SampleSet,
    SingleMinded,
    ThresholdSubmodular,
    UnitDemand,
    affordable,
    bundle,
    evaluate,
    members,
    validate_outcome,
)
from .distributions import (
    Explicit,
    FixedSize,
    Product,
    UniformPowerSet,
    adversarial_instance,
    make_sample_set,
    sample_bundle,
)
from .metrics import (
    efficiency_ratio,
    empirical_loss,
    estimate_expected_loss,
    is_envy_free,
    is_walrasian,
    loss_indicator,
    sample_complexity,
    welfare,
)
from .single_minded import learn_desired_sets, sm_equilibrium, sm_pipeline
from .submodular import direct_submod, preprocess_submod
from .unit_demand import direct_ud, indirect_ud, learn_ud_estimate

__version__ = "0.1.0"
