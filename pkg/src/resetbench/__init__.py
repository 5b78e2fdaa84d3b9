"""Scene reduction before behaviour cloning, in a 2D tabletop world."""

from .datagen import DemoVideo, ExpertDemo, PlayRecord, PointFlow, gen_expert, gen_human, gen_play, script_demo
from .features import FEATURE_DIM, featurize
from .gap import SampleSet, cov_trace, dpi_check, empirical_gap, gap_bound, is_anchor, mi_binned, rademacher_linear
from .learn import (
    calibrate_threshold,
    fit_base,
    fit_flow,
    fit_naive,
    fit_reduction,
    fit_score,
    predict_base,
    predict_flow,
    predict_primitive,
    score,
)
from .rollout import Outcome, ReSETModels, RolloutTrace, direct_rollout, naive_rollout, reset_rollout
from .sim import (
    ActionPrimitive,
    ObjectClass,
    PrimitiveClass,
    Split,
    Task,
    Theta,
    WorldState,
    apply_primitive,
    is_success,
    observe,
    sample_scenario,
)

__version__ = "0.1.0"
