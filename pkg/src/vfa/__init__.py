"""Vertebral fracture assessment from six keypoints."""
from .diffgsq import (
    DEFAULT_THRESHOLDS,
    GRADES,
    MORPHOLOGIES,
    ClassPosterior,
    GsqThresholds,
    combine_posterior,
    crisp_grade,
    crisp_morphology,
    fuzzy_memberships,
    fuzzy_with_gradient,
    weighted_ce_loss,
)
from .detection import BoundingBox, Detection, detection_loss, giou, hungarian_match
from .errors import VFAError
from .forest import FeatureForest, forest_fit, forest_predict
from .geometry import RatioProfile, VertebraKeypoints, ratio_profile
from .metrics import confusion, roc_auc, youden_point
from .rle import (
    FlowConfig,
    RleModel,
    fit_flow,
    propagate_uncertainty,
    quantile_interval,
    rle_loss,
    sample_keypoints,
)
from .synthdata import CohortSpec, SynthSpec, generate_cohort, generate_vertebra, impute_knn

__version__ = "0.1.0"
