"""oamlink: link-level simulation of multi-carrier, multi-mode OAM links under misalignment.

Modules
-------
geometry     array layouts, link pose, exact and far-field element distances
channel      free-space channel tensors, mode-domain channels, closed-form gains
synthesis    OAM beam synthesis, training frames, field phase maps and rasters
estimation   pose (distance / angle-of-arrival) estimation from training frames
receiver     beam steering, despiralization and amplitude detection
metrics      QAM, AWGN, NMSE, SINR, spectral efficiency, BER Monte Carlo
config       flat key = value experiment specs
experiments  scenario runners behind the ``oamlink`` command
"""

from ._validation import (
    AmbiguityError,
    ConditioningError,
    DegenerateSignalError,
    EstimationError,
    FarFieldError,
    GeometryError,
    OamError,
)
from .channel import (
    CarrierGrid,
    ModeSet,
    build_channel,
    build_ucca_channel,
    channel_tensor,
    diagonal_gain_closed_form,
    effective_oam_channel,
)
from .config import ExperimentSpec, SpecError, load_spec, parse_spec
from .estimation import PoseEstimate, PoseEstimator, estimate_pose
from .geometry import (
    ArrayConfig,
    FarFieldGuard,
    LinkPose,
    UccaConfig,
    distance_matrix,
    farfield_distance_matrix,
    tilt_angle,
)
from .metrics import (
    OverheadModel,
    QamConstellation,
    awgn_ber_qam,
    nmse,
    sinr,
    spectral_efficiency,
    spectral_efficiency_ucca,
)
from .receiver import OamReceiver, detect, detection_set, steering_vector
from .synthesis import dft_mode_matrix, synthesize, training_sequence

__version__ = "0.1.0"

__all__ = [
    "AmbiguityError", "ConditioningError", "DegenerateSignalError", "EstimationError",
    "FarFieldError", "GeometryError", "OamError", "CarrierGrid", "ModeSet", "build_channel",
    "build_ucca_channel", "channel_tensor", "diagonal_gain_closed_form", "effective_oam_channel",
    "ExperimentSpec", "SpecError", "load_spec", "parse_spec", "PoseEstimate", "PoseEstimator",
    "estimate_pose", "ArrayConfig", "FarFieldGuard", "LinkPose", "UccaConfig", "distance_matrix",
    "farfield_distance_matrix", "tilt_angle", "OverheadModel", "QamConstellation", "awgn_ber_qam",
    "nmse", "sinr", "spectral_efficiency", "spectral_efficiency_ucca", "OamReceiver", "detect",
    "detection_set", "steering_vector", "dft_mode_matrix", "synthesize", "training_sequence",
]
