"""Tilt torque estimation from visuotactile displacement fields."""
from .baseline import baseline_torque, planar_wrench, pointwise_force, raw_baseline_tilt
from .calibration import (CalibrationModel, EvaluationReport, WrenchTimeSeries, evaluate, fit,
                          metrics, resample)
from .dipole import (CentroidPair, DipoleEstimate, TiltTorque, dipole_moment, estimate,
                     estimate_from_divergence, signed_centroids, tilt_torque)
from .errors import *  # noqa: F401,F403
from .field import (DisplacementField, DivergenceMap, GridSpec, ZeroReference, curl, divergence,
                    gradient, rasterize, zero)
from .nhhd import FieldDecomposition, decompose, green_potential
from .pipeline import EstimateRow, TactilePipeline
from .simulator import (AppliedWrench, ContactPatch, GelModel, TriangleProfile, grasp_sequence,
                        round_peg, square_peg, synth_field)

__version__ = "0.1.0"
