"""Point cloud registration by soft-to-hard matching.

Soft matching (augmented Sinkhorn) feeds an exact assignment that yields a
partial permutation matrix, and the rigid motion comes from weighted
Procrustes on the surviving one-to-one correspondences.
"""
from ._accel import backend, set_backend, using
from .assignment import (AugmentedProfit, DeskScaleError, PartialPermutationMatrix, augment_profit, h_step,
                         hungarian, is_partial_permutation, project_to_ppm)
from .features import FeatureSet, descriptor, similarity
from .geometry import PointCloud, RigidMotion, compose, euler_to_rotation, inverse, rotation_to_euler
from .losses import LossConfig, LossReport, descent_demo, loss_inlier_count, loss_match, loss_motion
from .pipeline import RegistrationConfig, RegistrationResult, register
from .procrustes import DegenerateCorrespondences, DegenerateGeometry, weighted_procrustes
from .sinkhorn import SinkhornConfig, SoftMatchMatrix, augmented_sinkhorn, sinkhorn_backward
from .synthdata import LabeledPair, PairSpec, make_pair, partial_view_pair, procedural_shape

__version__ = "0.1.0"

__all__ = [
    "AugmentedProfit", "DegenerateCorrespondences", "DegenerateGeometry", "DeskScaleError", "FeatureSet",
    "LabeledPair", "LossConfig", "LossReport", "PairSpec", "PartialPermutationMatrix", "PointCloud",
    "RegistrationConfig", "RegistrationResult", "RigidMotion", "SinkhornConfig", "SoftMatchMatrix",
    "augment_profit", "augmented_sinkhorn", "backend", "compose", "descent_demo", "descriptor",
    "euler_to_rotation", "h_step", "hungarian", "inverse", "is_partial_permutation", "loss_inlier_count",
    "loss_match", "loss_motion", "make_pair", "partial_view_pair", "procedural_shape", "project_to_ppm",
    "register", "rotation_to_euler", "set_backend", "similarity", "sinkhorn_backward", "using",
    "weighted_procrustes",
]
