"""Trace-norm regularized learning on matrix samples.

Robust PCA feature extraction, a low-rank linear matrix classifier with
batch and online accelerated proximal gradient trainers, and an MFCC audio
pipeline.
"""

from .classifier import ApgConfig, LabeledSample, LinearMatrixModel, apg_fit, predict
from .online import OnlineConfig, OnlineSufficientStats, online_fit
from .rpca import RpcaConfig, RpcaDecomposition, rpca_ialm

__version__ = "0.1.0"
