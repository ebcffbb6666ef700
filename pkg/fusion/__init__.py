"""
fusionkit: multi-sensor target recognition and identification

Bayesian and Dempster-Shafer evidence handling, ESM attribute estimation,
Kalman/IMM tracking and the heterogeneous fusion classifier.
"""

from .classification import ClassDefinition, ClassPosterior, DeclarationReport, ReportSet, SensorReport, classify_reports
from .evidence import Frame, MassFunction, belief_interval, combine_dempster
from .exceptions import FusionError

__all__ = [
    'ClassDefinition',
    'ClassPosterior',
    'DeclarationReport',
    'Frame',
    'FusionError',
    'MassFunction',
    'ReportSet',
    'SensorReport',
    'belief_interval',
    'classify_reports',
    'combine_dempster',
]
