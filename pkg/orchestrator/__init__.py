"""
fusionkit command-line package

This package contains the fusion center that turns sensor report streams into
declarations, the CSV codecs and the `fusionkit` command line
(`python -m orchestrator.main`).
"""

from .fusion_center import FusionCenter

__all__ = ['FusionCenter']
