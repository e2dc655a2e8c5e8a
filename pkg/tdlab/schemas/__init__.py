# tdlab/schemas/__init__.py
from .instance import MinimaxSpec, InstanceFile
from .experiment import (
    Algorithm,
    StartPoint,
    ExperimentConfig,
    TrialTrace,
    SummaryRow,
    ExperimentSummary,
    ExperimentResult,
)
from .reports import (
    ContractionCertificate,
    TdContraction,
    SpectralReport,
    StepsizeDecision,
    RateFit,
    InstanceConstants,
)

__all__ = [
    'MinimaxSpec',
    'InstanceFile',
    'Algorithm',
    'StartPoint',
    'ExperimentConfig',
    'TrialTrace',
    'SummaryRow',
    'ExperimentSummary',
    'ExperimentResult',
    'ContractionCertificate',
    'TdContraction',
    'SpectralReport',
    'StepsizeDecision',
    'RateFit',
    'InstanceConstants',
]
