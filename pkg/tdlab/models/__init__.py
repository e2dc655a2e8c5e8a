# tdlab/models/__init__.py
from .mdp import TabularMdp, Policy, InducedMrp, FeatureMap, StationaryGeometry
from .population import OnPolicyPopulation, OffPolicyPopulation
from .samples import SamplingMode, SampleTuple, SampleBatch, EmpiricalTerms
from .learner import TdState, TdcState, StepsizeMode, StepsizePlan
from .instance import ExactSolution, PolicyEvaluationInstance

__all__ = [
    'TabularMdp',
    'Policy',
    'InducedMrp',
    'FeatureMap',
    'StationaryGeometry',
    'OnPolicyPopulation',
    'OffPolicyPopulation',
    'SamplingMode',
    'SampleTuple',
    'SampleBatch',
    'EmpiricalTerms',
    'TdState',
    'TdcState',
    'StepsizeMode',
    'StepsizePlan',
    'ExactSolution',
    'PolicyEvaluationInstance',
]
