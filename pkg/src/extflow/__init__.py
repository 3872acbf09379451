"""Extended Ricci flow laboratory on the flat 2-torus.

Evolves a metric and scalar field under the extended (List) Ricci flow,
computes the modified log-Sobolev-type constant lambda_{a'}^{b'} by
constrained minimization, and checks its evolution law and monotone
quantities against finite differences along the flow.
"""

from .constants import (
    ConstantParams,
    ConstantResult,
    EnergyFunctional,
    SolverOptions,
    energy,
    linear_lowest_eigenpair,
    minimize_constant,
)
from .flow import FlowParams, FlowState, extended_flow_rhs, normalized_flow_rhs, step
from .grid import GridManifold, MetricField
from .harness import RhsBreakdown, VerificationReport, condition_check, theorem1_rhs, theorem3_rhs

__version__ = "0.1.0"
