"""Exact inference, simulation and meta-training for small discrete causal
sequence models, with self-generated actions treated either as evidence or
as interventions."""

from __future__ import annotations

from .engine import (
    CausalProcess,
    Distribution,
    EvidenceItem,
    Mechanism,
    Mode,
    Role,
    VariableSpec,
    apply_interventions,
    cond,
    do,
    joint_probability,
    query,
)
from .errors import (
    CapacityError,
    CausalSeqError,
    DuplicateEvidenceError,
    InvalidAssignmentError,
    InvalidEvidenceError,
    InvalidProcessError,
    ZeroProbabilityEvidenceError,
)

__version__ = "0.1.0"

__all__ = [
    "CausalProcess",
    "Distribution",
    "EvidenceItem",
    "Mechanism",
    "Mode",
    "Role",
    "VariableSpec",
    "apply_interventions",
    "cond",
    "do",
    "joint_probability",
    "query",
    "CapacityError",
    "CausalSeqError",
    "DuplicateEvidenceError",
    "InvalidAssignmentError",
    "InvalidEvidenceError",
    "InvalidProcessError",
    "ZeroProbabilityEvidenceError",
    "__version__",
]
