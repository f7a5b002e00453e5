"""Finite discrete causal processes and exact queries over them.

A :class:`CausalProcess` is an ordered list of variables, each with a
mechanism (conditional probability table) whose parents precede it.  Queries
accept a mixture of conditioned evidence (``x``) and interventions
(``do(x)``).  Interventions are applied by truncated factorization: the
intervened variable's mechanism is replaced by a parentless point mass, then
the query is answered by conditioning the mutilated process by full
enumeration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CapacityError,
    DuplicateEvidenceError,
    InvalidAssignmentError,
    InvalidEvidenceError,
    InvalidProcessError,
    ZeroProbabilityEvidenceError,
)

__all__ = [
    "ENUMERATION_CAP",
    "ROW_TOLERANCE",
    "Role",
    "Mode",
    "VariableSpec",
    "Mechanism",
    "CausalProcess",
    "EvidenceItem",
    "Distribution",
    "cond",
    "do",
    "joint_probability",
    "apply_interventions",
    "query",
    "query_joint",
]

ENUMERATION_CAP = 2**22
ROW_TOLERANCE = 1e-12


class Role(enum.Enum):
    LATENT = "latent"
    ACTION = "action"
    OBSERVATION = "observation"
    GOAL = "goal"


class Mode(enum.Enum):
    CONDITION = "condition"
    INTERVENE = "intervene"


@dataclass(frozen=True)
class VariableSpec:
    id: int
    name: str
    role: Role
    domain_size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.domain_size < 1:
            raise InvalidProcessError("domain size must be positive", self.name)
        if self.labels is not None:
            if len(self.labels) != self.domain_size:
                raise InvalidProcessError(
                    f"{len(self.labels)} labels for domain of size {self.domain_size}",
                    self.name,
                )
            if len(set(self.labels)) != len(self.labels):
                raise InvalidProcessError("duplicate symbol labels", self.name)

    def label(self, symbol: int) -> str:
        return self.labels[symbol] if self.labels is not None else str(symbol)

    def symbol(self, label: str | int) -> int:
        """Map a label (or a bare integer symbol) to its symbol index."""
        if isinstance(label, (int, np.integer)):
            value = int(label)
        elif self.labels is not None and label in self.labels:
            value = self.labels.index(label)
        else:
            try:
                value = int(label)
            except ValueError:
                raise InvalidAssignmentError(
                    f"{self.name} has no symbol {label!r}"
                ) from None
            if self.labels is not None:
                raise InvalidAssignmentError(f"{self.name} has no symbol {label!r}")
        if not 0 <= value < self.domain_size:
            raise InvalidAssignmentError(
                f"symbol {value} out of range for {self.name} (size {self.domain_size})"
            )
        return value


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Conditional table ``P(variable | parents)``.

    ``table`` has shape ``(*parent_sizes, domain_size)``; the last axis is the
    variable's own distribution.
    """

    variable: int
    parents: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))

    def row(self, parent_values: Sequence[int]) -> np.ndarray:
        return self.table[tuple(parent_values)]

    def __eq__(self, other):
        if not isinstance(other, Mechanism):
            return NotImplemented
        return (
            self.variable == other.variable
            and self.parents == other.parents
            and self.table.shape == other.table.shape
            and bool(np.array_equal(self.table, other.table))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CausalProcess:
    variables: tuple[VariableSpec, ...]
    mechanisms: tuple[Mechanism, ...]
    name: str = "process"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        if len(self.mechanisms) != len(self.variables):
            raise InvalidProcessError(
                f"{len(self.variables)} variables but {len(self.mechanisms)} mechanisms"
            )
        index = {}
        for i, (var, mech) in enumerate(zip(self.variables, self.mechanisms)):
            if var.id != i:
                raise InvalidProcessError(f"variable id {var.id} at position {i}", var.name)
            if var.name in index:
                raise InvalidProcessError("duplicate variable name", var.name)
            index[var.name] = i
            if mech.variable != i:
                raise InvalidProcessError("mechanism out of order", var.name)
            if len(set(mech.parents)) != len(mech.parents):
                raise InvalidProcessError("duplicate parent", var.name)
            for p in mech.parents:
                if not 0 <= p < i:
                    raise InvalidProcessError(
                        f"parent id {p} does not precede variable id {i}", var.name
                    )
            expected = tuple(self.variables[p].domain_size for p in mech.parents)
            expected += (var.domain_size,)
            if mech.table.shape != expected:
                raise InvalidProcessError(
                    f"table shape {mech.table.shape}, expected {expected}", var.name
                )
            if np.any(mech.table < 0) or not np.all(np.isfinite(mech.table)):
                raise InvalidProcessError("negative or non-finite probability", var.name)
            sums = mech.table.sum(axis=-1)
            if np.any(np.abs(sums - 1.0) > ROW_TOLERANCE):
                raise InvalidProcessError("mechanism row does not sum to 1", var.name)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.variables)

    def __eq__(self, other):
        if not isinstance(other, CausalProcess):
            return NotImplemented
        return self.variables == other.variables and self.mechanisms == other.mechanisms

    __hash__ = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.domain_size for v in self.variables)

    @property
    def n_assignments(self) -> int:
        return math.prod(self.shape)

    def var_id(self, ref: str | int) -> int:
        if isinstance(ref, (int, np.integer)):
            if not 0 <= ref < len(self.variables):
                raise InvalidEvidenceError(f"no variable with id {ref}")
            return int(ref)
        try:
            return self._index[ref]
        except KeyError:
            raise InvalidEvidenceError(f"unknown variable {ref!r}") from None

    def variable(self, ref: str | int) -> VariableSpec:
        return self.variables[self.var_id(ref)]

    def ids_with_role(self, role: Role) -> list[int]:
        return [v.id for v in self.variables if v.role is role]

    def cond(self, ref: str | int, label: str | int) -> "EvidenceItem":
        var = self.variable(ref)
        return EvidenceItem(var.id, var.symbol(label), Mode.CONDITION)

    def do(self, ref: str | int, label: str | int) -> "EvidenceItem":
        var = self.variable(ref)
        return EvidenceItem(var.id, var.symbol(label), Mode.INTERVENE)

    def replace_mechanisms(self, replacements: dict[int, Mechanism]) -> "CausalProcess":
        mechs = tuple(replacements.get(i, m) for i, m in enumerate(self.mechanisms))
        return CausalProcess(self.variables, mechs, name=self.name)


@dataclass(frozen=True)
class EvidenceItem:
    variable: int
    value: int
    mode: Mode = Mode.CONDITION

    @property
    def intervened(self) -> bool:
        return self.mode is Mode.INTERVENE

    def __str__(self):
        body = f"{self.variable}={self.value}"
        return f"do({body})" if self.intervened else body


def cond(variable: int, value: int) -> EvidenceItem:
    return EvidenceItem(variable, value, Mode.CONDITION)


def do(variable: int, value: int) -> EvidenceItem:
    return EvidenceItem(variable, value, Mode.INTERVENE)


class Distribution:
    """Read-only normalized probability vector over ``0..n-1``."""

    __slots__ = ("probs",)

    def __init__(self, probs: Iterable[float], *, check: bool = True):
        arr = np.array(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("distribution must be a non-empty vector")
        if check:
            if np.any(arr < 0):
                raise ValueError("negative probability")
            if abs(arr.sum() - 1.0) > ROW_TOLERANCE:
                raise ValueError(f"probabilities sum to {arr.sum()!r}")
        arr.setflags(write=False)
        self.probs = arr

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, n: int, k: int) -> "Distribution":
        arr = np.zeros(n)
        arr[k] = 1.0
        return cls(arr)

    def __len__(self):
        return self.probs.size

    def __getitem__(self, k):
        return float(self.probs[k])

    def __iter__(self):
        return iter(self.probs.tolist())

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __repr__(self):
        return f"Distribution({np.array2string(self.probs, precision=6)})"

    def __eq__(self, other):
        if isinstance(other, Distribution):
            return bool(np.array_equal(self.probs, other.probs))
        return NotImplemented

    __hash__ = None

    def tv(self, other) -> float:
        """Total variation distance."""
        return 0.5 * float(np.abs(self.probs - np.asarray(other, dtype=float)).sum())

    def max_abs_diff(self, other) -> float:
        return float(np.max(np.abs(self.probs - np.asarray(other, dtype=float))))


def _check_assignment(process: CausalProcess, assignment: Sequence[int]) -> tuple[int, ...]:
    if len(assignment) != len(process.variables):
        raise InvalidAssignmentError(
            f"assignment has {len(assignment)} symbols, process has {len(process.variables)}"
        )
    out = []
    for var, value in zip(process.variables, assignment):
        if not isinstance(value, (int, np.integer)) or not 0 <= value < var.domain_size:
            raise InvalidAssignmentError(f"symbol {value!r} out of range for {var.name}")
        out.append(int(value))
    return tuple(out)


def joint_probability(process: CausalProcess, assignment: Sequence[int]) -> float:
    """Product of the mechanism rows selected by ``assignment``."""
    values = _check_assignment(process, assignment)
    p = 1.0
    for mech, value in zip(process.mechanisms, values):
        p *= float(mech.table[tuple(values[q] for q in mech.parents) + (value,)])
    return p


def _check_evidence(process: CausalProcess, evidence: Sequence[EvidenceItem]) -> None:
    seen = set()
    for item in evidence:
        var = process.variable(item.variable)
        if item.variable in seen:
            raise DuplicateEvidenceError(f"{var.name} appears more than once in the evidence")
        seen.add(item.variable)
        if not 0 <= item.value < var.domain_size:
            raise InvalidEvidenceError(
                f"symbol {item.value} out of range for {var.name} (size {var.domain_size})"
            )


def apply_interventions(
    process: CausalProcess, interventions: Sequence[EvidenceItem]
) -> CausalProcess:
    """Return the mutilated process for ``do(...)`` on every listed variable."""
    _check_evidence(process, interventions)
    replacements = {}
    for item in interventions:
        if not item.intervened:
            raise InvalidEvidenceError(f"{item} is not an intervention")
        size = process.variables[item.variable].domain_size
        table = np.zeros(size)
        table[item.value] = 1.0
        replacements[item.variable] = Mechanism(item.variable, (), table)
    if not replacements:
        return process
    return process.replace_mechanisms(replacements)


def joint_tensor(process: CausalProcess, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Dense joint distribution with one axis per variable."""
    if process.n_assignments > cap:
        raise CapacityError(
            f"{process.name}: {process.n_assignments} joint assignments exceed cap {cap}"
        )
    n = len(process.variables)
    joint = np.ones(process.shape)
    for mech in process.mechanisms:
        axes = mech.parents + (mech.variable,)
        order = np.argsort(axes)
        table = np.transpose(mech.table, order)
        bshape = [1] * n
        for ax in sorted(axes):
            bshape[ax] = process.shape[ax]
        joint = joint * table.reshape(bshape)
    return joint


def query_joint(
    process: CausalProcess,
    targets: Sequence[int],
    evidence: Sequence[EvidenceItem] = (),
) -> np.ndarray:
    """Joint posterior over ``targets`` (axes in the given order)."""
    targets = [process.var_id(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise InvalidEvidenceError("duplicate query target")
    _check_evidence(process, evidence)
    for item in evidence:
        if item.variable in targets:
            raise InvalidEvidenceError(
                f"target {process.variables[item.variable].name} is also evidence"
            )
    mutilated = apply_interventions(process, [e for e in evidence if e.intervened])
    joint = joint_tensor(mutilated)

    index: list = [slice(None)] * len(process.variables)
    for item in evidence:
        index[item.variable] = item.value
    sliced = joint[tuple(index)]
    # axes surviving the slice, in ascending variable order
    free = [i for i in range(len(process.variables)) if not isinstance(index[i], int)]
    keep = tuple(free.index(t) for t in targets)
    drop = tuple(i for i in range(len(free)) if i not in keep)
    marginal = sliced.sum(axis=drop) if drop else sliced
    total = marginal.sum()
    if total <= 0.0:
        raise ZeroProbabilityEvidenceError(
            "evidence " + ", ".join(_describe(process, e) for e in evidence) + " has probability zero"
        )
    # reorder remaining axes to match ``targets``
    remaining = sorted(keep)
    marginal = np.transpose(marginal, [remaining.index(k) for k in keep])
    return marginal / total


def _describe(process: CausalProcess, item: EvidenceItem) -> str:
    var = process.variables[item.variable]
    body = f"{var.name}={var.label(item.value)}"
    return f"do({body})" if item.intervened else body


def query(
    process: CausalProcess, target: int | str, evidence: Sequence[EvidenceItem] = ()
) -> Distribution:
    """``P(target | evidence)`` with ``do`` items applied as interventions."""
    probs = query_joint(process, [process.var_id(target)], evidence)
    return Distribution(probs)
