from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from causalseq.engine import CausalProcess, EvidenceItem, Mechanism, Mode, Role, VariableSpec

CONSTANTS_PATH = Path(__file__).with_name("derived_constants.json")


@pytest.fixture(scope="session")
def derived():
    return json.loads(CONSTANTS_PATH.read_text())


def random_process(rng: np.random.Generator, max_vars: int = 5, max_size: int = 3,
                   zero_rate: float = 0.15) -> CausalProcess:
    """Small random process; some rows get exact zeros."""
    n = int(rng.integers(1, max_vars + 1))
    roles = list(Role)
    variables, mechanisms = [], []
    for v in range(n):
        size = int(rng.integers(1, max_size + 1))
        variables.append(VariableSpec(v, f"V{v}", roles[int(rng.integers(len(roles)))], size))
        parents = tuple(p for p in range(v) if rng.random() < 0.5)
        shape = tuple(variables[p].domain_size for p in parents) + (size,)
        table = rng.dirichlet(np.ones(size), size=shape[:-1]) if parents else rng.dirichlet(np.ones(size))
        table = np.asarray(table).reshape(shape)
        mask = rng.random(shape) < zero_rate
        mask[..., 0] = False
        table = np.where(mask, 0.0, table)
        table = table / table.sum(axis=-1, keepdims=True)
        mechanisms.append(Mechanism(v, parents, table))
    return CausalProcess(tuple(variables), tuple(mechanisms), name="fuzz")


def random_evidence(rng: np.random.Generator, process: CausalProcess, target: int,
                    max_items: int = 3) -> list[EvidenceItem]:
    others = [v for v in range(len(process.variables)) if v != target]
    k = int(rng.integers(0, min(max_items, len(others)) + 1))
    chosen = sorted(rng.choice(others, size=k, replace=False).tolist()) if k else []
    return [
        EvidenceItem(
            v,
            int(rng.integers(process.variables[v].domain_size)),
            Mode.INTERVENE if rng.random() < 0.5 else Mode.CONDITION,
        )
        for v in chosen
    ]


def evidence_combinations(process: CausalProcess, target: int, max_items: int = 3):
    """Every evidence list of up to ``max_items`` items, all modes and values."""
    others = [v for v in range(len(process.variables)) if v != target]
    for k in range(max_items + 1):
        for vars_ in itertools.combinations(others, k):
            for values in itertools.product(*(range(process.variables[v].domain_size) for v in vars_)):
                for modes in itertools.product(list(Mode), repeat=k):
                    yield [EvidenceItem(v, x, m) for v, x, m in zip(vars_, values, modes)]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
