"""Built-in causal processes.

Symbol conventions: the prize-or-frog boxes and bandit arms carry 1-based
labels ("1", "2", ...) on 0-based symbols.  Binary reward/outcome variables
use symbol 1 for a reward (+1) and symbol 0 for no reward (-1), with labels
"-1"/"+1" where the original outcome is signed.
"""

from __future__ import annotations

import numpy as np

from .engine import ENUMERATION_CAP, CausalProcess, Mechanism, Role, VariableSpec
from .errors import CapacityError

__all__ = [
    "BUILTINS",
    "build",
    "build_prize_or_frog",
    "build_prize_or_frog_reversed",
    "build_bandit",
    "build_two_round_binary",
    "build_language_toy",
    "build_goal_process",
]

BANDIT_ARMS = 5
BANDIT_EXPERT_MATCH = 0.6
BANDIT_EXPERT_OTHER = 0.1
BANDIT_REWARD_MATCH = 0.75
BANDIT_REWARD_OTHER = 0.25

BOX_LABELS = ("1", "2")
SIGNED_LABELS = ("-1", "+1")


def _process(name, variables, mechanisms):
    specs = [
        VariableSpec(i, vname, role, size, labels)
        for i, (vname, role, size, labels) in enumerate(variables)
    ]
    mechs = [Mechanism(i, parents, table) for i, (parents, table) in enumerate(mechanisms)]
    return CausalProcess(tuple(specs), tuple(mechs), name=name)


def _copy_table(n: int) -> np.ndarray:
    return np.eye(n)


def _prize_outcome() -> np.ndarray:
    # [theta, a, o]: prize (+1, symbol 1) iff the opened box holds it
    table = np.zeros((2, 2, 2))
    for theta in range(2):
        for a in range(2):
            table[theta, a, 1 if a == theta else 0] = 1.0
    return table


def build_prize_or_frog() -> CausalProcess:
    """Theta -> A -> O with Theta -> O; expert always opens the prize box."""
    return _process(
        "prize-or-frog",
        [
            ("Theta", Role.LATENT, 2, BOX_LABELS),
            ("A", Role.ACTION, 2, BOX_LABELS),
            ("O", Role.OBSERVATION, 2, SIGNED_LABELS),
        ],
        [
            ((), np.array([0.5, 0.5])),
            ((0,), _copy_table(2)),
            ((0, 1), _prize_outcome()),
        ],
    )


def build_prize_or_frog_reversed() -> CausalProcess:
    """Same joint as prize-or-frog, but the action causally precedes the box."""
    outcome = np.transpose(_prize_outcome(), (1, 0, 2))  # parents (A, Theta)
    return _process(
        "prize-or-frog-reversed",
        [
            ("A", Role.ACTION, 2, BOX_LABELS),
            ("Theta", Role.LATENT, 2, BOX_LABELS),
            ("O", Role.OBSERVATION, 2, SIGNED_LABELS),
        ],
        [
            ((), np.array([0.5, 0.5])),
            ((0,), _copy_table(2)),
            ((0, 1), outcome),
        ],
    )


def bandit_size(horizon: int) -> int:
    return BANDIT_ARMS * (BANDIT_ARMS * 2) ** horizon


def build_bandit(horizon: int, *, exact: bool = True) -> CausalProcess:
    """Five-armed Bernoulli bandit with a noisy expert who knows the best arm.

    With ``exact=True`` the process must fit the enumeration cap; pass
    ``exact=False`` for long horizons that are only used through the
    recursive posterior.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if exact and bandit_size(horizon) > ENUMERATION_CAP:
        raise CapacityError(
            f"bandit horizon {horizon} has {bandit_size(horizon)} joint assignments, "
            f"above the exact-inference cap {ENUMERATION_CAP}"
        )
    n = BANDIT_ARMS
    expert = np.full((n, n), BANDIT_EXPERT_OTHER)
    np.fill_diagonal(expert, BANDIT_EXPERT_MATCH)
    p_reward = np.full((n, n), BANDIT_REWARD_OTHER)
    np.fill_diagonal(p_reward, BANDIT_REWARD_MATCH)
    reward = np.stack([1.0 - p_reward, p_reward], axis=-1)  # [theta, a, o]

    arms = tuple(str(k + 1) for k in range(n))
    variables = [("Theta", Role.LATENT, n, arms)]
    mechanisms = [((), np.full(n, 1.0 / n))]
    for t in range(1, horizon + 1):
        a_id = len(variables)
        variables.append((f"A_{t}", Role.ACTION, n, arms))
        mechanisms.append(((0,), expert))
        variables.append((f"O_{t}", Role.OBSERVATION, 2, None))
        mechanisms.append(((0, a_id), reward))
    return _process(f"bandit-{horizon}", variables, mechanisms)


def _binary_match(p_match: float) -> np.ndarray:
    return np.array([[p_match, 1 - p_match], [1 - p_match, p_match]])


def _binary_outcome(p_hit: float, p_miss: float) -> np.ndarray:
    table = np.zeros((2, 2, 2))
    for theta in range(2):
        for a in range(2):
            p1 = p_hit if a == theta else p_miss
            table[theta, a] = (1 - p1, p1)
    return table


def build_two_round_binary() -> CausalProcess:
    """Two rounds of (Theta_t, A_t, O_t) with a slowly drifting latent."""
    return _process(
        "two-round-binary",
        [
            ("Theta_1", Role.LATENT, 2, None),
            ("A_1", Role.ACTION, 2, None),
            ("O_1", Role.OBSERVATION, 2, None),
            ("Theta_2", Role.LATENT, 2, None),
            ("A_2", Role.ACTION, 2, None),
            ("O_2", Role.OBSERVATION, 2, None),
        ],
        [
            ((), np.array([0.5, 0.5])),
            ((0,), _binary_match(0.8)),
            ((0, 1), _binary_outcome(0.7, 0.3)),
            ((0,), _binary_match(0.9)),
            ((3,), _binary_match(0.8)),
            ((3, 4), _binary_outcome(0.7, 0.3)),
        ],
    )


LANGUAGE_TOKENS = np.array([[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]])


def build_language_toy() -> CausalProcess:
    """Hidden intention plus four tokens drawn i.i.d. given the intention.

    ``x_2`` is the token the model generated itself, hence the action role.
    """
    roles = [Role.OBSERVATION, Role.ACTION, Role.OBSERVATION, Role.OBSERVATION]
    variables = [("Theta", Role.LATENT, 2, None)]
    mechanisms = [((), np.array([0.5, 0.5]))]
    for k, role in enumerate(roles, start=1):
        variables.append((f"x_{k}", role, 3, None))
        mechanisms.append(((0,), LANGUAGE_TOKENS))
    return _process("language-toy", variables, mechanisms)


def build_goal_process() -> CausalProcess:
    """Theta, A, O, G with the goal variable a noisy copy of the outcome.

    The two task instances differ in how rewarding they are, which makes the
    outcome (and hence the goal) informative about Theta.
    """
    expert = _binary_match(0.8)
    outcome = np.zeros((2, 2, 2))
    for theta, (hit, miss) in enumerate([(0.9, 0.2), (0.6, 0.1)]):
        for a in range(2):
            p1 = hit if a == theta else miss
            outcome[theta, a] = (1 - p1, p1)
    goal = np.zeros((2, 2, 2))  # [theta, o, g]
    for theta in range(2):
        goal[theta] = _binary_match(0.9)
    return _process(
        "goal",
        [
            ("Theta", Role.LATENT, 2, None),
            ("A", Role.ACTION, 2, None),
            ("O", Role.OBSERVATION, 2, None),
            ("G", Role.GOAL, 2, None),
        ],
        [
            ((), np.array([0.5, 0.5])),
            ((0,), expert),
            ((0, 1), outcome),
            ((0, 2), goal),
        ],
    )


BUILTINS = {
    "prize-or-frog": build_prize_or_frog,
    "prize-or-frog-reversed": build_prize_or_frog_reversed,
    "bandit": lambda horizon=2: build_bandit(horizon),
    "two-round-binary": build_two_round_binary,
    "language-toy": build_language_toy,
    "goal": build_goal_process,
}


def build(name: str, horizon: int | None = None, *, exact: bool = True) -> CausalProcess:
    """Construct a built-in by name; ``horizon`` applies to the bandit only."""
    if name not in BUILTINS:
        raise KeyError(f"unknown process {name!r}; valid names: {', '.join(sorted(BUILTINS))}")
    if name == "bandit":
        return build_bandit(horizon if horizon is not None else 2, exact=exact)
    return BUILTINS[name]()


def all_builtins() -> list[CausalProcess]:
    return [build(name) for name in BUILTINS]

