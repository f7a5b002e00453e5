"""Brute-force reference computations.

Everything here is written for clarity over speed, by walking explicit
lists of ``(assignment, probability)`` rows.  The module reads raw mechanism
tables but deliberately shares no inference routine with :mod:`engine`,
:mod:`policies` or :mod:`trainer`, so agreement between them is evidence of
correctness rather than of shared code.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .engine import CausalProcess, EvidenceItem, Mode, Role
from .errors import (
    CapacityError,
    DuplicateEvidenceError,
    InvalidEvidenceError,
    ZeroProbabilityEvidenceError,
)

ORACLE_CAP = 2**20

OutcomeTable = list  # list[tuple[tuple[int, ...], float]]


def _factor(process: CausalProcess, var: int, values: Sequence[int]) -> float:
    mech = process.mechanisms[var]
    index = tuple(values[p] for p in mech.parents) + (values[var],)
    return float(mech.table[index])


def outcome_table(
    process: CausalProcess,
    interventions: dict[int, int] | None = None,
    cap: int = ORACLE_CAP,
) -> OutcomeTable:
    """Every full assignment with its probability in the mutilated process.

    An intervened variable contributes the factor 1 at its forced value and
    0 elsewhere; every other variable contributes its mechanism entry.
    """
    interventions = interventions or {}
    sizes = [v.domain_size for v in process.variables]
    if math.prod(sizes) > cap:
        raise CapacityError(f"oracle cap {cap} exceeded ({math.prod(sizes)} assignments)")
    rows = []
    for values in itertools.product(*(range(s) for s in sizes)):
        p = 1.0
        for var in range(len(sizes)):
            if var in interventions:
                p *= 1.0 if values[var] == interventions[var] else 0.0
            else:
                p *= _factor(process, var, values)
        rows.append((values, p))
    return rows


def _split_evidence(process, evidence):
    seen = set()
    conditions, interventions = {}, {}
    for item in evidence:
        if item.variable in seen:
            raise DuplicateEvidenceError(f"variable {item.variable} repeated")
        seen.add(item.variable)
        if not 0 <= item.variable < len(process.variables):
            raise InvalidEvidenceError(f"no variable {item.variable}")
        if not 0 <= item.value < process.variables[item.variable].domain_size:
            raise InvalidEvidenceError(f"value {item.value} out of range")
        if item.mode is Mode.INTERVENE:
            interventions[item.variable] = item.value
        else:
            conditions[item.variable] = item.value
    return conditions, interventions


def oracle_query_joint(
    process: CausalProcess, targets: Sequence[int], evidence: Sequence[EvidenceItem] = ()
) -> np.ndarray:
    conditions, interventions = _split_evidence(process, evidence)
    for t in targets:
        if t in conditions or t in interventions:
            raise InvalidEvidenceError(f"target {t} is also evidence")
    observed = dict(conditions)
    observed.update(interventions)
    out = np.zeros([process.variables[t].domain_size for t in targets])
    total = 0.0
    for values, p in outcome_table(process, interventions):
        if all(values[v] == x for v, x in observed.items()):
            out[tuple(values[t] for t in targets)] += p
            total += p
    if total <= 0.0:
        raise ZeroProbabilityEvidenceError("oracle: evidence has probability zero")
    return out / total


def oracle_query(
    process: CausalProcess, target: int, evidence: Sequence[EvidenceItem] = ()
) -> np.ndarray:
    return oracle_query_joint(process, [target], evidence)


# ---------------------------------------------------------------------------
# braided distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BraidedOutcome:
    theta: int
    actions: tuple[int, ...]
    expert_actions: tuple[int, ...]
    observations: tuple[int, ...]
    prob: float


def _round_ids(Q: CausalProcess, horizon: int) -> list[tuple[int, int]]:
    roles = [v.role for v in Q.variables]
    if roles[0] is not Role.LATENT or Role.LATENT in roles[1:]:
        raise ValueError("braided oracle needs exactly one leading latent variable")
    pairs = [(1 + 2 * t, 2 + 2 * t) for t in range(horizon)]
    if pairs and pairs[-1][1] >= len(roles):
        raise ValueError("horizon exceeds the rounds of the process")
    for a, o in pairs:
        if roles[a] is not Role.ACTION or roles[o] is not Role.OBSERVATION:
            raise ValueError("process does not alternate action/observation")
    return pairs


def history_key(Q: CausalProcess, actions, observations):
    """Tagged key ``do(a_1), o_1, ..., [do(a_t)]`` as engine evidence items."""
    items = []
    for t, a in enumerate(actions):
        items.append(EvidenceItem(1 + 2 * t, a, Mode.INTERVENE))
        if t < len(observations):
            items.append(EvidenceItem(2 + 2 * t, observations[t], Mode.CONDITION))
    return tuple(items)


def oracle_braided(
    Q: CausalProcess,
    policy: Callable[[tuple], np.ndarray] | None,
    horizon: int,
    cap: int = ORACLE_CAP,
) -> list[BraidedOutcome]:
    """Enumerate ``B(theta, a, abar, o)`` for a frozen agent ``policy``.

    ``policy(key)`` returns the agent's action probabilities for a tagged
    pre-action history; ``None`` means uniform.
    """
    pairs = _round_ids(Q, horizon)
    n_theta = Q.variables[0].domain_size
    n_a = [Q.variables[a].domain_size for a, _ in pairs]
    n_o = [Q.variables[o].domain_size for _, o in pairs]
    count = n_theta * math.prod(x * x * y for x, y in zip(n_a, n_o))
    if count > cap:
        raise CapacityError(f"braided enumeration of {count} tuples exceeds cap {cap}")

    n_vars = len(Q.variables)
    rows = []
    for theta in range(n_theta):
        per_round = [
            itertools.product(range(n_a[t]), range(n_a[t]), range(n_o[t]))
            for t in range(horizon)
        ]
        for combo in itertools.product(*[list(r) for r in per_round]):
            values = [0] * n_vars
            values[0] = theta
            p = _factor(Q, 0, values)
            acts, experts, obs = [], [], []
            for t, (a, abar, o) in enumerate(combo):
                a_id, o_id = pairs[t]
                key = history_key(Q, acts, obs)
                agent = (
                    1.0 / n_a[t] if policy is None else float(np.asarray(policy(key))[a])
                )
                values[a_id] = abar
                q_expert = _factor(Q, a_id, values)
                values[a_id] = a
                values[o_id] = o
                q_obs = _factor(Q, o_id, values)
                p *= agent * q_expert * q_obs
                acts.append(a)
                experts.append(abar)
                obs.append(o)
            rows.append(BraidedOutcome(theta, tuple(acts), tuple(experts), tuple(obs), p))
    return rows


def braided_action_weights(Q, table: list[BraidedOutcome], t: int) -> dict[tuple, np.ndarray]:
    """Joint mass of (pre-action history at round ``t``, expert action).

    ``t`` is 1-based.  Up to the sign and log, these are the coefficients of
    the expected counterfactual loss L(A_t).
    """
    a_id = 1 + 2 * (t - 1)
    size = Q.variables[a_id].domain_size
    out: dict[tuple, np.ndarray] = defaultdict(lambda: np.zeros(size))
    for row in table:
        key = history_key(Q, row.actions[: t - 1], row.observations[: t - 1])
        out[key][row.expert_actions[t - 1]] += row.prob
    return dict(out)


def braided_observation_weights(Q, table: list[BraidedOutcome], t: int) -> dict[tuple, np.ndarray]:
    """Joint mass of (history including ``do(a_t)``, observation ``o_t``)."""
    o_id = 2 + 2 * (t - 1)
    size = Q.variables[o_id].domain_size
    out: dict[tuple, np.ndarray] = defaultdict(lambda: np.zeros(size))
    for row in table:
        key = history_key(Q, row.actions[:t], row.observations[: t - 1])
        out[key][row.observations[t - 1]] += row.prob
    return dict(out)


def conditionals(weights: dict[tuple, np.ndarray]) -> dict[tuple, np.ndarray]:
    return {k: w / w.sum() for k, w in weights.items() if w.sum() > 0}


def minimize_cross_entropy(weights: np.ndarray) -> np.ndarray:
    """Numerically minimize ``-sum_k w_k log p_k`` over the probability simplex.

    Parameterized by logits with the first one pinned to zero; solved with an
    exact-Hessian trust region, then refined on the stationarity condition.
    """
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    w = w / total
    n = w.size
    if n == 1:
        return np.ones(1)

    def probs(z):
        logits = np.concatenate([[0.0], z])
        logits -= logits.max()
        e = np.exp(logits)
        return e / e.sum()

    def fun(z):
        p = probs(z)
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        return -float(np.dot(w[w > 0], logp[w > 0]))

    def grad(z):
        return (probs(z) - w)[1:]

    def hess(z):
        p = probs(z)[1:]
        return np.diag(p) - np.outer(p, p)

    res = optimize.minimize(
        fun,
        np.zeros(n - 1),
        jac=grad,
        hess=hess,
        method="trust-exact",
        options={"gtol": 1e-14, "maxiter": 500},
    )
    # Near the optimum the loss changes by less than its own rounding error,
    # which stalls the trust region; the convex loss is polished by solving
    # grad = 0 directly.
    polished = optimize.root(grad, res.x, jac=hess, method="hybr", options={"xtol": 1e-15})
    best = min((res.x, polished.x), key=lambda z: float(np.abs(grad(z)).max()))
    return probs(best)


# ---------------------------------------------------------------------------
# constants minted for the test-suite
# ---------------------------------------------------------------------------


def mint_constants() -> dict[str, float]:
    """Derived reference values, computed by enumeration only."""
    from . import library

    bandit = library.build_bandit(2)
    A1, O1, A2 = (bandit.var_id(n) for n in ("A_1", "O_1", "A_2"))
    a = bandit.variable(A1).symbol("1")
    out: dict[str, float] = {}
    for o in (0, 1):
        deluded = oracle_query(bandit, A2, [EvidenceItem(A1, a, Mode.CONDITION), EvidenceItem(O1, o, Mode.CONDITION)])
        intervened = oracle_query(bandit, A2, [EvidenceItem(A1, a, Mode.INTERVENE), EvidenceItem(O1, o, Mode.CONDITION)])
        out[f"bandit_repeat_conditional_o{o}"] = float(deluded[a])
        out[f"bandit_repeat_interventional_o{o}"] = float(intervened[a])
        post_c = oracle_query(bandit, 0, [EvidenceItem(A1, a, Mode.CONDITION), EvidenceItem(O1, o, Mode.CONDITION)])
        post_i = oracle_query(bandit, 0, [EvidenceItem(A1, a, Mode.INTERVENE), EvidenceItem(O1, o, Mode.CONDITION)])
        out[f"bandit_posterior_conditional_o{o}"] = float(post_c[a])
        out[f"bandit_posterior_interventional_o{o}"] = float(post_i[a])
    p_o1 = float(oracle_query(bandit, O1, [EvidenceItem(A1, a, Mode.INTERVENE)])[1])
    out["bandit_reward_first_round"] = p_o1
    out["bandit_repeat_rate_interventional_h2"] = (
        p_o1 * out["bandit_repeat_interventional_o1"]
        + (1 - p_o1) * out["bandit_repeat_interventional_o0"]
    )
    out["bandit_repeat_rate_conditional_h2"] = (
        p_o1 * out["bandit_repeat_conditional_o1"]
        + (1 - p_o1) * out["bandit_repeat_conditional_o0"]
    )
    one = oracle_braided(library.build_bandit(1), None, 1)
    out["braided_uniform_h1_theta1_a1_abar1_o1"] = next(
        r.prob for r in one
        if r.theta == a and r.actions == (a,) and r.expert_actions == (a,) and r.observations == (1,)
    )

    toy = library.build_language_toy()
    best = max(language_toy_gaps(toy), key=lambda g: g[1])
    out["language_toy_max_tv"] = best[1]
    return out


def language_toy_gaps(toy: CausalProcess) -> list[tuple[tuple[int, int, int], float]]:
    """TV between ``P(x4 | x1, x2, x3)`` and ``P(x4 | x1, do(x2), x3)`` per prefix."""
    x1, x2, x3, x4 = (toy.var_id(n) for n in ("x_1", "x_2", "x_3", "x_4"))
    sizes = [toy.variables[v].domain_size for v in (x1, x2, x3)]
    gaps = []
    for v1, v2, v3 in itertools.product(*(range(s) for s in sizes)):
        c = oracle_query(toy, x4, [EvidenceItem(x1, v1), EvidenceItem(x2, v2), EvidenceItem(x3, v3)])
        i = oracle_query(
            toy, x4,
            [EvidenceItem(x1, v1), EvidenceItem(x2, v2, Mode.INTERVENE), EvidenceItem(x3, v3)],
        )
        gaps.append(((v1, v2, v3), 0.5 * float(np.abs(c - i).sum())))
    return gaps
