"""Action selection from a causal process with hidden latent variables.

The workhorse is :class:`BeliefState`, a sequential filter over the block of
latent variables seen so far.  It consumes a tagged history one item at a
time using only raw mechanism entries:

* a latent variable is integrated in by multiplying its mechanism row
  (the "new parameter" factor);
* a conditioned symbol multiplies in its likelihood and renormalizes;
* an intervened symbol is recorded as a parent value and contributes no
  factor at all.

Running the filter with actions intervened gives the recursive posterior
``P(theta_{1:t+1} | do(a_{1:t}), o_{1:t})``; with actions conditioned it gives
the deluded posterior.  The next-action distribution is the posterior
mixture of the expert's mechanism rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .engine import CausalProcess, Distribution, EvidenceItem, Mode, Role
from .errors import InvalidEvidenceError, ZeroProbabilityEvidenceError
from .rng import categorical

__all__ = [
    "HistoryError",
    "BeliefState",
    "LatentPosterior",
    "PosteriorTrace",
    "validate_history",
    "next_action",
    "posterior_recursive",
    "action_distribution_interventional",
    "action_distribution_conditional",
    "thompson_sample",
    "thompson_marginal",
    "predictive",
]

TaggedHistory = Sequence[EvidenceItem]


class HistoryError(InvalidEvidenceError):
    """History is not a well-formed prefix of the process."""


def validate_history(process: CausalProcess, history: TaggedHistory) -> None:
    last = -1
    for item in history:
        var = process.variable(item.variable)
        if item.variable <= last:
            raise HistoryError(f"history ids must strictly increase (at {var.name})")
        last = item.variable
        if not 0 <= item.value < var.domain_size:
            raise HistoryError(f"symbol {item.value} out of range for {var.name}")
        if var.role is Role.OBSERVATION and item.mode is Mode.INTERVENE:
            raise HistoryError(f"observation {var.name} cannot be intervened here")


@dataclass(frozen=True)
class LatentPosterior:
    """Sparse posterior over the latent block: one row per joint assignment."""

    latent_ids: tuple[int, ...]
    assignments: np.ndarray  # (K, len(latent_ids))
    probs: np.ndarray  # (K,)

    def dense(self, process: CausalProcess) -> np.ndarray:
        shape = [process.variables[v].domain_size for v in self.latent_ids]
        out = np.zeros(shape)
        for row, p in zip(self.assignments, self.probs):
            out[tuple(row)] += p
        return out

    def marginal(self, process: CausalProcess, var: int) -> Distribution:
        col = self.latent_ids.index(var)
        out = np.zeros(process.variables[var].domain_size)
        np.add.at(out, self.assignments[:, col], self.probs)
        return Distribution(out)


@dataclass(frozen=True)
class PosteriorTrace:
    """Posterior after the prior and after each history item.

    ``normalizers[i]`` is the likelihood of item ``i`` under the previous
    posterior (1.0 for intervened items, which contribute no factor).
    """

    steps: tuple[LatentPosterior, ...]
    normalizers: tuple[float, ...]

    @property
    def final(self) -> LatentPosterior:
        return self.steps[-1]


class BeliefState:
    """Incremental posterior over latent variables given a tagged history."""

    def __init__(self, process: CausalProcess):
        self.process = process
        self.position = 0
        self.latent_ids: list[int] = []
        self.assignments = np.zeros((1, 0), dtype=np.int64)
        self.weights = np.ones(1)
        self.known: dict[int, int] = {}

    def copy(self) -> "BeliefState":
        other = BeliefState(self.process)
        other.position = self.position
        other.latent_ids = list(self.latent_ids)
        other.assignments = self.assignments
        other.weights = self.weights
        other.known = dict(self.known)
        return other

    def _rows(self, var: int) -> np.ndarray:
        """Mechanism rows of ``var`` for every latent assignment, shape (K, d)."""
        mech = self.process.mechanisms[var]
        index = []
        for p in mech.parents:
            if p in self.known:
                index.append(self.known[p])
            else:
                index.append(self.assignments[:, self.latent_ids.index(p)])
        rows = mech.table[tuple(index)]
        if rows.ndim == 1:
            rows = np.broadcast_to(rows, (len(self.weights), rows.size))
        return rows

    def _integrate_latent(self, var: int) -> None:
        rows = self._rows(var)
        k, d = rows.shape
        weights = (self.weights[:, None] * rows).ravel()
        assignments = np.concatenate(
            [np.repeat(self.assignments, d, axis=0), np.tile(np.arange(d), k)[:, None]],
            axis=1,
        )
        keep = weights > 0
        self.assignments = assignments[keep]
        self.weights = weights[keep]
        self.latent_ids.append(var)

    def advance_to(self, var: int) -> None:
        """Integrate every latent variable before ``var``."""
        for v in range(self.position, var):
            if self.process.variables[v].role is Role.LATENT:
                self._integrate_latent(v)
            else:
                raise HistoryError(
                    f"{self.process.variables[v].name} is missing from the history"
                )
        self.position = max(self.position, var)

    def update(self, item: EvidenceItem) -> float:
        """Absorb one history item; returns its likelihood (1.0 if intervened)."""
        if item.variable < self.position:
            raise HistoryError("history items must be in increasing variable order")
        self.advance_to(item.variable)
        var = self.process.variables[item.variable]
        z = 1.0
        if var.role is Role.LATENT:
            if item.intervened:
                col = np.full((len(self.weights), 1), item.value)
                self.assignments = np.concatenate([self.assignments, col], axis=1)
                self.latent_ids.append(item.variable)
            else:
                self._integrate_latent(item.variable)
                keep = self.assignments[:, -1] == item.value
                z = self._renormalize(np.where(keep, self.weights, 0.0), item)
        else:
            if not item.intervened:
                lik = self._rows(item.variable)[:, item.value]
                z = self._renormalize(self.weights * lik, item)
            self.known[item.variable] = item.value
        self.position = item.variable + 1
        return z

    def _renormalize(self, weights: np.ndarray, item: EvidenceItem) -> float:
        z = float(weights.sum())
        if z <= 0.0:
            name = self.process.variables[item.variable].name
            raise ZeroProbabilityEvidenceError(
                f"history item {name}={item.value} has probability zero"
            )
        keep = weights > 0
        self.assignments = self.assignments[keep]
        self.weights = weights[keep] / z
        return z

    def posterior(self) -> LatentPosterior:
        return LatentPosterior(
            tuple(self.latent_ids), self.assignments.copy(), self.weights.copy()
        )

    def predictive(self, var: int) -> np.ndarray:
        """Posterior predictive of the (non-latent) variable ``var``."""
        self.advance_to(var)
        return self.weights @ self._rows(var)


def next_action(process: CausalProcess, history: TaggedHistory) -> int:
    start = history[-1].variable + 1 if history else 0
    for v in range(start, len(process.variables)):
        role = process.variables[v].role
        if role is Role.LATENT:
            continue
        if role is not Role.ACTION:
            raise HistoryError(
                f"next variable after the history is {process.variables[v].name}, not an action"
            )
        return v
    raise HistoryError("history already covers every action of the process")


def _retag(process: CausalProcess, history: TaggedHistory, mode: Mode | None) -> list:
    out = []
    for item in history:
        if process.variables[item.variable].role is Role.ACTION:
            out.append(replace(item, mode=mode))
        else:
            out.append(item)
    return out


def _filtered(process: CausalProcess, history: TaggedHistory) -> BeliefState:
    validate_history(process, history)
    state = BeliefState(process)
    for item in history:
        state.update(item)
    return state


def posterior_recursive(process: CausalProcess, history: TaggedHistory) -> PosteriorTrace:
    """Posterior over ``theta_{1:t+1}`` given ``do(a_{1:t}), o_{1:t}``, step by step."""
    validate_history(process, history)
    for item in history:
        if process.variables[item.variable].role is Role.ACTION and not item.intervened:
            raise HistoryError("posterior_recursive expects every action to be intervened")
    state = BeliefState(process)
    start = history[0].variable if history else len(process.variables)
    _advance_latents(state, start)
    steps, normalizers = [state.posterior()], [1.0]
    for item in history:
        normalizers.append(state.update(item))
        steps.append(state.posterior())
    end = _next_non_latent(process, state.position)
    _advance_latents(state, end)
    steps[-1] = state.posterior()
    return PosteriorTrace(tuple(steps), tuple(normalizers))


def _next_non_latent(process: CausalProcess, start: int) -> int:
    for v in range(start, len(process.variables)):
        if process.variables[v].role is not Role.LATENT:
            return v
    return len(process.variables)


def _advance_latents(state: BeliefState, stop: int) -> None:
    stop = min(stop, _next_non_latent(state.process, state.position))
    state.advance_to(stop)


def action_distribution_interventional(
    process: CausalProcess, history: TaggedHistory
) -> Distribution:
    """``P(A_{t+1} | do(a_{1:t}), o_{1:t})``; past actions are re-tagged as interventions."""
    history = _retag(process, history, Mode.INTERVENE)
    target = next_action(process, history)
    return Distribution(_filtered(process, history).predictive(target))


def action_distribution_conditional(
    process: CausalProcess, history: TaggedHistory
) -> Distribution:
    """Deluded baseline ``P(A_{t+1} | a_{1:t}, o_{1:t})`` with actions as evidence."""
    history = _retag(process, history, Mode.CONDITION)
    target = next_action(process, history)
    return Distribution(_filtered(process, history).predictive(target))


def predictive(process: CausalProcess, history: TaggedHistory, target: int) -> Distribution:
    """Posterior predictive of any later non-latent ``target``, history tags as given."""
    state = _filtered(process, history)
    if target < state.position:
        raise HistoryError("target precedes the end of the history")
    for v in range(state.position, target):
        if process.variables[v].role is not Role.LATENT:
            raise HistoryError(f"{process.variables[v].name} is missing from the history")
    return Distribution(state.predictive(target))


def _expert_rows(process: CausalProcess, history: TaggedHistory):
    history = _retag(process, history, Mode.INTERVENE)
    target = next_action(process, history)
    state = _filtered(process, history)
    state.advance_to(target)
    return state.weights, state._rows(target)


def thompson_sample(
    process: CausalProcess, history: TaggedHistory, rng: np.random.Generator
) -> int:
    """Draw latent values from the posterior, then act as the expert would."""
    weights, rows = _expert_rows(process, history)
    k = categorical(weights, rng)
    return categorical(rows[k], rng)


def thompson_marginal(process: CausalProcess, history: TaggedHistory) -> Distribution:
    """Exact action law induced by :func:`thompson_sample`.

    Sums over the sampler's two draws explicitly rather than reusing the
    predictive mixture.
    """
    weights, rows = _expert_rows(process, history)
    out = np.zeros(rows.shape[1])
    for w, row in zip(weights, rows):
        for a, q in enumerate(row):
            out[a] += w * q
    return Distribution(out)
