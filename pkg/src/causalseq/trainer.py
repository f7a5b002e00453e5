"""Meta-training a tabular agent with factual and counterfactual teaching.

The agent is a pair of count tables keyed by tagged interaction histories.
The history key plays the role of the agent's memory state; appending a
symbol to the key is the memory update.  Keys hold ``do(a)`` for the
agent's own actions and plain ``o`` for observations, so an intervened
symbol and its conditioned twin never share a key.

During training the expert reveals the action it would have taken in the
agent's situation; that action is the only target recorded in the action
table (counterfactual teaching).  The agent's own sampled action moves the
episode forward but is never counted, which is the tabular counterpart of a
stop-gradient.  Observations are counted in the observation table under the
key that already contains the current intervened action (factual teaching).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .engine import CausalProcess, EvidenceItem, Mode, Role
from .errors import ZeroProbabilityEvidenceError
from .policies import predictive
from .rng import categorical, stream

__all__ = [
    "Key",
    "LearnerTable",
    "BraidedEpisode",
    "round_layout",
    "generate_braided",
    "run_training",
    "braided_probability",
    "loss_report",
    "LossReport",
    "minimizer_check",
    "convergence_report",
    "format_key",
]

Key = tuple  # tuple[EvidenceItem, ...]

FROZEN = "frozen"
INTERLEAVED = "interleaved"


def round_layout(Q: CausalProcess, horizon: int) -> list[tuple[int, int]]:
    """``(action id, observation id)`` per round for ``Theta, A_1, O_1, ...``."""
    roles = [v.role for v in Q.variables]
    if not roles or roles[0] is not Role.LATENT or Role.LATENT in roles[1:]:
        raise ValueError(f"{Q.name}: needs a single leading latent variable")
    if horizon < 1 or 2 * horizon + 1 > len(roles):
        raise ValueError(f"{Q.name}: horizon {horizon} not available")
    layout = []
    for t in range(horizon):
        a_id, o_id = 1 + 2 * t, 2 + 2 * t
        if roles[a_id] is not Role.ACTION or roles[o_id] is not Role.OBSERVATION:
            raise ValueError(f"{Q.name}: variables do not alternate action/observation")
        layout.append((a_id, o_id))
    sizes = {Q.variables[a].domain_size for a, _ in layout}
    obs_sizes = {Q.variables[o].domain_size for _, o in layout}
    if len(sizes) != 1 or len(obs_sizes) != 1:
        raise ValueError(f"{Q.name}: action/observation alphabets change between rounds")
    return layout


@dataclass
class LearnerTable:
    """Smoothed count tables ``key -> counts`` for actions and observations.

    Predictions are ``(counts + alpha) / (total + alpha * size)``; a key that
    was never recorded predicts the uniform distribution.
    """

    action_size: int
    observation_size: int
    alpha: float = 1.0
    action_mode: Mode = Mode.INTERVENE
    action_counts: dict = field(default_factory=dict)
    observation_counts: dict = field(default_factory=dict)

    @staticmethod
    def _smoothed(counts, size: int, alpha: float) -> np.ndarray:
        if counts is None:
            return np.full(size, 1.0 / size)
        total = counts.sum()
        if total + alpha * size == 0:
            return np.full(size, 1.0 / size)
        return (counts + alpha) / (total + alpha * size)

    def action_predictive(self, key: Key) -> np.ndarray:
        return self._smoothed(self.action_counts.get(key), self.action_size, self.alpha)

    def observation_predictive(self, key: Key) -> np.ndarray:
        return self._smoothed(
            self.observation_counts.get(key), self.observation_size, self.alpha
        )

    def record_action(self, key: Key, symbol: int) -> None:
        counts = self.action_counts.get(key)
        if counts is None:
            counts = self.action_counts[key] = np.zeros(self.action_size, dtype=np.int64)
        counts[symbol] += 1

    def record_observation(self, key: Key, symbol: int) -> None:
        counts = self.observation_counts.get(key)
        if counts is None:
            counts = self.observation_counts[key] = np.zeros(
                self.observation_size, dtype=np.int64
            )
        counts[symbol] += 1

    def merge(self, other: "LearnerTable") -> None:
        for key, counts in other.action_counts.items():
            self.action_counts.setdefault(key, np.zeros(self.action_size, dtype=np.int64))
            self.action_counts[key] += counts
        for key, counts in other.observation_counts.items():
            self.observation_counts.setdefault(
                key, np.zeros(self.observation_size, dtype=np.int64)
            )
            self.observation_counts[key] += counts

    # -- canonical text export -------------------------------------------

    def dumps(self) -> str:
        lines = [
            "# learner-table v1",
            f"alpha {format(float(self.alpha), '.17g')}",
            f"action_mode {self.action_mode.value}",
            f"action_size {self.action_size}",
            f"observation_size {self.observation_size}",
        ]
        for kind, table in (("action", self.action_counts), ("observation", self.observation_counts)):
            for key in sorted(table, key=_sort_key):
                tokens = " ".join(_token(item) for item in key) or "-"
                counts = " ".join(str(int(c)) for c in table[key])
                lines.append(f"{kind} {tokens} : {counts}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "LearnerTable":
        header: dict[str, str] = {}
        rows = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, _, rest = line.partition(" ")
            if head in ("action", "observation"):
                left, sep, right = rest.partition(":")
                if not sep:
                    raise ValueError(f"line {lineno}: missing ':'")
                tokens = left.split()
                key = () if tokens == ["-"] else tuple(_parse_token(t, lineno) for t in tokens)
                rows.append((head, key, [int(c) for c in right.split()], lineno))
            else:
                header[head] = rest.strip()
        try:
            table = cls(
                action_size=int(header["action_size"]),
                observation_size=int(header["observation_size"]),
                alpha=float(header["alpha"]),
                action_mode=Mode(header["action_mode"]),
            )
        except KeyError as exc:
            raise ValueError(f"learner table is missing header {exc.args[0]!r}") from None
        for kind, key, counts, lineno in rows:
            size = table.action_size if kind == "action" else table.observation_size
            if len(counts) != size or min(counts) < 0:
                raise ValueError(f"line {lineno}: bad counts")
            target = table.action_counts if kind == "action" else table.observation_counts
            target[key] = np.array(counts, dtype=np.int64)
        return table


def _sort_key(key: Key):
    return tuple((i.variable, i.value, i.mode.value) for i in key)


def _token(item: EvidenceItem) -> str:
    body = f"{item.variable}={item.value}"
    return f"do({body})" if item.intervened else body


def _parse_token(tok: str, lineno: int) -> EvidenceItem:
    mode = Mode.CONDITION
    if tok.startswith("do(") and tok.endswith(")"):
        mode, tok = Mode.INTERVENE, tok[3:-1]
    var, sep, value = tok.partition("=")
    if not sep:
        raise ValueError(f"line {lineno}: bad key token {tok!r}")
    return EvidenceItem(int(var), int(value), mode)


def format_key(Q: CausalProcess, key: Key) -> str:
    """Human-readable key, e.g. ``do(A_1=1), O_1=1``."""
    parts = []
    for item in key:
        var = Q.variables[item.variable]
        body = f"{var.name}={var.label(item.value)}"
        parts.append(f"do({body})" if item.intervened else body)
    return ", ".join(parts) if parts else "(empty)"


@dataclass(frozen=True)
class BraidedEpisode:
    """One training realization.

    ``expert_actions[t]`` is ``None`` when the teacher is switched off.
    Losses are the agent's log-losses at generation time.
    """

    theta: int
    actions: tuple[int, ...]
    expert_actions: tuple[int | None, ...]
    observations: tuple[int, ...]
    action_losses: tuple[float, ...] = ()
    observation_losses: tuple[float, ...] = ()

    def action_key(self, t: int) -> Key:
        """Pre-action history for 0-based round ``t``."""
        return _key(self.actions[:t], self.observations[:t])

    def observation_key(self, t: int) -> Key:
        return _key(self.actions[: t + 1], self.observations[:t])


def _key(actions, observations) -> Key:
    items = []
    for t, a in enumerate(actions):
        items.append(EvidenceItem(1 + 2 * t, a, Mode.INTERVENE))
        if t < len(observations):
            items.append(EvidenceItem(2 + 2 * t, observations[t], Mode.CONDITION))
    return tuple(items)


def _row(Q: CausalProcess, var: int, values: list[int]) -> np.ndarray:
    mech = Q.mechanisms[var]
    return mech.table[tuple(values[p] for p in mech.parents)]


def generate_braided(
    Q: CausalProcess,
    horizon: int,
    episodes: int,
    seed: int,
    policy: LearnerTable | None = None,
    *,
    teacher: bool = True,
) -> Iterator[BraidedEpisode]:
    """Lazily generate braided episodes.

    ``policy`` is the agent whose action predictive drives the episode; it
    is read afresh for every action, so a table updated by the consumer
    between episodes yields interleaved training.  ``None`` is the frozen
    uniform agent.  Agent, environment and expert each draw from their own
    stream, so switching the teacher off leaves every history unchanged.
    """
    layout = round_layout(Q, horizon)
    n_actions = Q.variables[layout[0][0]].domain_size
    uniform = np.full(n_actions, 1.0 / n_actions)
    agent_rng, env_rng, expert_rng = (stream(seed, k) for k in range(3))
    for _ in range(episodes):
        values = [0] * len(Q.variables)
        theta = categorical(Q.mechanisms[0].table, env_rng)
        values[0] = theta
        acts, experts, obs = [], [], []
        a_losses, o_losses = [], []
        key: Key = ()
        for a_id, o_id in layout:
            p_act = uniform if policy is None else policy.action_predictive(key)
            a = categorical(p_act, agent_rng)
            abar = None
            if teacher:
                abar = categorical(_row(Q, a_id, values), expert_rng)
                a_losses.append(-math.log(p_act[abar]))
            values[a_id] = a
            key = key + (EvidenceItem(a_id, a, Mode.INTERVENE),)
            o = categorical(_row(Q, o_id, values), env_rng)
            if policy is not None:
                o_losses.append(-math.log(policy.observation_predictive(key)[o]))
            values[o_id] = o
            key = key + (EvidenceItem(o_id, o, Mode.CONDITION),)
            acts.append(a)
            experts.append(abar)
            obs.append(o)
        yield BraidedEpisode(
            theta, tuple(acts), tuple(experts), tuple(obs), tuple(a_losses), tuple(o_losses)
        )


def _absorb(learner: LearnerTable, episode: BraidedEpisode) -> None:
    for t in range(len(episode.actions)):
        abar = episode.expert_actions[t]
        if abar is not None:
            learner.record_action(episode.action_key(t), abar)
        learner.record_observation(episode.observation_key(t), episode.observations[t])


def run_training(
    Q: CausalProcess,
    horizon: int,
    episodes: int,
    alpha: float = 1.0,
    seed: int = 0,
    *,
    variant: str = INTERLEAVED,
    collect: list | None = None,
) -> LearnerTable:
    """Train a fresh :class:`LearnerTable` on ``episodes`` braided episodes.

    ``variant="interleaved"`` lets the table being trained choose the agent's
    actions; ``variant="frozen"`` uses a uniform agent throughout.
    """
    if episodes < 1:
        raise ValueError("episode count must be at least 1")
    if variant not in (FROZEN, INTERLEAVED):
        raise ValueError(f"unknown training variant {variant!r}")
    layout = round_layout(Q, horizon)
    learner = LearnerTable(
        action_size=Q.variables[layout[0][0]].domain_size,
        observation_size=Q.variables[layout[0][1]].domain_size,
        alpha=alpha,
    )
    policy = learner if variant == INTERLEAVED else None
    for episode in generate_braided(Q, horizon, episodes, seed, policy):
        _absorb(learner, episode)
        if collect is not None:
            collect.append(episode)
    return learner


def braided_probability(
    Q: CausalProcess, learner: LearnerTable | None, episode: BraidedEpisode
) -> float:
    """Probability of ``episode`` under the braided law with agent ``learner``."""
    horizon = len(episode.actions)
    layout = round_layout(Q, horizon)
    values = [0] * len(Q.variables)
    values[0] = episode.theta
    p = float(Q.mechanisms[0].table[episode.theta])
    for t, (a_id, o_id) in enumerate(layout):
        a, abar, o = episode.actions[t], episode.expert_actions[t], episode.observations[t]
        if learner is None:
            p_agent = 1.0 / Q.variables[a_id].domain_size
        else:
            p_agent = float(learner.action_predictive(episode.action_key(t))[a])
        p_expert = float(_row(Q, a_id, values)[abar])
        values[a_id] = a
        p_obs = float(_row(Q, o_id, values)[o])
        values[o_id] = o
        p *= p_agent * p_expert * p_obs
    return p


@dataclass(frozen=True)
class LossReport:
    """Mean log-losses per round (index 0 is round 1)."""

    action: np.ndarray
    observation: np.ndarray
    episodes: int


def loss_report(learner: LearnerTable, episodes: Sequence[BraidedEpisode]) -> LossReport:
    """Counterfactual action loss and factual observation loss on held-out episodes."""
    if not episodes:
        raise ValueError("no episodes")
    horizon = len(episodes[0].actions)
    act = np.zeros(horizon)
    obs = np.zeros(horizon)
    for ep in episodes:
        for t in range(horizon):
            act[t] -= math.log(learner.action_predictive(ep.action_key(t))[ep.expert_actions[t]])
            obs[t] -= math.log(
                learner.observation_predictive(ep.observation_key(t))[ep.observations[t]]
            )
    return LossReport(act / len(episodes), obs / len(episodes), len(episodes))


def minimizer_check(learner: LearnerTable, tol: float = 1e-12) -> bool:
    """Every stored row predicts ``(counts + alpha) / (total + alpha * size)``.

    That estimator is the minimizer of the empirical cross-entropy under the
    symmetric pseudo-count prior, so a passing table is at the optimum of
    its training loss.
    """
    a = learner.alpha
    tables = (
        (learner.action_counts, learner.action_size, learner.action_predictive),
        (learner.observation_counts, learner.observation_size, learner.observation_predictive),
    )
    for counts_by_key, size, predict in tables:
        if predict(("unseen-key",)).tolist() != [1.0 / size] * size:
            return False
        for key, counts in counts_by_key.items():
            if len(counts) != size or np.any(counts < 0):
                return False
            total = int(counts.sum())
            pred = predict(key)
            if abs(pred.sum() - 1.0) > tol or np.any(pred < 0):
                return False
            if total + a * size == 0:
                expected = [1.0 / size] * size
            else:
                expected = [(int(c) + a) / (total + a * size) for c in counts]
            if max(abs(x - y) for x, y in zip(pred, expected)) > tol:
                return False
    return True


@dataclass(frozen=True)
class KeyReport:
    table: str  # "action" | "observation"
    round: int
    key: Key
    count: int
    learned: np.ndarray
    target: np.ndarray
    tv_target: float
    deluded: np.ndarray | None = None
    tv_deluded: float | None = None


def _conditioned(key: Key) -> list[EvidenceItem]:
    return [EvidenceItem(i.variable, i.value, Mode.CONDITION) for i in key]


def _reachable_keys(Q: CausalProcess, layout, t: int, with_action: bool):
    n_a = Q.variables[layout[0][0]].domain_size
    n_o = Q.variables[layout[0][1]].domain_size
    spaces = []
    for _ in range(t):
        spaces += [range(n_a), range(n_o)]
    if with_action:
        spaces.append(range(n_a))
    for combo in itertools.product(*spaces):
        acts = combo[0::2]
        obs = combo[1::2]
        yield _key(acts, obs)


def convergence_report(
    Q: CausalProcess, learner: LearnerTable, horizon: int
) -> list[KeyReport]:
    """Distance of every key at ``horizon`` rounds to its intervened target.

    Action keys are also compared with the deluded conditional that
    conditions on past actions instead.  Targets are exact posterior
    predictives of ``Q``.
    """
    layout = round_layout(Q, horizon)
    rows = []
    for t, (a_id, o_id) in enumerate(layout):
        for key in _reachable_keys(Q, layout, t, with_action=False):
            counts = learner.action_counts.get(key)
            learned = learner.action_predictive(key)
            try:
                target = predictive(Q, key, a_id).probs
                deluded = predictive(Q, _conditioned(key), a_id).probs
            except ZeroProbabilityEvidenceError:
                continue
            rows.append(KeyReport(
                "action", t + 1, key, 0 if counts is None else int(counts.sum()),
                learned, target, 0.5 * float(np.abs(learned - target).sum()),
                deluded, 0.5 * float(np.abs(learned - deluded).sum()),
            ))
        for key in _reachable_keys(Q, layout, t, with_action=True):
            counts = learner.observation_counts.get(key)
            learned = learner.observation_predictive(key)
            try:
                target = predictive(Q, key, o_id).probs
            except ZeroProbabilityEvidenceError:
                continue
            rows.append(KeyReport(
                "observation", t + 1, key, 0 if counts is None else int(counts.sum()),
                learned, target, 0.5 * float(np.abs(learned - target).sum()),
            ))
    return rows
