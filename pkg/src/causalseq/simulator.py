"""Seeded agent/environment interaction loops and batch experiments.

The environment is the process itself: latent variables and observations
are drawn from their mechanisms given the true state, actions come from the
policy under test.  The policy never sees latent values.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import CausalProcess, EvidenceItem, Mode, Role
from .errors import ZeroProbabilityEvidenceError
from .policies import BeliefState, predictive
from .rng import categorical, derive_seed, make_rng
from .trainer import LearnerTable, format_key, round_layout

__all__ = [
    "PolicyKind",
    "EpisodeRecord",
    "ExperimentSummary",
    "run_episode",
    "run_experiment",
    "sample_trajectories",
    "fit_offline_table",
    "offline_demo",
    "OfflineReport",
    "SUMMARY_COLUMNS",
    "LOG_VERSION",
]

LOG_VERSION = 1


class PolicyKind(enum.Enum):
    CONDITIONAL = "conditional"
    INTERVENTIONAL = "interventional"
    LEARNED = "learned"


@dataclass
class EpisodeRecord:
    seed: int
    process: str
    kind: PolicyKind
    horizon: int
    latent: dict[str, int]
    actions: list[int] = field(default_factory=list)
    observations: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    best: list[bool] = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None

    def repeats(self) -> int:
        return sum(1 for a, b in zip(self.actions, self.actions[1:]) if a == b)

    def to_json(self) -> str:
        mode = Mode.CONDITION if self.kind is PolicyKind.CONDITIONAL else Mode.INTERVENE
        steps = [
            {
                "t": t + 1,
                "action": a,
                "mode": mode.value,
                "observation": o,
                "reward": r,
                "best": b,
            }
            for t, (a, o, r, b) in enumerate(
                zip(self.actions, self.observations, self.rewards, self.best)
            )
        ]
        return json.dumps(
            {
                "version": LOG_VERSION,
                "seed": self.seed,
                "process": self.process,
                "policy": self.kind.value,
                "horizon": self.horizon,
                "latent": self.latent,
                "aborted": self.aborted,
                "abort_reason": self.abort_reason,
                "steps": steps,
            },
            sort_keys=True,
        )


class _ModelAgent:
    """Acts from the posterior predictive; own actions tagged with ``mode``."""

    def __init__(self, process: CausalProcess, mode: Mode):
        self.state = BeliefState(process)
        self.mode = mode

    def act(self, var: int, rng) -> int:
        a = categorical(self.state.predictive(var), rng)
        self.state.update(EvidenceItem(var, a, self.mode))
        return a

    def observe(self, var: int, value: int) -> None:
        self.state.update(EvidenceItem(var, value, Mode.CONDITION))


class _TableAgent:
    def __init__(self, table: LearnerTable):
        self.table = table
        self.key: tuple = ()

    def act(self, var: int, rng) -> int:
        a = categorical(self.table.action_predictive(self.key), rng)
        self.key += (EvidenceItem(var, a, self.table.action_mode),)
        return a

    def observe(self, var: int, value: int) -> None:
        self.key += (EvidenceItem(var, value, Mode.CONDITION),)


def _agent(process, kind: PolicyKind, learner):
    if kind is PolicyKind.CONDITIONAL:
        return _ModelAgent(process, Mode.CONDITION)
    if kind is PolicyKind.INTERVENTIONAL:
        return _ModelAgent(process, Mode.INTERVENE)
    if learner is None:
        raise ValueError("the learned policy needs a learner table")
    return _TableAgent(learner)


def _row(process: CausalProcess, var: int, values: list[int]) -> np.ndarray:
    mech = process.mechanisms[var]
    return mech.table[tuple(values[p] for p in mech.parents)]


def _reward_var(process: CausalProcess, action: int) -> int | None:
    for v in range(action + 1, len(process.variables)):
        role = process.variables[v].role
        if role is Role.OBSERVATION:
            return v
        if role is Role.ACTION:
            return None
    return None


def _best_actions(process: CausalProcess, action: int, values: list[int]) -> set[int]:
    """Actions maximizing the expected symbol of the next observation."""
    obs = _reward_var(process, action)
    if obs is None or action not in process.mechanisms[obs].parents:
        return set(range(process.variables[action].domain_size))
    trial = list(values)
    symbols = np.arange(process.variables[obs].domain_size)
    scores = []
    for a in range(process.variables[action].domain_size):
        trial[action] = a
        scores.append(float(_row(process, obs, trial) @ symbols))
    top = max(scores)
    return {a for a, s in enumerate(scores) if math.isclose(s, top, rel_tol=0, abs_tol=1e-12)}


def run_episode(
    process: CausalProcess,
    kind: PolicyKind,
    horizon: int,
    seed: int,
    learner: LearnerTable | None = None,
) -> EpisodeRecord:
    """Play ``horizon`` actions against the process with hidden latents.

    A zero-probability history under the deluded policy ends the episode
    early with ``aborted=True``.
    """
    action_ids = process.ids_with_role(Role.ACTION)
    if not 0 <= horizon <= len(action_ids):
        raise ValueError(f"horizon {horizon} outside 0..{len(action_ids)} for {process.name}")
    rng = make_rng(seed)
    agent = _agent(process, kind, learner)
    stop = action_ids[horizon] if horizon < len(action_ids) else len(process.variables)
    if horizon == 0:
        stop = action_ids[0] if action_ids else len(process.variables)
    values = [0] * len(process.variables)
    record = EpisodeRecord(seed, process.name, kind, horizon, {})
    reward_of = {}
    try:
        for v in range(stop):
            var = process.variables[v]
            if var.role is Role.ACTION:
                best = _best_actions(process, v, values)
                values[v] = agent.act(v, rng)
                record.actions.append(values[v])
                record.best.append(values[v] in best)
                reward_of[_reward_var(process, v)] = len(record.actions) - 1
                continue
            values[v] = categorical(_row(process, v, values), rng)
            if var.role is Role.LATENT:
                record.latent[var.name] = values[v]
            else:
                if v in reward_of:
                    record.observations.append(values[v])
                    record.rewards.append(float(values[v]))
                agent.observe(v, values[v])
    except ZeroProbabilityEvidenceError as exc:
        record.aborted = True
        record.abort_reason = str(exc)
    return record


SUMMARY_COLUMNS = (
    "process",
    "policy",
    "horizon",
    "episodes",
    "aborted",
    "mean_reward",
    "mean_reward_se",
    "best_arm_rate",
    "best_arm_se",
    "repeat_rate",
    "repeat_se",
)


@dataclass
class _Tally:
    """Integer sufficient statistics; merging is exact and order-free."""

    episodes: int = 0
    aborted: int = 0
    reward: int = 0
    reward_sq: int = 0
    best: int = 0
    repeat: int = 0
    repeat_sq: int = 0

    def add(self, rec: EpisodeRecord) -> None:
        if rec.aborted:
            self.aborted += 1
            return
        self.episodes += 1
        r = int(sum(rec.rewards))
        k = rec.repeats()
        self.reward += r
        self.reward_sq += r * r
        self.best += int(bool(rec.best) and rec.best[-1])
        self.repeat += k
        self.repeat_sq += k * k

    def merge(self, other: "_Tally") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


def _mean_se(total: int, total_sq: int, n: int, scale: int) -> tuple[float, float]:
    if n == 0 or scale == 0:
        return float("nan"), float("nan")
    mean = total / n
    if n < 2:
        return mean / scale, 0.0
    var = max(total_sq - total * total / n, 0.0) / (n - 1)
    return mean / scale, math.sqrt(var / n) / scale


@dataclass(frozen=True)
class ExperimentSummary:
    process: str
    kind: PolicyKind
    horizon: int
    episodes: int
    aborted: int
    mean_reward: float
    mean_reward_se: float
    best_arm_rate: float
    best_arm_se: float
    repeat_rate: float
    repeat_se: float

    @classmethod
    def from_tally(cls, process: str, kind: PolicyKind, horizon: int, tally: _Tally):
        n = tally.episodes
        reward, reward_se = _mean_se(tally.reward, tally.reward_sq, n, horizon)
        best, best_se = _mean_se(tally.best, tally.best, n, 1)
        repeat, repeat_se = _mean_se(tally.repeat, tally.repeat_sq, n, max(horizon - 1, 0))
        return cls(process, kind, horizon, n, tally.aborted, reward, reward_se,
                   best, best_se, repeat, repeat_se)

    def row(self) -> list:
        return [self.process, self.kind.value, self.horizon, self.episodes, self.aborted,
                self.mean_reward, self.mean_reward_se, self.best_arm_rate, self.best_arm_se,
                self.repeat_rate, self.repeat_se]


def summaries_csv(summaries: Sequence[ExperimentSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summaries:
        writer.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in s.row()])
    return buf.getvalue()


def _run_chunk(args):
    process, kind, horizon, root_seed, indices, learner, keep = args
    tally = _Tally()
    records = []
    for i in indices:
        rec = run_episode(process, kind, horizon, derive_seed(root_seed, i), learner)
        tally.add(rec)
        if keep:
            records.append(rec)
    return tally, records


def run_experiment(
    process: CausalProcess,
    kind: PolicyKind,
    horizon: int,
    episodes: int,
    root_seed: int,
    *,
    learner: LearnerTable | None = None,
    workers: int = 1,
    records: list | None = None,
) -> ExperimentSummary:
    """Aggregate ``episodes`` independent episodes; episode ``i`` uses seed
    ``derive_seed(root_seed, i)``.  Records, if collected, come back in
    episode order regardless of ``workers``."""
    if episodes < 1:
        raise ValueError("episode count must be at least 1")
    keep = records is not None
    tally = _Tally()
    if workers <= 1:
        chunk_tally, recs = _run_chunk((process, kind, horizon, root_seed, range(episodes), learner, keep))
        tally.merge(chunk_tally)
        if keep:
            records.extend(recs)
    else:
        bounds = np.linspace(0, episodes, workers + 1).astype(int)
        jobs = [
            (process, kind, horizon, root_seed, range(lo, hi), learner, keep)
            for lo, hi in zip(bounds, bounds[1:])
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk_tally, recs in pool.map(_run_chunk, jobs):
                tally.merge(chunk_tally)
                if keep:
                    records.extend(recs)
    return ExperimentSummary.from_tally(process.name, kind, horizon, tally)


# ---------------------------------------------------------------------------
# offline imitation from expert demonstrations
# ---------------------------------------------------------------------------


def sample_trajectories(process: CausalProcess, n: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral samples of the full process, shape ``(n, len(process))``."""
    out = np.zeros((n, len(process.variables)), dtype=np.int64)
    for v, mech in enumerate(process.mechanisms):
        rows = mech.table[tuple(out[:, p] for p in mech.parents)]
        if rows.ndim == 1:
            rows = np.broadcast_to(rows, (n, rows.size))
        cdf = np.cumsum(rows, axis=1)
        u = rng.random(n)[:, None] * cdf[:, -1:]
        out[:, v] = np.minimum((u >= cdf).sum(axis=1), rows.shape[1] - 1)
    return out


def fit_offline_table(
    process: CausalProcess, trajectories: np.ndarray, horizon: int, alpha: float = 1.0
) -> LearnerTable:
    """Purely conditional next-symbol counts; Theta is never seen."""
    layout = round_layout(process, horizon)
    table = LearnerTable(
        action_size=process.variables[layout[0][0]].domain_size,
        observation_size=process.variables[layout[0][1]].domain_size,
        alpha=alpha,
        action_mode=Mode.CONDITION,
    )
    for traj in trajectories:
        key: tuple = ()
        for a_id, o_id in layout:
            a, o = int(traj[a_id]), int(traj[o_id])
            table.record_action(key, a)
            key += (EvidenceItem(a_id, a, Mode.CONDITION),)
            table.record_observation(key, o)
            key += (EvidenceItem(o_id, o, Mode.CONDITION),)
    return table


@dataclass(frozen=True)
class OfflineRow:
    key: tuple
    label: str
    count: int
    fitted: np.ndarray
    conditional: np.ndarray
    interventional: np.ndarray
    tv_conditional: float
    tv_interventional: float
    repeat_fitted: float
    repeat_se: float
    repeat_gap: float  # fitted minus interventional, repeat entry


@dataclass(frozen=True)
class OfflineReport:
    dataset_size: int
    rows: tuple[OfflineRow, ...]
    deployed: ExperimentSummary

    def row(self, label: str) -> OfflineRow:
        return next(r for r in self.rows if r.label == label)


def offline_demo(
    process: CausalProcess,
    dataset_size: int,
    root_seed: int,
    *,
    alpha: float = 1.0,
    deploy_episodes: int = 1000,
) -> OfflineReport:
    """Fit a conditional model on expert demonstrations and show it stays deluded.

    For every one-round history ``(a_1, o_1)`` the report compares the fitted
    next-action row with the deluded target ``Q(a_2 | a_1, o_1)`` and the
    intervened target ``Q(a_2 | do(a_1), o_1)``.  The fitted table is then
    deployed autoregressively.
    """
    layout = round_layout(process, 2)
    rng = make_rng(derive_seed(root_seed, 0))
    data = sample_trajectories(process, dataset_size, rng)
    table = fit_offline_table(process, data, 2, alpha)
    (a1, o1), (a2, _) = layout
    rows = []
    for a in range(process.variables[a1].domain_size):
        for o in range(process.variables[o1].domain_size):
            key = (EvidenceItem(a1, a, Mode.CONDITION), EvidenceItem(o1, o, Mode.CONDITION))
            counts = table.action_counts.get(key)
            n = 0 if counts is None else int(counts.sum())
            fitted = table.action_predictive(key)
            cond_t = predictive(process, key, a2).probs
            int_t = predictive(
                process, (EvidenceItem(a1, a, Mode.INTERVENE), key[1]), a2
            ).probs
            p = float(fitted[a])
            se = math.sqrt(p * (1 - p) / n) if n else float("inf")
            rows.append(OfflineRow(
                key, format_key(process, key), n, fitted, cond_t, int_t,
                0.5 * float(np.abs(fitted - cond_t).sum()),
                0.5 * float(np.abs(fitted - int_t).sum()),
                p, se, p - float(int_t[a]),
            ))
    deployed = run_experiment(
        process, PolicyKind.LEARNED, 2, deploy_episodes, derive_seed(root_seed, 1), learner=table
    )
    return OfflineReport(dataset_size, tuple(rows), deployed)
