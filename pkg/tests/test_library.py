from __future__ import annotations

import itertools

import numpy as np
import pytest

from causalseq.engine import EvidenceItem, Mode, cond, do, joint_probability, query
from causalseq.library import (
    BUILTINS,
    all_builtins,
    build,
    build_bandit,
    build_goal_process,
    build_language_toy,
    build_prize_or_frog,
    build_prize_or_frog_reversed,
    build_two_round_binary,
)
from causalseq.oracle import oracle_query
from causalseq.policies import action_distribution_interventional
from causalseq.textformat import (
    ProcessSemanticError,
    ProcessSyntaxError,
    parse_process,
    serialize_process,
)

EXACT = 1e-12


def test_prize_or_frog_queries():
    pf = build_prize_or_frog()
    np.testing.assert_allclose(query(pf, "A").probs, [0.5, 0.5], atol=EXACT)
    np.testing.assert_allclose(query(pf, "O", [pf.cond("A", "1")]).probs, [0, 1], atol=EXACT)
    np.testing.assert_allclose(query(pf, "O", [pf.do("A", "1")]).probs, [0.5, 0.5], atol=EXACT)


def test_reversed_graph():
    pf, rev = build_prize_or_frog(), build_prize_or_frog_reversed()
    np.testing.assert_allclose(query(rev, "Theta", [rev.do("A", "1")]).probs, [1, 0], atol=EXACT)
    np.testing.assert_allclose(query(rev, "Theta", [rev.cond("A", "1")]).probs, [1, 0], atol=EXACT)
    for th, a, o in itertools.product(range(2), repeat=3):
        x = {"Theta": th, "A": a, "O": o}
        lhs = joint_probability(pf, [x[v.name] for v in pf.variables])
        rhs = joint_probability(rev, [x[v.name] for v in rev.variables])
        assert lhs == rhs


def test_bandit_tables():
    Q = build_bandit(3)
    assert [v.name for v in Q.variables] == ["Theta", "A_1", "O_1", "A_2", "O_2", "A_3", "O_3"]
    np.testing.assert_array_equal(Q.mechanisms[0].table, np.full(5, 0.2))
    for t in range(3):
        a_id, o_id = 1 + 2 * t, 2 + 2 * t
        assert Q.mechanisms[a_id].parents == (0,)
        assert Q.mechanisms[o_id].parents == (0, a_id)
        np.testing.assert_array_equal(Q.mechanisms[a_id].table, np.where(np.eye(5) == 1, 0.6, 0.1))
        expected = np.zeros((5, 5, 2))
        expected[..., 1] = np.where(np.eye(5) == 1, 0.75, 0.25)
        expected[..., 0] = 1 - expected[..., 1]
        np.testing.assert_array_equal(Q.mechanisms[o_id].table, expected)


def test_bandit_examples():
    Q = build_bandit(1)
    np.testing.assert_allclose(query(Q, "A_1").probs, np.full(5, 0.2), atol=EXACT)
    post = query(Q, "Theta", [Q.cond("A_1", "1")]).probs
    np.testing.assert_allclose(post, [0.6, 0.1, 0.1, 0.1, 0.1], atol=EXACT)
    np.testing.assert_allclose(query(Q, "Theta", [Q.do("A_1", "1")]).probs, np.full(5, 0.2), atol=EXACT)


def test_bandit_horizon_validation():
    with pytest.raises(ValueError):
        build_bandit(0)
    assert len(build_bandit(20, exact=False).variables) == 41


def test_two_round_binary():
    Q = build_two_round_binary()
    np.testing.assert_allclose(query(Q, "Theta_1", [Q.do("A_1", 0)]).probs, query(Q, "Theta_1").probs, atol=EXACT)
    history = [Q.do("A_1", 0), Q.cond("O_1", 1)]
    got = action_distribution_interventional(Q, history).probs
    np.testing.assert_allclose(got, oracle_query(Q, Q.var_id("A_2"), history), atol=EXACT)


def test_language_toy_dropped_factor():
    toy = build_language_toy()
    prior = toy.mechanisms[0].table
    tokens = toy.mechanisms[1].table
    for x1, x2, x3 in itertools.product(range(3), repeat=3):
        post = query(toy, "Theta", [cond(1, x1), do(2, x2), cond(3, x3)]).probs
        direct = prior * tokens[:, x1] * tokens[:, x3]
        np.testing.assert_allclose(post, direct / direct.sum(), atol=EXACT)
        # confounder observed: the tag on x_2 stops mattering
        for th in range(2):
            a = query(toy, "x_4", [cond(0, th), cond(1, x1), cond(2, x2), cond(3, x3)]).probs
            b = query(toy, "x_4", [cond(0, th), cond(1, x1), do(2, x2), cond(3, x3)]).probs
            np.testing.assert_allclose(a, b, atol=EXACT)


def test_language_toy_gap():
    toy = build_language_toy()
    gaps = []
    for x in itertools.product(range(3), repeat=3):
        a = oracle_query(toy, 4, [cond(1, x[0]), cond(2, x[1]), cond(3, x[2])])
        b = oracle_query(toy, 4, [cond(1, x[0]), do(2, x[1]), cond(3, x[2])])
        gaps.append(0.5 * np.abs(a - b).sum())
    assert max(gaps) > 0.05


def test_goal_process():
    G = build_goal_process()
    prior = query(G, "Theta").probs
    moved = [query(G, "Theta", [G.cond("G", g)]).probs for g in range(2)]
    assert max(np.abs(m - prior).max() for m in moved) > 0.01
    for g in range(2):
        assert query(G, "Theta", [G.do("G", g)]).probs.tolist() == prior.tolist()
    for m in G.mechanisms:
        np.testing.assert_allclose(m.table.sum(axis=-1), 1.0, atol=EXACT)


def test_build_by_name():
    assert build("bandit", 3) == build_bandit(3)
    with pytest.raises(KeyError) as info:
        build("frogs")
    for name in BUILTINS:
        assert name in str(info.value)


# -- text format --------------------------------------------------------------


@pytest.mark.parametrize("process", all_builtins() + [build_bandit(3)], ids=lambda p: p.name)
def test_round_trip_is_exact(process):
    text = serialize_process(process)
    again = parse_process(text)
    assert again == process
    assert serialize_process(again) == text
    for m1, m2 in zip(process.mechanisms, again.mechanisms):
        assert m1.table.tobytes() == m2.table.tobytes()


def _battery(process, n=50, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        target = int(rng.integers(len(process.variables)))
        others = [v for v in range(len(process.variables)) if v != target]
        k = int(rng.integers(0, min(3, len(others)) + 1))
        chosen = sorted(rng.choice(others, size=k, replace=False).tolist())
        ev = [EvidenceItem(v, int(rng.integers(process.variables[v].domain_size)),
                           Mode.INTERVENE if rng.random() < 0.5 else Mode.CONDITION) for v in chosen]
        out.append((target, ev))
    return out


@pytest.mark.parametrize("process", all_builtins(), ids=lambda p: p.name)
def test_round_trip_query_battery(process):
    again = parse_process(serialize_process(process))
    for target, ev in _battery(process):
        try:
            a = query(process, target, ev).probs
        except Exception as exc:  # same failure on both sides
            with pytest.raises(type(exc)):
                query(again, target, ev)
            continue
        np.testing.assert_allclose(query(again, target, ev).probs, a, atol=1e-15, rtol=0)


GOOD = """\
process coin   # a comment
variable Theta latent 2 labels h t
mechanism Theta
  : 0.5 0.5
variable A action 2
mechanism A given Theta
  h : 0.9 0.1
  t : 0.2 0.8
"""


def test_parse_matches_programmatic():
    p = parse_process(GOOD)
    assert p.name == "coin"
    assert p.variables[0].labels == ("h", "t")
    np.testing.assert_array_equal(p.mechanisms[1].table, [[0.9, 0.1], [0.2, 0.8]])


def test_normalization_error():
    bad = GOOD.replace("0.9 0.1", "0.5 0.6")
    with pytest.raises(ProcessSemanticError) as info:
        parse_process(bad)
    assert info.value.variable == "A"
    assert "normalization" in str(info.value)


def test_ordering_error():
    bad = """\
variable A action 2
mechanism A given Theta
  0 : 0.5 0.5
  1 : 0.5 0.5
variable Theta latent 2
mechanism Theta
  : 0.5 0.5
"""
    with pytest.raises(ProcessSemanticError) as info:
        parse_process(bad)
    assert info.value.variable == "A"
    assert "ordering" in str(info.value)


def test_unknown_role_error():
    with pytest.raises(ProcessSemanticError) as info:
        parse_process(GOOD.replace("action 2", "actor 2"))
    assert info.value.variable == "A"


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("variable X latent two\n", 1, 19),
        ("variable X latent 2\nmechanism X\n  : 0.5 zero\n", 3, 9),
        ("\nfrobnicate X\n", 2, 1),
        ("  : 0.5 0.5\n", 1, 3),
        ("variable X latent 2\nmechanism X\n  : 0.5 : 0.5\n", 3, 9),
    ],
)
def test_syntax_errors_are_positioned(text, line, column):
    with pytest.raises(ProcessSyntaxError) as info:
        parse_process(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_missing_row_error():
    bad = GOOD.replace("  t : 0.2 0.8\n", "")
    with pytest.raises(ProcessSemanticError, match="without a row"):
        parse_process(bad)


def test_duplicate_row_error():
    bad = GOOD.replace("  t : 0.2 0.8\n", "  h : 0.2 0.8\n")
    with pytest.raises(ProcessSemanticError, match="duplicate"):
        parse_process(bad)
