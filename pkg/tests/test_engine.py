from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalseq.engine import (
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
    joint_tensor,
    query,
)
from causalseq.errors import (
    CapacityError,
    DuplicateEvidenceError,
    InvalidAssignmentError,
    InvalidEvidenceError,
    InvalidProcessError,
    ZeroProbabilityEvidenceError,
)
from causalseq.library import all_builtins, build_bandit, build_prize_or_frog, build_prize_or_frog_reversed

from conftest import random_process

EXACT = 1e-12


@pytest.fixture
def pf():
    return build_prize_or_frog()


def test_joint_probability_prize_or_frog(pf):
    th, a, o = (pf.variable(n) for n in ("Theta", "A", "O"))
    assert joint_probability(pf, (th.symbol("1"), a.symbol("1"), o.symbol("+1"))) == 0.5
    assert joint_probability(pf, (th.symbol("1"), a.symbol("2"), o.symbol("+1"))) == 0.0


@pytest.mark.parametrize("bad", [(0, 0), (0, 0, 0, 0), (0, 2, 0), (-1, 0, 0)])
def test_joint_probability_rejects_bad_assignment(pf, bad):
    with pytest.raises(InvalidAssignmentError):
        joint_probability(pf, bad)


@pytest.mark.parametrize("process", all_builtins(), ids=lambda p: p.name)
def test_joint_sums_to_one(process):
    total = sum(
        joint_probability(process, x)
        for x in itertools.product(*(range(s) for s in process.shape))
    )
    assert abs(total - 1.0) < 1e-12
    assert abs(joint_tensor(process).sum() - 1.0) < 1e-12


def test_apply_interventions_replaces_only_target(pf):
    A = pf.var_id("A")
    mutilated = apply_interventions(pf, [do(A, 0)])
    assert mutilated.mechanisms[A].parents == ()
    np.testing.assert_array_equal(mutilated.mechanisms[A].table, [1.0, 0.0])
    for v in (pf.var_id("Theta"), pf.var_id("O")):
        assert mutilated.mechanisms[v] == pf.mechanisms[v]


def test_apply_interventions_empty_is_identity(pf):
    assert apply_interventions(pf, []) == pf


def test_reversed_graph_keeps_theta_mechanism():
    rev = build_prize_or_frog_reversed()
    A, th = rev.var_id("A"), rev.var_id("Theta")
    mutilated = apply_interventions(rev, [do(A, 0)])
    assert mutilated.mechanisms[th] == rev.mechanisms[th]
    assert mutilated.mechanisms[th].parents == (A,)


def test_apply_interventions_duplicates_rejected(pf):
    A = pf.var_id("A")
    with pytest.raises(DuplicateEvidenceError):
        apply_interventions(pf, [do(A, 0), do(A, 1)])


def test_apply_interventions_rejects_conditions(pf):
    with pytest.raises(InvalidEvidenceError):
        apply_interventions(pf, [cond(pf.var_id("A"), 0)])


def test_query_examples(pf):
    one = pf.variable("A").symbol("1")
    np.testing.assert_allclose(query(pf, "Theta", [pf.cond("A", "1")]).probs, [1, 0], atol=EXACT)
    np.testing.assert_allclose(query(pf, "Theta", [pf.do("A", "1")]).probs, [0.5, 0.5], atol=EXACT)
    np.testing.assert_allclose(query(pf, "O", [pf.do("A", "1")]).probs, [0.5, 0.5], atol=EXACT)
    for theta, a in itertools.product("12", "12"):
        if theta != a:
            continue  # the expert never opens the other box, so conditioning is undefined
        both_cond = query(pf, "O", [pf.cond("Theta", theta), pf.cond("A", a)])
        mixed = query(pf, "O", [pf.cond("Theta", theta), pf.do("A", a)])
        assert both_cond.max_abs_diff(mixed) < EXACT
    assert one == 0


def test_query_zero_probability_is_distinct_error(pf):
    with pytest.raises(ZeroProbabilityEvidenceError) as info:
        query(pf, "Theta", [pf.cond("A", "1"), pf.cond("O", "-1")])
    assert not isinstance(info.value, ValueError)


def test_query_rejects_same_variable_twice(pf):
    with pytest.raises(DuplicateEvidenceError):
        query(pf, "Theta", [pf.cond("A", "1"), pf.do("A", "1")])


def test_query_rejects_target_in_evidence(pf):
    with pytest.raises(InvalidEvidenceError):
        query(pf, "A", [pf.cond("A", "1")])


def test_query_rejects_out_of_range_symbol(pf):
    with pytest.raises((InvalidEvidenceError, InvalidAssignmentError)):
        query(pf, "Theta", [EvidenceItem(1, 5)])


def test_no_backtracking_prize_or_frog(pf):
    prior = query(pf, "Theta")
    for a in "12":
        assert query(pf, "Theta", [pf.do("A", a)]).probs.tolist() == prior.probs.tolist()


def test_posterior_pair_matches_table_formulas(pf):
    prior = pf.mechanisms[0].table
    expert = pf.mechanisms[1].table
    outcome = pf.mechanisms[2].table
    for a, o in itertools.product(range(2), range(2)):
        lik = prior * outcome[:, a, o]
        if lik.sum() > 0:
            got = query(pf, 0, [do(1, a), cond(2, o)]).probs
            np.testing.assert_allclose(got, lik / lik.sum(), atol=EXACT)
        cond_lik = prior * expert[:, a] * outcome[:, a, o]
        if cond_lik.sum() > 0:
            got = query(pf, 0, [cond(1, a), cond(2, o)]).probs
            np.testing.assert_allclose(got, cond_lik / cond_lik.sum(), atol=EXACT)


def test_capacity_error():
    with pytest.raises(CapacityError):
        build_bandit(8)
    big = build_bandit(8, exact=False)
    with pytest.raises(CapacityError):
        query(big, 0, [])


def test_invalid_process_rows_must_sum_to_one():
    v = VariableSpec(0, "X", Role.LATENT, 2)
    with pytest.raises(InvalidProcessError):
        CausalProcess((v,), (Mechanism(0, (), np.array([0.5, 0.6])),))


def test_invalid_process_parent_order():
    vs = (VariableSpec(0, "X", Role.LATENT, 2), VariableSpec(1, "Y", Role.ACTION, 2))
    mechs = (Mechanism(0, (1,), np.full((2, 2), 0.5)), Mechanism(1, (), np.array([0.5, 0.5])))
    with pytest.raises(InvalidProcessError):
        CausalProcess(vs, mechs)


def test_distribution_validates():
    with pytest.raises(ValueError):
        Distribution([0.5, 0.6])
    with pytest.raises(ValueError):
        Distribution([1.2, -0.2])
    d = Distribution.uniform(4)
    assert d.tv(Distribution.point(4, 0)) == pytest.approx(0.75)
    with pytest.raises((ValueError, TypeError)):
        d.probs[0] = 1.0


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_truncated_factorization(seed):
    rng = np.random.default_rng(seed)
    p = random_process(rng)
    v = int(rng.integers(len(p.variables)))
    x = int(rng.integers(p.variables[v].domain_size))
    mutilated = apply_interventions(p, [do(v, x)])
    for assignment in itertools.product(*(range(s) for s in p.shape)):
        expected = 0.0
        if assignment[v] == x:
            expected = 1.0
            for m in p.mechanisms:
                if m.variable != v:
                    expected *= m.table[tuple(assignment[q] for q in m.parents) + (assignment[m.variable],)]
        assert joint_probability(mutilated, assignment) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_query_is_normalized(seed):
    rng = np.random.default_rng(seed)
    p = random_process(rng)
    target = int(rng.integers(len(p.variables)))
    evidence = [do(v, int(rng.integers(p.variables[v].domain_size)))
                for v in range(len(p.variables)) if v != target and rng.random() < 0.3]
    d = query(p, target, evidence)
    assert abs(d.probs.sum() - 1.0) < 1e-12
    assert np.all(d.probs >= 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_intervention_never_informs_non_descendants(seed):
    rng = np.random.default_rng(seed)
    p = random_process(rng)
    if len(p.variables) < 2:
        return
    v = int(rng.integers(1, len(p.variables)))
    u = int(rng.integers(v))
    x = int(rng.integers(p.variables[v].domain_size))
    np.testing.assert_allclose(query(p, u, [do(v, x)]).probs, query(p, u).probs, atol=1e-12)
