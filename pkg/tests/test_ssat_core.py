from fractions import Fraction

import pytest

from fairness_ssat.errors import InputValidationError, StructuralError
from fairness_ssat.ssat_core import (
    CnfFormula,
    Quantifier,
    SsatFormula,
    condition,
    er_formula,
    evaluate,
    evaluate_reference,
    negate_tseitin,
    re_formula,
    solve_ur,
    weighted_model_count,
)
from tests.oracles import (
    assignments,
    brute_ssat,
    brute_wmc,
    min_over_universal,
    random_clauses,
    random_formula,
    random_probability,
)

# Health-insurance tree, older group: F (fitness), I and J (income thresholds), A (age)
F, I, J, A = 1, 2, 3, 4
TREE_CNF = CnfFormula.from_clauses([(-F, I), (F, J)], 4)
OLD_MARGINALS = [(F, 0.41), (I, 0.93), (J, 0.09)]


def test_older_group_probability_and_forced_witness():
    matrix = TREE_CNF.conjoin(CnfFormula.from_clauses([(A,)], 4))
    result = evaluate(re_formula(OLD_MARGINALS, [A], matrix))
    assert result.probability == pytest.approx(0.4344, abs=1e-12)
    assert result.witness == {A: True}


def test_single_existential():
    result = evaluate(er_formula([1], [], CnfFormula.from_clauses([(1,)])))
    assert result.probability == 1.0
    assert result.witness == {1: True}


def test_two_fair_coins():
    formula = re_formula([(1, 0.5), (2, 0.5)], [], CnfFormula.from_clauses([(1, 2)]))
    result = evaluate(formula)
    assert result.probability == pytest.approx(0.75)
    assert result.witness == {}


def test_exact_mode_returns_fractions():
    formula = re_formula([(1, Fraction(1, 2)), (2, Fraction(1, 2))], [], CnfFormula.from_clauses([(1, 2)]))
    assert evaluate(formula, exact=True).probability == Fraction(3, 4)
    assert evaluate_reference(formula, exact=True) == Fraction(3, 4)


def test_constant_matrices():
    true_formula = er_formula([1, 2], [], CnfFormula.true(2))
    false_formula = er_formula([1, 2], [], CnfFormula.false(2))
    assert evaluate(true_formula).probability == 1.0
    assert evaluate(true_formula).witness == {1: False, 2: False}
    result = evaluate(false_formula)
    assert result.probability == 0.0
    assert result.witness == {1: False, 2: False}


def test_existential_tie_prefers_false():
    formula = er_formula([1], [(2, 0.5)], CnfFormula.from_clauses([(1, 2), (-1, 2)]))
    result = evaluate(formula)
    assert result.probability == pytest.approx(0.5)
    assert result.witness == {1: False}


def test_normalization_drops_tautologies_and_duplicates():
    cnf = CnfFormula.from_clauses([(1, -1), (2, 1), (1, 2, 2)])
    assert cnf.clauses == ((2, 1),)
    assert CnfFormula.from_clauses([(1, -2, 3), (3, 1, -2), (-2, 3, 1)]).clauses == ((1, -2, 3),)
    assert len(negate_tseitin(CnfFormula.from_clauses([(1, 2), (2, 1)], 2))[1]) == 1
    assert CnfFormula.from_clauses([(1,), ()], 3).is_false


def test_structural_errors():
    with pytest.raises(StructuralError):
        SsatFormula(((1, Quantifier.exists()), (1, Quantifier.exists())), CnfFormula.true(1))
    with pytest.raises(StructuralError):
        SsatFormula(((1, Quantifier.exists()),), CnfFormula.from_clauses([(1, 2)]))
    with pytest.raises(StructuralError):
        CnfFormula(((3,),), 2)
    with pytest.raises(InputValidationError):
        Quantifier.random(1.5)


def test_condition_substitutes_and_drops_variables():
    formula = er_formula([1, 2], [], CnfFormula.from_clauses([(1,), (2,)]))
    conditioned = condition(formula, {1: True})
    assert conditioned.matrix.clauses == ((2,),)
    assert [var for var, _ in conditioned.prefix] == [2]
    assert conditioned.matrix.num_vars == 2

    conditioned = condition(formula, {1: False})
    assert conditioned.matrix.is_false


def test_condition_rejects_unquantified_variable():
    formula = SsatFormula(((1, Quantifier.exists()),), CnfFormula.from_clauses([(1,)], 2))
    with pytest.raises(StructuralError):
        condition(formula, {2: True})


def test_weighted_model_count_examples():
    assert weighted_model_count(CnfFormula.from_clauses([(1,)]), {1: 0.3}) == pytest.approx(0.3)
    assert weighted_model_count(CnfFormula.from_clauses([(1, 2)]), {1: 0.5, 2: 0.5}) == pytest.approx(0.75)
    assert weighted_model_count(CnfFormula.true(3), {}) == 1.0
    assert weighted_model_count(CnfFormula.false(3), {1: 0.5}) == 0.0


def test_weighted_model_count_requires_probabilities():
    with pytest.raises(InputValidationError):
        weighted_model_count(CnfFormula.from_clauses([(1, 2)]), {1: 0.5})
    with pytest.raises(InputValidationError):
        weighted_model_count(CnfFormula.from_clauses([(1,)]), {1: -0.2})


def test_tseitin_negation_of_two_units():
    negated, auxiliaries = negate_tseitin(CnfFormula.from_clauses([(1,), (2,)]))
    assert auxiliaries == [3, 4]
    for original in assignments([1, 2]):
        extensions = [
            aux for aux in assignments(auxiliaries) if negated.satisfied_by({**original, **aux})
        ]
        if original[1] and original[2]:
            assert extensions == []
        else:
            assert len(extensions) == 1


def test_tseitin_negation_of_constants():
    assert negate_tseitin(CnfFormula.true(2))[0].is_false
    assert negate_tseitin(CnfFormula.false(2))[0].is_true


def test_tseitin_negation_conditioned_probability():
    # (not F or I or S) and (F or J) with S=1 leaves Pr[F or J] = 0.4631
    s, a = 4, 5
    matrix = CnfFormula.from_clauses([(-F, I, s), (F, J)], 5)
    negated, auxiliaries = negate_tseitin(matrix)
    formula = re_formula(OLD_MARGINALS, [s, a] + auxiliaries, negated)
    result = evaluate(condition(formula, {s: True}))
    assert result.probability == pytest.approx(0.5369, abs=1e-12)


def test_tseitin_forced_auxiliaries_falsify_exactly_the_models(rng):
    for _ in range(50):
        num_vars = int(rng.integers(1, 7))
        variables = list(range(1, num_vars + 1))
        matrix = CnfFormula.from_clauses(random_clauses(rng, variables, int(rng.integers(1, 6))), num_vars)
        if matrix.is_true or matrix.is_false:
            continue
        negated, auxiliaries = negate_tseitin(matrix)
        for original in assignments(variables):
            forced = {
                aux: not any(original[abs(lit)] == (lit > 0) for lit in clause)
                for aux, clause in zip(auxiliaries, matrix.clauses)
            }
            assert matrix.satisfied_by(original) != negated.satisfied_by({**original, **forced})


def test_universal_minimum_through_dual():
    s, a = 4, 5
    matrix = CnfFormula.from_clauses([(-F, I, s), (F, J)], 5)
    result = solve_ur([s, a], OLD_MARGINALS, matrix)
    assert result.probability == pytest.approx(0.4344, abs=1e-12)
    assert result.witness == {s: False, a: False}


def test_universal_over_true_matrix():
    result = solve_ur([1], [(2, 0.3)], CnfFormula.true(2))
    assert result.probability == 1.0


def test_engine_matches_reference_evaluator(rng, oracle_cases):
    for _ in range(oracle_cases):
        formula = random_formula(rng, max_vars=16)
        expected = evaluate_reference(formula, exact=True)
        assert evaluate(formula, exact=True).probability == expected
        assert float(evaluate(formula).probability) == pytest.approx(float(expected), abs=1e-12)


def test_reference_evaluator_matches_full_expansion(rng):
    for _ in range(100):
        formula = random_formula(rng, max_vars=8)
        assert evaluate_reference(formula, exact=True) == brute_ssat(formula)


def test_universal_random_duality(rng, oracle_cases):
    for _ in range(max(oracle_cases * 2 // 5, 1)):
        num_vars = int(rng.integers(2, 10))
        variables = list(range(1, num_vars + 1))
        universal = variables[: int(rng.integers(1, min(4, num_vars - 1) + 1))]
        probs = {var: random_probability(rng) for var in variables if var not in universal}
        clauses = random_clauses(rng, variables, int(rng.integers(0, 2 * num_vars)))
        matrix = CnfFormula.from_clauses(clauses, num_vars)

        result = solve_ur(universal, sorted(probs.items()), matrix, exact=True)
        negated, _ = negate_tseitin(matrix)
        dual = evaluate(er_formula(universal, sorted(probs.items()), negated), exact=True)
        assert result.probability == 1 - dual.probability
        assert result.probability == min_over_universal(universal, probs, matrix.clauses)

        achieved = condition(er_formula(universal, sorted(probs.items()), matrix), result.witness)
        assert weighted_model_count(achieved.matrix, probs, exact=True) == result.probability


def test_witness_achieves_probability(rng, oracle_cases):
    for _ in range(max(oracle_cases // 5, 1)):
        num_vars = int(rng.integers(1, 10))
        variables = list(range(1, num_vars + 1))
        exists = variables[: int(rng.integers(0, num_vars + 1))]
        probs = {var: random_probability(rng) for var in variables if var not in exists}
        matrix = CnfFormula.from_clauses(
            random_clauses(rng, variables, int(rng.integers(0, 2 * num_vars))), num_vars
        )
        formula = er_formula(exists, sorted(probs.items()), matrix)
        result = evaluate(formula, exact=True)
        assert set(result.witness) >= set(exists)
        achieved = condition(formula, {var: result.witness[var] for var in exists})
        assert weighted_model_count(achieved.matrix, probs, exact=True) == result.probability

        floating = evaluate(formula)
        achieved = condition(formula, {var: floating.witness[var] for var in exists})
        assert weighted_model_count(achieved.matrix, probs) == pytest.approx(floating.probability, abs=1e-9)
        assert floating.probability == pytest.approx(float(result.probability), abs=1e-9)


def test_adding_a_clause_never_increases_probability(rng):
    for _ in range(100):
        formula = random_formula(rng, max_vars=10)
        variables = [var for var, _ in formula.prefix]
        extra = CnfFormula.from_clauses(random_clauses(rng, variables, 1), formula.matrix.num_vars)
        stronger = SsatFormula(formula.prefix, formula.matrix.conjoin(extra))
        before = evaluate(formula, exact=True).probability
        after = evaluate(stronger, exact=True).probability
        assert 0 <= after <= before <= 1


def test_fully_randomized_formula_matches_brute_count(rng):
    for _ in range(100):
        num_vars = int(rng.integers(1, 9))
        variables = list(range(1, num_vars + 1))
        probs = {var: random_probability(rng) for var in variables}
        clauses = random_clauses(rng, variables, int(rng.integers(0, 2 * num_vars)))
        matrix = CnfFormula.from_clauses(clauses, num_vars)
        expected = brute_wmc(matrix.clauses, probs)
        assert weighted_model_count(matrix, probs, exact=True) == expected
