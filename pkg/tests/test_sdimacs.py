from fractions import Fraction

import pytest

from fairness_ssat.errors import ParseError
from fairness_ssat.sdimacs import format_sdimacs, parse_sdimacs, read_sdimacs, write_sdimacs
from fairness_ssat.ssat_core import evaluate
from tests.oracles import random_formula

OLDER_GROUP = """c health-insurance tree, age >= 40
p cnf 4 3
r 0.41 1 0
r 0.93 2 0
r 0.09 3 0
e 4 0
-1 2 0
1 3 0
4 0
"""


def test_parse_older_group_instance():
    formula = parse_sdimacs(OLDER_GROUP)
    assert [var for var, _ in formula.prefix] == [1, 2, 3, 4]
    assert formula.prefix[0][1].probability == 0.41
    assert not formula.prefix[3][1].is_random
    assert formula.matrix.clauses == ((-1, 2), (1, 3), (4,))
    assert evaluate(formula).probability == pytest.approx(0.4344, abs=1e-12)


def test_format_is_stable():
    assert format_sdimacs(parse_sdimacs(OLDER_GROUP), ["health-insurance tree, age >= 40"]) == OLDER_GROUP


def test_clause_spanning_lines_and_empty_clause():
    formula = parse_sdimacs("p cnf 2 2\ne 1 2 0\n1\n2 0\n0\n")
    assert formula.matrix.is_false
    assert evaluate(formula).probability == 0.0


def test_shared_randomized_line_and_rational_probability():
    formula = parse_sdimacs("p cnf 3 1\nr 1/3 1 2 0\n1 2 3 0\n")
    assert formula.prefix[0][1].probability == Fraction(1, 3)
    assert formula.prefix[1][1].probability == Fraction(1, 3)
    # 3 was never quantified: innermost existential
    assert formula.prefix[2][0] == 3 and not formula.prefix[2][1].is_random
    assert evaluate(formula, exact=True).probability == 1


def test_true_instance():
    formula = parse_sdimacs("p cnf 0 0\n")
    assert formula.matrix.is_true
    assert evaluate(formula).probability == 1.0


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("e 1 0\n1 0\n", 1, 1),
        ("p cnf 1 1\np cnf 1 1\n1 0\n", 2, 1),
        ("p cnf 2 1\nr 1.5 1 0\n1 0\n", 2, 3),
        ("p cnf 2 1\nr x 1 0\n1 0\n", 2, 3),
        ("p cnf 2 1\n1 3 0\n", 2, 3),
        ("p cnf 2 1\n1 0\ne 2 0\n", 3, 1),
        ("p cnf 2 1\ne 1 0\ne 1 0\n1 0\n", 3, 3),
        ("p cnf 2 1\n1 a 0\n", 2, 3),
    ],
)
def test_parse_errors_report_position(text, line, column):
    with pytest.raises(ParseError) as caught:
        parse_sdimacs(text, source="bad.sdimacs")
    assert caught.value.line == line
    assert caught.value.column == column
    assert str(caught.value).startswith(f"bad.sdimacs:{line}:{column}:")


@pytest.mark.parametrize(
    "text",
    ["", "c only a comment\n", "p cnf 2 2\n1 0\n", "p cnf 2 1\n1 2\n", "p cnf 2\n"],
)
def test_parse_errors_without_column(text):
    with pytest.raises(ParseError):
        parse_sdimacs(text)


def test_write_then_read(tmp_path, rng):
    for _ in range(20):
        formula = random_formula(rng, max_vars=10)
        path = tmp_path / "instance.sdimacs"
        write_sdimacs(path, formula)
        again = read_sdimacs(path)
        text = format_sdimacs(again)
        assert format_sdimacs(parse_sdimacs(text)) == text
        assert evaluate(again, exact=True).probability == evaluate(formula, exact=True).probability
