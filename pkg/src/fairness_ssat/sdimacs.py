"""SDIMACS reading and writing.

The format extends DIMACS CNF with quantifier lines placed between the
``p cnf`` header and the clauses::

    c comment
    p cnf 4 3
    r 0.41 1 0
    r 0.93 2 0
    e 4 0
    -1 2 0

``e`` lines list existential variables; ``r`` lines carry one probability for
the variables that follow. A clause may span lines and a lone ``0`` is the
empty clause. Variables without a quantifier line become innermost
existentials.
"""

import logging
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from fairness_ssat.errors import ParseError
from fairness_ssat.ssat_core import (
    CnfFormula,
    Number,
    PrefixEntry,
    Quantifier,
    SsatFormula,
)

logger = logging.getLogger(__name__)


def _parse_probability(token: str, line: int, column: int, source: str) -> Number:
    try:
        value: Number = Fraction(token) if "/" in token else float(token)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"Invalid probability {token!r}", line, column, source) from None
    if not 0 <= value <= 1:
        raise ParseError(f"Probability {token} is outside [0, 1]", line, column, source)
    return value


def _tokens(text: str) -> List[Tuple[str, int]]:
    """Split a line into tokens paired with their 1-based start column."""
    out = []
    column = 0
    for token in text.split():
        column = text.index(token, column)
        out.append((token, column + 1))
        column += len(token)
    return out


def _parse_int(token: str, line: int, column: int, source: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"Expected an integer, found {token!r}", line, column, source) from None


def parse_sdimacs(text: str, source: str = "<input>") -> SsatFormula:
    """Parse SDIMACS text into a formula.

    Raises:
        ParseError: on malformed header, quantifier or clause lines, with the
            offending line and column
    """
    num_vars: Optional[int] = None
    declared_clauses = 0
    prefix: List[PrefixEntry] = []
    quantified: Dict[int, int] = {}
    clauses: List[Tuple[int, ...]] = []
    pending: List[int] = []
    last_line = 0

    def check_var(var: int, line: int, column: int) -> None:
        if not 1 <= var <= num_vars:
            raise ParseError(f"Variable {var} is outside 1..{num_vars}", line, column, source)

    for number, raw in enumerate(text.splitlines(), start=1):
        last_line = number
        stripped = raw.strip()
        if not stripped or stripped.startswith("c"):
            continue
        tokens = _tokens(raw)
        head, head_column = tokens[0]

        if head == "p":
            if num_vars is not None:
                raise ParseError("Duplicate problem line", number, head_column, source)
            if len(tokens) != 4 or tokens[1][0] != "cnf":
                raise ParseError("Problem line must read 'p cnf <vars> <clauses>'", number, head_column, source)
            num_vars = _parse_int(tokens[2][0], number, tokens[2][1], source)
            declared_clauses = _parse_int(tokens[3][0], number, tokens[3][1], source)
            if num_vars < 0 or declared_clauses < 0:
                raise ParseError("Problem line counts must be nonnegative", number, head_column, source)
            continue

        if num_vars is None:
            raise ParseError("Missing 'p cnf' header before data", number, head_column, source)

        if head in ("e", "r"):
            if clauses or pending:
                raise ParseError("Quantifier line after the first clause", number, head_column, source)
            body = tokens[1:]
            if head == "r":
                if not body:
                    raise ParseError("Randomized line needs a probability", number, head_column, source)
                quantifier = Quantifier.random(_parse_probability(body[0][0], number, body[0][1], source))
                body = body[1:]
            else:
                quantifier = Quantifier.exists()
            if not body or body[-1][0] != "0":
                raise ParseError("Quantifier line must end with 0", number, len(raw.rstrip()), source)
            for token, column in body[:-1]:
                var = _parse_int(token, number, column, source)
                check_var(var, number, column)
                if var in quantified:
                    raise ParseError(
                        f"Variable {var} already quantified on line {quantified[var]}",
                        number, column, source,
                    )
                quantified[var] = number
                prefix.append((var, quantifier))
            continue

        for token, column in tokens:
            lit = _parse_int(token, number, column, source)
            if lit == 0:
                clauses.append(tuple(pending))
                pending = []
                continue
            check_var(abs(lit), number, column)
            pending.append(lit)

    if num_vars is None:
        raise ParseError("Missing 'p cnf' header", last_line or 1, None, source)
    if pending:
        raise ParseError("Last clause is not terminated by 0", last_line, None, source)
    if len(clauses) != declared_clauses:
        raise ParseError(
            f"Header declares {declared_clauses} clauses but {len(clauses)} were read",
            last_line, None, source,
        )

    for var in range(1, num_vars + 1):
        if var not in quantified:
            prefix.append((var, Quantifier.exists()))
    if len(quantified) < num_vars:
        logger.debug(f"{source}: {num_vars - len(quantified)} unquantified variables made innermost existential")
    return SsatFormula(tuple(prefix), CnfFormula.from_clauses(clauses, num_vars))


def read_sdimacs(path: Union[str, Path]) -> SsatFormula:
    """Parse an SDIMACS file."""
    path = Path(path)
    data = path.read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as error:
        raise ParseError.from_decode(data, error, str(path)) from None
    return parse_sdimacs(text, source=str(path))


def format_probability(p: Number) -> str:
    """Render a probability so that parsing it back yields the same value."""
    if isinstance(p, Fraction):
        return str(p)
    return repr(float(p))


def format_clauses(matrix: CnfFormula) -> List[str]:
    return [" ".join([*(str(lit) for lit in clause), "0"]) for clause in matrix.clauses]


def format_sdimacs(formula: SsatFormula, comments: Sequence[str] = ()) -> str:
    """Render a formula as SDIMACS text.

    Consecutive existential variables share one ``e`` line; randomized
    variables get one ``r`` line each.
    """
    lines = [f"c {comment}" if comment else "c" for comment in comments]
    matrix = formula.matrix
    lines.append(f"p cnf {matrix.num_vars} {len(matrix.clauses)}")
    block: List[int] = []
    for var, quantifier in formula.prefix:
        if quantifier.is_random:
            if block:
                lines.append("e " + " ".join(map(str, block)) + " 0")
                block = []
            lines.append(f"r {format_probability(quantifier.probability)} {var} 0")
        else:
            block.append(var)
    if block:
        lines.append("e " + " ".join(map(str, block)) + " 0")
    lines.extend(format_clauses(matrix))
    return "\n".join(lines) + "\n"


def format_cnf(matrix: CnfFormula, comments: Sequence[str] = ()) -> str:
    """Render a plain DIMACS CNF block with optional comment lines."""
    lines = [f"c {comment}" if comment else "c" for comment in comments]
    lines.append(f"p cnf {matrix.num_vars} {len(matrix.clauses)}")
    lines.extend(format_clauses(matrix))
    return "\n".join(lines) + "\n"


def write_sdimacs(path: Union[str, Path], formula: SsatFormula, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(format_sdimacs(formula, comments), encoding="utf-8")
