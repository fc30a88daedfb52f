"""Stochastic Boolean satisfiability: formulas, exact evaluation and duality.

Literals are DIMACS-style signed integers: variable ``v`` appears as ``v`` when
positive and as ``-v`` when negated. A formula pairs an ordered quantifier
prefix (existential or randomized entries) with a CNF matrix, and its
satisfying probability is defined by eliminating the outermost quantifier:
existential variables take the larger cofactor, randomized variables the
``p``-weighted average, ``TRUE`` is worth 1 and ``FALSE`` 0.

Universal quantifiers never appear in a stored prefix. ``solve_ur`` accepts a
universal block at the API level and answers it through the dual
existential-random formula over the negated matrix.
"""

import logging
import sys
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from fairness_ssat.errors import InputValidationError, StructuralError

logger = logging.getLogger(__name__)

Number = Union[float, Fraction]
Clause = Tuple[int, ...]
Assignment = Dict[int, bool]

_EMPTY: FrozenSet[int] = frozenset()


###################
# Matrix
###################

def normalize_clause(literals: Iterable[int]) -> Optional[Clause]:
    """Deduplicate literals keeping first-seen order.

    Returns:
        The cleaned clause, or None when the clause is tautological
    """
    seen: Dict[int, None] = {}
    for lit in literals:
        if isinstance(lit, bool) or not isinstance(lit, int) or lit == 0:
            raise StructuralError(f"Invalid literal {lit!r}; literals are nonzero integers")
        if -lit in seen:
            return None
        seen[lit] = None
    return tuple(seen)


@dataclass(frozen=True)
class CnfFormula:
    """Conjunction of clauses over variables ``1..num_vars``.

    The empty clause list is ``TRUE``. A formula holding the empty clause is
    ``FALSE`` and is stored as exactly one empty clause.
    """

    clauses: Tuple[Clause, ...]
    num_vars: int

    def __post_init__(self) -> None:
        if self.num_vars < 0:
            raise StructuralError("num_vars must be nonnegative")
        for clause in self.clauses:
            for lit in clause:
                if abs(lit) > self.num_vars:
                    raise StructuralError(
                        f"Literal {lit} exceeds num_vars={self.num_vars}"
                    )

    @classmethod
    def from_clauses(
        cls, clauses: Iterable[Iterable[int]], num_vars: Optional[int] = None
    ) -> "CnfFormula":
        """Build a normalized formula: tautologies and duplicates are dropped."""
        kept: Dict[FrozenSet[int], Clause] = {}
        largest = 0
        falsified = False
        for raw in clauses:
            clause = normalize_clause(raw)
            if clause is None:
                continue
            if clause:
                largest = max(largest, max(abs(lit) for lit in clause))
            else:
                falsified = True
            kept.setdefault(frozenset(clause), clause)
        if num_vars is None:
            num_vars = largest
        elif largest > num_vars:
            raise StructuralError(f"Variable {largest} exceeds num_vars={num_vars}")
        if falsified:
            return cls.false(num_vars)
        return cls(tuple(kept.values()), num_vars)

    @classmethod
    def true(cls, num_vars: int = 0) -> "CnfFormula":
        """Return the constant TRUE over ``num_vars`` variables."""
        return cls((), num_vars)

    @classmethod
    def false(cls, num_vars: int = 0) -> "CnfFormula":
        """Return the constant FALSE over ``num_vars`` variables."""
        return cls(((),), num_vars)

    @property
    def is_true(self) -> bool:
        return not self.clauses

    @property
    def is_false(self) -> bool:
        return () in self.clauses

    def variables(self) -> FrozenSet[int]:
        """Return the variables that occur in some clause."""
        return frozenset(abs(lit) for clause in self.clauses for lit in clause)

    def conjoin(self, *others: "CnfFormula") -> "CnfFormula":
        """Return the conjunction with other formulas over the widest variable range."""
        clauses: List[Clause] = list(self.clauses)
        num_vars = self.num_vars
        for other in others:
            clauses.extend(other.clauses)
            num_vars = max(num_vars, other.num_vars)
        return CnfFormula.from_clauses(clauses, num_vars)

    def with_num_vars(self, num_vars: int) -> "CnfFormula":
        """Widen the variable range without touching the clauses."""
        return CnfFormula(self.clauses, max(num_vars, self.num_vars))

    def satisfied_by(self, assignment: Mapping[int, bool]) -> bool:
        """Check a total assignment (over the occurring variables) against every clause."""
        return all(
            any(assignment[abs(lit)] == (lit > 0) for lit in clause)
            for clause in self.clauses
        )


###################
# Prefix
###################

class QuantifierKind(str, Enum):
    """Quantifier kinds that may be stored in a prefix."""

    EXISTS = "e"
    RANDOM = "r"


@dataclass(frozen=True)
class Quantifier:
    """One prefix entry kind; ``probability`` is ``Pr[var = 1]`` for randomized entries."""

    kind: QuantifierKind
    probability: Optional[Number] = None

    def __post_init__(self) -> None:
        if self.kind is QuantifierKind.RANDOM:
            p = self.probability
            if p is None or isinstance(p, bool) or not 0 <= p <= 1:
                raise InputValidationError(f"Randomized probability {p!r} is outside [0, 1]")
        elif self.probability is not None:
            raise StructuralError("Existential quantifiers carry no probability")

    @classmethod
    def exists(cls) -> "Quantifier":
        return cls(QuantifierKind.EXISTS)

    @classmethod
    def random(cls, probability: Number) -> "Quantifier":
        return cls(QuantifierKind.RANDOM, probability)

    @property
    def is_random(self) -> bool:
        return self.kind is QuantifierKind.RANDOM


PrefixEntry = Tuple[int, Quantifier]


@dataclass(frozen=True)
class SsatFormula:
    """Quantifier prefix plus CNF matrix.

    Every variable occurring in the matrix is quantified exactly once; prefix
    order is significant. Freshly built formulas quantify ``1..num_vars``
    densely; conditioned formulas keep ``num_vars`` and drop assigned variables
    from the prefix.
    """

    prefix: Tuple[PrefixEntry, ...]
    matrix: CnfFormula

    def __post_init__(self) -> None:
        seen = set()
        for var, _ in self.prefix:
            if var in seen:
                raise StructuralError(f"Variable {var} is quantified twice")
            if not 1 <= var <= self.matrix.num_vars:
                raise StructuralError(
                    f"Quantified variable {var} is outside 1..{self.matrix.num_vars}"
                )
            seen.add(var)
        missing = sorted(self.matrix.variables() - seen)
        if missing:
            raise StructuralError(f"Matrix variables missing from the prefix: {missing}")

    def quantified(self) -> FrozenSet[int]:
        return frozenset(var for var, _ in self.prefix)

    def leading_existentials(self) -> Tuple[int, ...]:
        """Return the maximal existential block at the head of the prefix."""
        block = []
        for var, quantifier in self.prefix:
            if quantifier.is_random:
                break
            block.append(var)
        return tuple(block)


@dataclass(frozen=True)
class SolverStats:
    """Counters collected by one evaluation."""

    decisions: int = 0
    cache_hits: int = 0
    cache_entries: int = 0


@dataclass(frozen=True)
class SolveResult:
    """Satisfying probability plus the maximizing existential choices.

    The witness covers the leading existential block together with any
    existential variable fixed by unit propagation on the input matrix (such a
    variable takes the same value under every quantifier branch).
    """

    probability: Number
    witness: Assignment = field(default_factory=dict)
    stats: SolverStats = field(default_factory=SolverStats)


def build_formula(
    blocks: Sequence[Tuple[QuantifierKind, Sequence]],
    matrix: CnfFormula,
) -> SsatFormula:
    """Assemble a prefix from quantifier blocks; unlisted variables become innermost existentials.

    Args:
        blocks: ``(EXISTS, [var, ...])`` or ``(RANDOM, [(var, p), ...])`` in prefix order
        matrix: CNF matrix; its variable range is widened to cover the prefix

    Returns:
        A formula whose prefix quantifies ``1..num_vars`` exactly once
    """
    prefix: List[PrefixEntry] = []
    for kind, entries in blocks:
        for entry in entries:
            if kind is QuantifierKind.RANDOM:
                var, p = entry
                prefix.append((var, Quantifier.random(p)))
            else:
                prefix.append((entry, Quantifier.exists()))
    largest = max((var for var, _ in prefix), default=0)
    matrix = matrix.with_num_vars(largest)
    listed = {var for var, _ in prefix}
    for var in range(1, matrix.num_vars + 1):
        if var not in listed:
            prefix.append((var, Quantifier.exists()))
    return SsatFormula(tuple(prefix), matrix)


def er_formula(
    exists: Sequence[int], randomized: Sequence[Tuple[int, Number]], matrix: CnfFormula
) -> SsatFormula:
    """Existential block, then randomized block, then innermost existentials."""
    return build_formula(
        [(QuantifierKind.EXISTS, exists), (QuantifierKind.RANDOM, randomized)], matrix
    )


def re_formula(
    randomized: Sequence[Tuple[int, Number]], exists: Sequence[int], matrix: CnfFormula
) -> SsatFormula:
    """Randomized block, then existential block (plus any unlisted variables)."""
    return build_formula(
        [(QuantifierKind.RANDOM, randomized), (QuantifierKind.EXISTS, exists)], matrix
    )


###################
# Conditioning
###################

def condition(formula: SsatFormula, assignment: Mapping[int, bool]) -> SsatFormula:
    """Substitute a partial assignment and drop the assigned variables from the prefix.

    Raises:
        StructuralError: when an assigned variable is not quantified by the formula
    """
    quantified = formula.quantified()
    stray = sorted(var for var in assignment if var not in quantified)
    if stray:
        raise StructuralError(f"Cannot condition on unquantified variables {stray}")

    prefix = tuple(entry for entry in formula.prefix if entry[0] not in assignment)
    num_vars = formula.matrix.num_vars
    clauses: List[Clause] = []
    for clause in formula.matrix.clauses:
        if any(assignment.get(abs(lit)) == (lit > 0) for lit in clause):
            continue
        reduced = tuple(lit for lit in clause if abs(lit) not in assignment)
        if not reduced:
            return SsatFormula(prefix, CnfFormula.false(num_vars))
        clauses.append(reduced)
    return SsatFormula(prefix, CnfFormula(tuple(clauses), num_vars))


###################
# Evaluation
###################

def _assign(clauses: FrozenSet[FrozenSet[int]], lit: int) -> Optional[FrozenSet[FrozenSet[int]]]:
    """Make ``lit`` true; None when a clause is falsified."""
    kept = []
    for clause in clauses:
        if lit in clause:
            continue
        if -lit in clause:
            clause = clause - {-lit}
            if not clause:
                return None
        kept.append(clause)
    return frozenset(kept)


def _occurring(clauses: Iterable[FrozenSet[int]]) -> FrozenSet[int]:
    return frozenset(abs(lit) for clause in clauses for lit in clause)


class _Evaluator:
    """Quantifier elimination with unit propagation, component splitting and caching.

    Branching follows prefix blocks: a variable is branched on only once every
    variable of earlier blocks is gone from the residual matrix. Inside one
    block, quantifiers of the same kind commute, so the most frequent variable
    goes first. Pure-literal elimination applies to existential variables only.
    The cache is keyed by the residual clause set, which also determines the
    remaining prefix suffix.
    """

    def __init__(self, prefix: Sequence[PrefixEntry], exact: bool):
        self.one: Number = Fraction(1) if exact else 1.0
        self.zero: Number = Fraction(0) if exact else 0.0
        self.block: Dict[int, int] = {}
        self.position: Dict[int, int] = {}
        self.prob: Dict[int, Number] = {}
        block = 0
        previous: Optional[QuantifierKind] = None
        for position, (var, quantifier) in enumerate(prefix):
            if previous is not None and quantifier.kind is not previous:
                block += 1
            previous = quantifier.kind
            self.block[var] = block
            self.position[var] = position
            if quantifier.is_random:
                p = quantifier.probability
                self.prob[var] = Fraction(p) if exact else float(p)
        self.cache: Dict[FrozenSet[FrozenSet[int]], Number] = {}
        self.decisions = 0
        self.cache_hits = 0

    def stats(self) -> SolverStats:
        return SolverStats(self.decisions, self.cache_hits, len(self.cache))

    def propagate(
        self, clauses: FrozenSet[FrozenSet[int]]
    ) -> Tuple[Number, Optional[FrozenSet[FrozenSet[int]]], Assignment]:
        """Apply unit clauses until none remain, collecting randomized weights."""
        weight = self.one
        forced: Assignment = {}
        while True:
            units = {next(iter(clause)) for clause in clauses if len(clause) == 1}
            if not units:
                return weight, clauses, forced
            for lit in units:
                if -lit in units:
                    return self.zero, None, forced
            for lit in sorted(units, key=abs):
                var = abs(lit)
                p = self.prob.get(var)
                if p is not None:
                    weight *= p if lit > 0 else self.one - p
                forced[var] = lit > 0
                reduced = _assign(clauses, lit)
                if reduced is None or weight == 0:
                    return self.zero, None, forced
                clauses = reduced

    def eliminate_pure(self, clauses: FrozenSet[FrozenSet[int]]) -> FrozenSet[FrozenSet[int]]:
        """Satisfy existential variables that occur with a single polarity."""
        polarity: Dict[int, int] = {}
        for clause in clauses:
            for lit in clause:
                var = abs(lit)
                sign = 1 if lit > 0 else 2
                polarity[var] = polarity.get(var, 0) | sign
        pure = set()
        for var, seen in polarity.items():
            if var in self.prob or seen == 3:
                continue
            pure.add(var if seen == 1 else -var)
        if not pure:
            return clauses
        return frozenset(clause for clause in clauses if pure.isdisjoint(clause))

    def components(self, clauses: FrozenSet[FrozenSet[int]]) -> List[FrozenSet[FrozenSet[int]]]:
        """Split the clause set into variable-disjoint parts."""
        parent: Dict[int, int] = {}

        def find(var: int) -> int:
            root = var
            while parent.setdefault(root, root) != root:
                root = parent[root]
            while parent[var] != root:
                parent[var], var = root, parent[var]
            return root

        for clause in clauses:
            lits = iter(clause)
            anchor = find(abs(next(lits)))
            for lit in lits:
                other = find(abs(lit))
                if other != anchor:
                    parent[other] = anchor
        groups: Dict[int, List[FrozenSet[int]]] = {}
        for clause in clauses:
            groups.setdefault(find(abs(next(iter(clause)))), []).append(clause)
        return [frozenset(group) for group in groups.values()]

    def pick_variable(self, clauses: FrozenSet[FrozenSet[int]]) -> int:
        counts: Dict[int, int] = {}
        for clause in clauses:
            for lit in clause:
                counts[abs(lit)] = counts.get(abs(lit), 0) + 1
        return min(counts, key=lambda var: (self.block[var], -counts[var], self.position[var]))

    def solve(self, clauses: FrozenSet[FrozenSet[int]]) -> Number:
        """Return the satisfying probability of the residual clause set."""
        if not clauses:
            return self.one
        if _EMPTY in clauses:
            return self.zero
        cached = self.cache.get(clauses)
        if cached is not None:
            self.cache_hits += 1
            return cached

        weight, reduced, _ = self.propagate(clauses)
        if reduced is None:
            result = self.zero
        else:
            reduced = self.eliminate_pure(reduced)
            if reduced != clauses:
                result = weight * self.solve(reduced)
            else:
                result = self.split_or_branch(reduced)
        self.cache[clauses] = result
        return result

    def split_or_branch(self, clauses: FrozenSet[FrozenSet[int]]) -> Number:
        parts = self.components(clauses)
        if len(parts) > 1:
            result = self.one
            for part in sorted(parts, key=len):
                result *= self.solve(part)
                if result == 0:
                    break
            return result

        var = self.pick_variable(clauses)
        self.decisions += 1
        p = self.prob.get(var)
        if p is None:
            return max(self.branch(clauses, var), self.branch(clauses, -var))
        high = self.branch(clauses, var) if p != 0 else self.zero
        low = self.branch(clauses, -var) if p != 1 else self.zero
        return p * high + (self.one - p) * low

    def branch(self, clauses: FrozenSet[FrozenSet[int]], lit: int) -> Number:
        reduced = _assign(clauses, lit)
        return self.zero if reduced is None else self.solve(reduced)

    def solve_leading(
        self, clauses: FrozenSet[FrozenSet[int]], leading: Tuple[int, ...]
    ) -> Tuple[Number, Assignment]:
        """Branch explicitly on the leading existential block to recover the witness.

        Ties prefer FALSE; a variable absent from the residual is set FALSE.
        """
        present = _occurring(clauses)
        absent = {var: False for var in leading if var not in present}
        pending = tuple(var for var in leading if var in present)
        if not pending:
            return self.solve(clauses), absent

        var, rest = pending[0], pending[1:]
        best: Optional[Tuple[Number, Assignment]] = None
        for value in (False, True):
            self.decisions += 1
            reduced = _assign(clauses, var if value else -var)
            probability, chosen = self.zero, {other: False for other in rest}
            if reduced is not None:
                weight, reduced, forced = self.propagate(reduced)
                if reduced is not None:
                    remaining = tuple(other for other in rest if other not in forced)
                    sub_probability, sub_witness = self.solve_leading(reduced, remaining)
                    probability = weight * sub_probability
                    chosen = {other: forced[other] for other in rest if other in forced}
                    chosen.update(sub_witness)
            if best is None or probability > best[0]:
                best = (probability, {var: value, **chosen})
        probability, witness = best
        witness.update(absent)
        return probability, witness


def _clamp(value: Number) -> Number:
    if isinstance(value, Fraction):
        return value
    return min(max(value, 0.0), 1.0)


def _ensure_recursion_budget(num_vars: int) -> None:
    needed = 6 * num_vars + 1000
    if sys.getrecursionlimit() < needed:
        sys.setrecursionlimit(needed)


def evaluate(formula: SsatFormula, exact: bool = False) -> SolveResult:
    """Compute the exact satisfying probability of an exist/random formula.

    Args:
        formula: formula to solve
        exact: use ``fractions.Fraction`` arithmetic instead of floats

    Returns:
        Probability and witness for the leading existential block
    """
    _ensure_recursion_budget(formula.matrix.num_vars)
    evaluator = _Evaluator(formula.prefix, exact)
    leading = formula.leading_existentials()
    clauses = frozenset(frozenset(clause) for clause in formula.matrix.clauses)

    weight, reduced, forced = evaluator.propagate(clauses)
    witness: Assignment = {var: value for var, value in forced.items() if var not in evaluator.prob}
    if reduced is None:
        witness.update({var: False for var in leading if var not in witness})
        return SolveResult(evaluator.zero, witness, evaluator.stats())

    remaining = tuple(var for var in leading if var not in forced)
    probability, chosen = evaluator.solve_leading(reduced, remaining)
    witness.update(chosen)
    probability = _clamp(weight * probability)
    stats = evaluator.stats()
    logger.debug(
        f"Solved {len(formula.prefix)}-variable formula: p={float(probability):.10g}, "
        f"decisions={stats.decisions}, cache_hits={stats.cache_hits}"
    )
    return SolveResult(probability, witness, stats)


def weighted_model_count(
    matrix: CnfFormula, probs: Mapping[int, Number], exact: bool = False
) -> Number:
    """Sum the weights of all satisfying assignments of a fully randomized matrix.

    Raises:
        InputValidationError: when an occurring variable has no probability or
            a probability lies outside [0, 1]
    """
    occurring = sorted(matrix.variables())
    missing = [var for var in occurring if var not in probs]
    if missing:
        raise InputValidationError(f"No probability for variables {missing}")
    prefix = [(var, Quantifier.random(probs[var])) for var in occurring]
    _ensure_recursion_budget(matrix.num_vars)
    evaluator = _Evaluator(prefix, exact)
    clauses = frozenset(frozenset(clause) for clause in matrix.clauses)
    return _clamp(evaluator.solve(clauses))


def evaluate_reference(formula: SsatFormula, exact: bool = False) -> Number:
    """Apply the elimination rules literally: no propagation, no caching.

    Exponential in the number of variables; used as an oracle and by
    ``solve --reference``.
    """
    one: Number = Fraction(1) if exact else 1.0
    zero: Number = Fraction(0) if exact else 0.0
    prefix = formula.prefix

    def restrict(clauses: List[Clause], lit: int) -> List[Clause]:
        out = []
        for clause in clauses:
            if lit in clause:
                continue
            out.append(tuple(other for other in clause if other != -lit))
        return out

    def recurse(index: int, clauses: List[Clause]) -> Number:
        if not clauses:
            return one
        if any(not clause for clause in clauses):
            return zero
        var, quantifier = prefix[index]
        high = recurse(index + 1, restrict(clauses, var))
        low = recurse(index + 1, restrict(clauses, -var))
        if not quantifier.is_random:
            return max(high, low)
        p = Fraction(quantifier.probability) if exact else float(quantifier.probability)
        return p * high + (one - p) * low

    _ensure_recursion_budget(formula.matrix.num_vars)
    return recurse(0, list(formula.matrix.clauses))


###################
# Negation and duality
###################

def negate_tseitin(matrix: CnfFormula) -> Tuple[CnfFormula, List[int]]:
    """Return a CNF for ``NOT matrix`` using one defined auxiliary per clause.

    Auxiliary ``t_j`` is equivalent to the negation of clause ``j`` and one
    extra clause asserts ``t_1 OR ... OR t_k``. Auxiliaries are numbered from
    ``num_vars + 1`` and are forced by the original variables, so quantifying
    them innermost-existentially leaves every probability unchanged.
    """
    if matrix.is_false:
        return CnfFormula.true(matrix.num_vars), []
    if matrix.is_true:
        return CnfFormula.false(matrix.num_vars), []

    next_var = matrix.num_vars + 1
    clauses: List[Clause] = []
    auxiliaries: List[int] = []
    for clause in matrix.clauses:
        aux = next_var
        next_var += 1
        auxiliaries.append(aux)
        clauses.extend((-aux, -lit) for lit in clause)
        clauses.append((aux,) + clause)
    clauses.append(tuple(auxiliaries))
    return CnfFormula(tuple(clauses), next_var - 1), auxiliaries


def solve_ur(
    universal: Sequence[int],
    randomized: Sequence[Tuple[int, Number]],
    matrix: CnfFormula,
    negated: Optional[CnfFormula] = None,
    exact: bool = False,
) -> SolveResult:
    """Solve a universal-then-randomized formula through its existential dual.

    ``Pr[forall A, R X. phi] = 1 - Pr[exists A, R X. NOT phi]``. A caller that
    can encode ``NOT phi`` directly passes it as ``negated``; otherwise the
    Tseitin negation is used. Variables of the negated matrix outside the two
    blocks are quantified innermost-existentially.

    Returns:
        The minimum probability over universal assignments and a minimizing
        universal assignment
    """
    dual_matrix = negated if negated is not None else negate_tseitin(matrix)[0]
    dual = er_formula(universal, randomized, dual_matrix)
    result = evaluate(dual, exact=exact)
    one: Number = Fraction(1) if exact else 1.0
    witness = {var: result.witness.get(var, False) for var in universal}
    return SolveResult(_clamp(one - result.probability), witness, result.stats)
