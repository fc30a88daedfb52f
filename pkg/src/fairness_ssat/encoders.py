"""Classifier models and their CNF encodings.

Three model families are supported: decision trees, linear threshold models
and CNF rule sets. Each is read from a JSON document, resolved against a
``FeatureMap`` and encoded into a positive-class CNF (satisfied exactly when
the model predicts 1) and, where a direct construction exists, a
negative-class CNF.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter
from pysat.formula import IDPool

from fairness_ssat.distribution import FeatureMap, PredicateKind, format_number
from fairness_ssat.errors import StructuralError
from fairness_ssat.ssat_core import Clause, CnfFormula

logger = logging.getLogger(__name__)

DEFAULT_SCALE = 64


###################
# Model documents
###################

class LeafSpec(BaseModel):
    """Leaf node: ``{"label": 0 | 1}``."""

    model_config = ConfigDict(extra="forbid")

    label: Literal[0, 1]


class SplitSpec(BaseModel):
    """Internal node holding one test and two children.

    The test is a feature-map variable name (``feature``), a numeric threshold
    (``attribute`` + ``threshold``, true when value >= threshold) or a category
    (``attribute`` + ``category``).
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    feature: Optional[str] = None
    attribute: Optional[str] = None
    threshold: Optional[float] = None
    category: Optional[str] = None
    if_true: "NodeSpec" = Field(alias="true")
    if_false: "NodeSpec" = Field(alias="false")

    def test_name(self) -> str:
        if self.feature is not None:
            if self.attribute is not None or self.threshold is not None or self.category is not None:
                raise StructuralError("A node tests either a feature or an attribute, not both")
            return self.feature
        if self.attribute is None or (self.threshold is None) == (self.category is None):
            raise StructuralError(
                "A node needs 'feature', or 'attribute' with exactly one of 'threshold'/'category'"
            )
        if self.threshold is not None:
            return f"{self.attribute}>={format_number(self.threshold)}"
        return f"{self.attribute}={self.category}"


NodeSpec = Union[LeafSpec, SplitSpec]
SplitSpec.model_rebuild()


class TreeModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["tree"]
    root: Optional[NodeSpec] = None


class LinearModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["linear"]
    weights: Dict[str, float]
    bias: float = 0.0


class CnfModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["cnf"]
    clauses: List[List[str]]


ModelSpec = Annotated[
    Union[TreeModelSpec, LinearModelSpec, CnfModelSpec], Field(discriminator="type")
]
_MODEL_ADAPTER: TypeAdapter = TypeAdapter(ModelSpec)


def parse_model_spec(text: str) -> Union[TreeModelSpec, LinearModelSpec, CnfModelSpec]:
    """Validate a model JSON document."""
    return _MODEL_ADAPTER.validate_json(text)


def load_model_spec(path: Union[str, Path]) -> Union[TreeModelSpec, LinearModelSpec, CnfModelSpec]:
    return parse_model_spec(Path(path).read_text(encoding="utf-8"))


def model_thresholds(spec: Union[TreeModelSpec, LinearModelSpec, CnfModelSpec]) -> Dict[str, List[float]]:
    """Collect the numeric split points a tree document tests, per attribute."""
    found: Dict[str, List[float]] = {}
    if not isinstance(spec, TreeModelSpec) or spec.root is None:
        return found
    stack: List[NodeSpec] = [spec.root]
    while stack:
        node = stack.pop()
        if isinstance(node, SplitSpec):
            if node.attribute is not None and node.threshold is not None:
                found.setdefault(node.attribute, []).append(node.threshold)
            stack.extend((node.if_true, node.if_false))
    return {attribute: sorted(set(values)) for attribute, values in found.items()}


###################
# Models
###################

@dataclass(frozen=True)
class TreeNode:
    """Leaf (``label`` set) or internal node testing variable ``var``."""

    label: Optional[int] = None
    var: Optional[int] = None
    if_true: Optional["TreeNode"] = None
    if_false: Optional["TreeNode"] = None

    @classmethod
    def leaf(cls, label: int) -> "TreeNode":
        return cls(label=label)

    @classmethod
    def split(cls, var: int, if_true: "TreeNode", if_false: "TreeNode") -> "TreeNode":
        return cls(var=var, if_true=if_true, if_false=if_false)

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


@dataclass(frozen=True)
class DecisionTreeModel:
    """Binary decision tree over feature variables ``1..num_vars``."""

    root: Optional[TreeNode]
    num_vars: int

    def __post_init__(self) -> None:
        if self.root is None:
            raise StructuralError("Decision tree is empty")
        stack: List[Tuple[TreeNode, frozenset]] = [(self.root, frozenset())]
        while stack:
            node, tested = stack.pop()
            if node.is_leaf:
                if node.label not in (0, 1):
                    raise StructuralError(f"Leaf label {node.label!r} is not binary")
                continue
            if node.var is None or node.if_true is None or node.if_false is None:
                raise StructuralError("Internal node needs a variable and two children")
            if not 1 <= node.var <= self.num_vars:
                raise StructuralError(f"Tree tests unknown variable {node.var}")
            if node.var in tested:
                raise StructuralError(f"Variable {node.var} is tested twice on one path")
            tested = tested | {node.var}
            stack.append((node.if_true, tested))
            stack.append((node.if_false, tested))

    def paths(self, label: int) -> List[Clause]:
        """Return the literal conjunctions of every root-to-leaf path ending in ``label``."""
        found: List[Clause] = []

        def walk(node: TreeNode, path: Tuple[int, ...]) -> None:
            if node.is_leaf:
                if node.label == label:
                    found.append(path)
                return
            walk(node.if_true, path + (node.var,))
            walk(node.if_false, path + (-node.var,))

        walk(self.root, ())
        return found

    def predict(self, bits: np.ndarray) -> np.ndarray:
        out = np.zeros(len(bits), dtype=bool)

        def walk(node: TreeNode, rows: np.ndarray) -> None:
            if not len(rows):
                return
            if node.is_leaf:
                out[rows] = node.label == 1
                return
            column = bits[rows, node.var - 1]
            walk(node.if_true, rows[column])
            walk(node.if_false, rows[~column])

        walk(self.root, np.arange(len(bits)))
        return out


@dataclass(frozen=True)
class LinearModel:
    """``sum(w_v * x_v) + bias >= 0`` predicts 1."""

    weights: Mapping[int, float]
    bias: float
    num_vars: int

    def __post_init__(self) -> None:
        for var in self.weights:
            if not 1 <= var <= self.num_vars:
                raise StructuralError(f"Weight for unknown variable {var}")

    def score(self, bits: np.ndarray) -> np.ndarray:
        total = np.full(len(bits), float(self.bias))
        for var, weight in self.weights.items():
            total += weight * bits[:, var - 1]
        return total

    def predict(self, bits: np.ndarray) -> np.ndarray:
        return self.score(bits) >= 0


@dataclass(frozen=True)
class CnfRuleModel:
    """A classifier given directly by its positive-class CNF."""

    positive_cnf: CnfFormula

    @property
    def num_vars(self) -> int:
        return self.positive_cnf.num_vars

    def predict(self, bits: np.ndarray) -> np.ndarray:
        out = np.ones(len(bits), dtype=bool)
        for clause in self.positive_cnf.clauses:
            satisfied = np.zeros(len(bits), dtype=bool)
            for lit in clause:
                column = bits[:, abs(lit) - 1]
                satisfied |= column if lit > 0 else ~column
            out &= satisfied
        return out


ClassifierModel = Union[DecisionTreeModel, LinearModel, CnfRuleModel]


def _resolve_split(fmap: FeatureMap, node: SplitSpec) -> Tuple[int, bool]:
    """Find the variable a split tests; the flag is set when branches must swap."""
    name = node.test_name()
    try:
        return fmap.var_of(name), False
    except StructuralError:
        if node.category is None:
            raise
    for variable in fmap.attributes().get(node.attribute, []):
        if variable.alternative == node.category:
            return variable.var, True
    raise StructuralError(f"Unknown feature variable '{name}'")


def _resolve_node(fmap: FeatureMap, node: NodeSpec) -> TreeNode:
    if isinstance(node, LeafSpec):
        return TreeNode.leaf(node.label)
    var, swapped = _resolve_split(fmap, node)
    if_true, if_false = _resolve_node(fmap, node.if_true), _resolve_node(fmap, node.if_false)
    if swapped:
        if_true, if_false = if_false, if_true
    return TreeNode.split(var, if_true, if_false)


def _resolve_weights(fmap: FeatureMap, weights: Mapping[str, float]) -> Dict[int, float]:
    """Map weight names to variables; a raw numeric attribute is lifted onto its intervals."""
    resolved: Dict[int, float] = {}
    attributes = fmap.attributes()
    for name, weight in weights.items():
        try:
            targets = [(fmap.var_of(name), weight)]
        except StructuralError:
            variables = attributes.get(name)
            if not variables:
                raise
            if any(v.kind is not PredicateKind.INTERVAL for v in variables):
                raise StructuralError(
                    f"Weight for '{name}' needs interval variables to be lifted; it was discretized differently"
                ) from None
            targets = [(v.var, v.midpoint * weight) for v in variables]
        for var, value in targets:
            resolved[var] = resolved.get(var, 0.0) + value
    return resolved


def resolve_model(
    spec: Union[TreeModelSpec, LinearModelSpec, CnfModelSpec], fmap: FeatureMap
) -> ClassifierModel:
    """Bind a model document's names to feature-map variables.

    Raises:
        StructuralError: when a name cannot be resolved or the tree is malformed
    """
    if isinstance(spec, TreeModelSpec):
        root = None if spec.root is None else _resolve_node(fmap, spec.root)
        return DecisionTreeModel(root, fmap.num_vars)
    if isinstance(spec, LinearModelSpec):
        return LinearModel(_resolve_weights(fmap, spec.weights), spec.bias, fmap.num_vars)
    clauses = []
    for raw in spec.clauses:
        clause = []
        for token in raw:
            negated = token.startswith("-")
            var = fmap.var_of(token[1:] if negated else token)
            clause.append(-var if negated else var)
        clauses.append(clause)
    return CnfRuleModel(CnfFormula.from_clauses(clauses, fmap.num_vars))


###################
# Trees
###################

def encode_tree_positive(tree: DecisionTreeModel) -> CnfFormula:
    """One clause per label-0 path: the path conjunction negated by De Morgan."""
    clauses = [tuple(-lit for lit in path) for path in tree.paths(0)]
    return CnfFormula.from_clauses(clauses, tree.num_vars)


def encode_tree_negative(tree: DecisionTreeModel) -> CnfFormula:
    """One clause per label-1 path; satisfied exactly when the tree predicts 0."""
    clauses = [tuple(-lit for lit in path) for path in tree.paths(1)]
    return CnfFormula.from_clauses(clauses, tree.num_vars)


###################
# Pseudo-Boolean constraints
###################

class Comparison(str, Enum):
    AT_LEAST = ">="
    AT_MOST = "<="


@dataclass(frozen=True)
class PseudoBooleanConstraint:
    """``sum(c * lit) <cmp> bound`` over literals with nonzero integer coefficients.

    ``constant`` is set when the constraint does not depend on its literals.
    """

    terms: Tuple[Tuple[int, int], ...]
    comparison: Comparison
    bound: int
    constant: Optional[bool] = None

    def __post_init__(self) -> None:
        for lit, coefficient in self.terms:
            if lit == 0 or coefficient == 0 or not isinstance(coefficient, int):
                raise StructuralError(f"Invalid term ({coefficient}, {lit})")

    def holds(self, assignment: Mapping[int, bool]) -> bool:
        if self.constant is not None:
            return self.constant
        total = sum(c for lit, c in self.terms if assignment[abs(lit)] == (lit > 0))
        if self.comparison is Comparison.AT_LEAST:
            return total >= self.bound
        return total <= self.bound

    def complement(self) -> "PseudoBooleanConstraint":
        """Return the integer complement: ``>= k`` becomes ``<= k - 1`` and vice versa."""
        constant = None if self.constant is None else not self.constant
        if self.comparison is Comparison.AT_LEAST:
            return PseudoBooleanConstraint(self.terms, Comparison.AT_MOST, self.bound - 1, constant)
        return PseudoBooleanConstraint(self.terms, Comparison.AT_LEAST, self.bound + 1, constant)


def round_half_away(value: float) -> int:
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def quantize_linear(
    model: LinearModel, scale: int = DEFAULT_SCALE, threshold: float = 0.0
) -> PseudoBooleanConstraint:
    """Turn real weights into an integer at-least constraint.

    Weights with ``|w| <= threshold`` are zeroed, weights and bias are divided
    by their joint largest magnitude, multiplied by ``scale`` and rounded half
    away from zero. A constraint that cannot change its truth value is flagged
    constant.

    Example:
        weights (1.0, -0.5), bias 0.25, scale 4 -> ``4 x1 - 2 x2 >= -1``
    """
    if scale < 1:
        raise StructuralError("scale must be a positive integer")
    kept = {var: w for var, w in sorted(model.weights.items()) if w != 0 and abs(w) > threshold}
    if not kept:
        decision = model.bias >= 0
        logger.debug(f"All weights thresholded away; constant {decision}")
        return PseudoBooleanConstraint((), Comparison.AT_LEAST, 0 if decision else 1, decision)

    magnitude = max(max(abs(w) for w in kept.values()), abs(model.bias))
    terms = []
    for var, weight in kept.items():
        coefficient = round_half_away(weight / magnitude * scale)
        if coefficient:
            terms.append((var, coefficient))
    bound = -round_half_away(model.bias / magnitude * scale)

    lowest = sum(c for _, c in terms if c < 0)
    highest = sum(c for _, c in terms if c > 0)
    constant = None
    if lowest >= bound:
        constant = True
    elif highest < bound:
        constant = False
    return PseudoBooleanConstraint(tuple(terms), Comparison.AT_LEAST, bound, constant)


def pb_to_cnf(
    constraint: PseudoBooleanConstraint, first_fresh_var: int
) -> Tuple[CnfFormula, List[int]]:
    """Encode a pseudo-Boolean constraint as CNF through a reduced decision diagram.

    The constraint is rewritten as ``sum(a_i * l_i) >= K`` with positive
    ``a_i``. Diagram node ``(i, K)`` stands for ``sum over j >= i >= K`` and gets
    an auxiliary ``v`` with ``v <-> lo OR (l_i AND hi)``. Every auxiliary is
    fully defined, so each model of the original variables extends uniquely.

    Returns:
        The CNF (over ``first_fresh_var - 1`` original variables plus the
        auxiliaries) and the auxiliary variables in allocation order
    """
    num_original = first_fresh_var - 1
    if constraint.constant is not None:
        encoded = CnfFormula.true(num_original) if constraint.constant else CnfFormula.false(num_original)
        return encoded, []

    terms = list(constraint.terms)
    bound = constraint.bound
    if constraint.comparison is Comparison.AT_MOST:
        terms = [(lit, -c) for lit, c in terms]
        bound = -bound
    positive: List[Tuple[int, int]] = []
    for lit, c in terms:
        if c < 0:
            positive.append((-lit, -c))
            bound -= c
        else:
            positive.append((lit, c))
    for lit, _ in positive:
        if abs(lit) > num_original:
            raise StructuralError(f"Literal {lit} collides with fresh variable range")

    total = sum(c for _, c in positive)
    if bound <= 0:
        return CnfFormula.true(num_original), []
    if total < bound:
        return CnfFormula.false(num_original), []
    if all(c >= bound for _, c in positive):
        return CnfFormula.from_clauses([[lit for lit, _ in positive]], num_original), []

    positive.sort(key=lambda term: (-term[1], abs(term[0]), term[0]))
    suffix = [0] * (len(positive) + 1)
    for i in range(len(positive) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + positive[i][1]

    pool = IDPool(start_from=first_fresh_var)
    clauses: List[List[int]] = []
    auxiliaries: List[int] = []
    memo: Dict[Tuple[int, int], Union[bool, int]] = {}

    def node(i: int, need: int) -> Union[bool, int]:
        if need <= 0:
            return True
        if suffix[i] < need:
            return False
        key = (i, need)
        if key in memo:
            return memo[key]
        lit, coefficient = positive[i]
        hi = node(i + 1, need - coefficient)
        lo = node(i + 1, need)
        if lo is True:
            result: Union[bool, int] = True
        elif hi is False:
            result = False
        elif lo is False and hi is True:
            result = lit
        else:
            v = pool.id(key)
            auxiliaries.append(v)
            _define(clauses, v, lit, lo, hi)
            result = v
        memo[key] = result
        return result

    root = node(0, bound)
    num_vars = max(num_original, pool.top)
    if root is True:
        return CnfFormula.true(num_vars), auxiliaries
    if root is False:
        return CnfFormula.false(num_vars), auxiliaries
    clauses.append([root])
    return CnfFormula.from_clauses(clauses, num_vars), auxiliaries


def _define(
    clauses: List[List[int]], v: int, lit: int, lo: Union[bool, int], hi: Union[bool, int]
) -> None:
    """Emit ``v <-> lo OR (lit AND hi)`` with constant children folded away."""
    templates = [
        [(False, lo), (True, v)],
        [(False, lit), (False, hi), (True, v)],
        [(False, v), (True, lo), (True, lit)],
        [(False, v), (True, lo), (True, hi)],
    ]
    for template in templates:
        clause: List[int] = []
        satisfied = False
        for positive, operand in template:
            if isinstance(operand, bool):
                if operand == positive:
                    satisfied = True
                    break
                continue
            clause.append(operand if positive else -operand)
        if not satisfied:
            clauses.append(clause)


def encode_linear(
    model: LinearModel,
    scale: int = DEFAULT_SCALE,
    threshold: float = 0.0,
    polarity: Literal["positive", "negative"] = "positive",
    first_fresh_var: Optional[int] = None,
) -> CnfFormula:
    """Encode ``W.X + b >= 0`` (positive) or its integer complement (negative)."""
    constraint = quantize_linear(model, scale, threshold)
    if polarity == "negative":
        constraint = constraint.complement()
    elif polarity != "positive":
        raise StructuralError(f"Unknown polarity {polarity!r}")
    fresh = first_fresh_var if first_fresh_var is not None else model.num_vars + 1
    encoded, auxiliaries = pb_to_cnf(constraint, fresh)
    logger.debug(
        f"Linear {polarity} encoding: {len(encoded.clauses)} clauses, {len(auxiliaries)} auxiliaries"
    )
    return encoded


###################
# Correlation constraints
###################

def add_bin_implications(cnf: CnfFormula, ordered_bins: Sequence[Sequence[int]]) -> CnfFormula:
    """Append ``stronger -> weaker`` for adjacent nested thresholds.

    Args:
        cnf: formula to extend
        ordered_bins: per attribute, threshold variables from the highest
            threshold to the lowest
    """
    clauses = [
        (-stronger, weaker)
        for chain in ordered_bins
        for stronger, weaker in zip(chain, chain[1:])
    ]
    if not clauses:
        return cnf
    return cnf.conjoin(CnfFormula.from_clauses(clauses, cnf.num_vars))


###################
# Dispatch
###################

@dataclass(frozen=True)
class EncodedClassifier:
    """Positive-class CNF plus a direct negative-class CNF when one exists.

    ``negative`` is None when the caller must fall back to Tseitin negation.
    """

    positive: CnfFormula
    negative: Optional[CnfFormula]
    num_features: int
    auxiliaries: Tuple[int, ...] = field(default=())


def encode_classifier(
    model: ClassifierModel,
    scale: int = DEFAULT_SCALE,
    threshold: float = 0.0,
    implications: Sequence[Sequence[int]] = (),
) -> EncodedClassifier:
    """Encode any supported model into its positive and negative CNFs.

    Bin implications are conjoined into the positive CNF; the negative side
    then has to come from negating that conjunction, so no direct negative
    encoding is returned in that case.
    """
    num_features = model.num_vars
    if isinstance(model, DecisionTreeModel):
        positive, negative = encode_tree_positive(model), encode_tree_negative(model)
    elif isinstance(model, LinearModel):
        positive = encode_linear(model, scale, threshold, "positive")
        negative = encode_linear(model, scale, threshold, "negative")
    else:
        positive, negative = model.positive_cnf, None

    if any(len(chain) > 1 for chain in implications):
        positive = add_bin_implications(positive, implications)
        negative = None
    auxiliaries = tuple(range(num_features + 1, positive.num_vars + 1))
    return EncodedClassifier(positive, negative, num_features, auxiliaries)
