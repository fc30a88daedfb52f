"""Fairness verification pipelines and group-fairness metrics.

Two pipelines compute the positive prediction probability (PPV) of compound
protected groups:

* enumeration builds one randomized-then-existential formula per group over
  the positive-class CNF conjoined with the group's unit clauses, using
  probabilities estimated on that group's rows;
* learning builds a single existential-then-randomized formula whose
  existential block ranges over the protected variables; the maximum comes
  from solving it directly and the minimum from the dual formula over the
  negated classifier.

Disparate impact, statistical parity and equalized odds are computed from the
extreme PPVs.
"""

import asyncio
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from fairness_ssat.distribution import (
    BooleanDataset,
    CompoundGroup,
    ConditioningContext,
    FeatureMap,
    ProbabilityTable,
    enumerate_groups,
    estimate_probs,
    exactly_one_clauses,
    group_from_assignment,
    group_to_unit_clauses,
)
from fairness_ssat.encoders import ClassifierModel, EncodedClassifier, encode_classifier
from fairness_ssat.errors import (
    ContractViolation,
    EmptyGroupError,
    FairnessSsatError,
    InputValidationError,
)
from fairness_ssat.report import (
    CrossCheck,
    EmpiricalCheck,
    EqualizedOdds,
    FairnessReport,
    GroupPpv,
    GroupWitness,
    Metrics,
    SampleSizeAnnotation,
    SolverStats,
    VerificationBundle,
)
from fairness_ssat.ssat_core import (
    CnfFormula,
    Number,
    SolveResult,
    SsatFormula,
    er_formula,
    evaluate,
    negate_tseitin,
    re_formula,
    solve_ur,
)

logger = logging.getLogger(__name__)

METRICS = ("di", "sp", "eo")
DEFAULT_METRICS = ("di", "sp")
ORDER_TOLERANCE = 1e-12
CROSS_CHECK_TOLERANCE = 1e-6


###################
# Metrics
###################

def _check_order(ppv_min: Number, ppv_max: Number) -> None:
    if not (0 <= ppv_min and ppv_max <= 1):
        raise ContractViolation(f"PPVs ({ppv_min}, {ppv_max}) are outside [0, 1]")
    if ppv_min > ppv_max + ORDER_TOLERANCE:
        raise ContractViolation(f"Minimum PPV {ppv_min} exceeds maximum PPV {ppv_max}")


def disparate_impact(ppv_min: Number, ppv_max: Number) -> float:
    """Return ``ppv_min / ppv_max``; 1.0 when no group ever receives a positive prediction."""
    _check_order(ppv_min, ppv_max)
    if ppv_max == 0:
        logger.warning("Maximum PPV is 0; disparate impact reported as 1.0")
        return 1.0
    return min(float(ppv_min) / float(ppv_max), 1.0)


def statistical_parity(ppv_min: Number, ppv_max: Number) -> float:
    """Return ``ppv_max - ppv_min``."""
    _check_order(ppv_min, ppv_max)
    return max(float(ppv_max) - float(ppv_min), 0.0)


###################
# Sample size
###################

class SampleSizeQuery(BaseModel):
    """Inputs of the sample-size guideline."""

    n: int = Field(ge=0, description="Protected Boolean variables")
    m: int = Field(ge=2, description="Non-protected Boolean variables")
    epsilon0: float = Field(gt=1.0, description="Multiplicative estimation error")
    delta: float = Field(gt=0.0, lt=1.0, description="Failure probability")


def sample_size_bound(n: int, m: int, epsilon0: float, delta: float) -> float:
    """Evaluate ``(n + ln(1/delta)) * ln(m) / ln(epsilon0)`` without rounding.

    ``delta = 1`` is accepted here as the limiting case.
    """
    if epsilon0 <= 1:
        raise InputValidationError(f"epsilon0 must exceed 1 (got {epsilon0})")
    if not 0 < delta <= 1:
        raise InputValidationError(f"delta must lie in (0, 1] (got {delta})")
    if n < 0 or m < 1:
        raise InputValidationError(f"Invalid variable counts n={n}, m={m}")
    return (n + math.log(1 / delta)) * math.log(m) / math.log(epsilon0)


def required_sample_size(query: SampleSizeQuery) -> int:
    """Rows needed for DI/SP estimates within factor ``epsilon0`` at confidence ``1 - delta``.

    The big-O constant is fixed to 1, so the value is an order-of-magnitude
    guideline rather than a guarantee.

    Example:
        >>> required_sample_size(SampleSizeQuery(n=2, m=16, epsilon0=math.e, delta=1 / math.e))
        9
    """
    bound = sample_size_bound(query.n, query.m, query.epsilon0, query.delta)
    return max(math.ceil(bound - 1e-9), 0)


def annotate_sample_size(
    fmap: FeatureMap, rows: int, epsilon0: float, delta: float
) -> Optional[SampleSizeAnnotation]:
    """Build the sample-size note for a report; None when fewer than 2 non-protected variables."""
    n, m = len(fmap.protected_vars()), len(fmap.non_protected_vars())
    if m < 2:
        return None
    needed = required_sample_size(SampleSizeQuery(n=n, m=m, epsilon0=epsilon0, delta=delta))
    statement = (
        f"With at least {needed} rows, estimated DI and SP are within a factor {epsilon0:g} "
        f"of their true values with probability {1 - delta:g} (heuristic guideline, constant 1)"
    )
    return SampleSizeAnnotation(
        protected_vars=n,
        non_protected_vars=m,
        epsilon0=epsilon0,
        delta=delta,
        required_rows=needed,
        dataset_rows=rows,
        sufficient=rows >= needed,
        statement=statement,
    )


###################
# Pipelines
###################

@dataclass(frozen=True)
class PpvRecord:
    """PPV of one group and the rows its probability table came from."""

    group: CompoundGroup
    ppv: Number
    conditioning: ConditioningContext


@dataclass(frozen=True)
class EnumOutcome:
    """Per-group PPVs in enumeration order plus the groups that had no rows."""

    records: List[PpvRecord]
    skipped: List[str]
    tables: List[ProbabilityTable]

    @property
    def favored(self) -> PpvRecord:
        return max(self.records, key=lambda record: record.ppv)

    @property
    def unfavored(self) -> PpvRecord:
        return min(self.records, key=lambda record: record.ppv)


@dataclass(frozen=True)
class LearnOutcome:
    favored: PpvRecord
    unfavored: PpvRecord
    table: ProbabilityTable


@dataclass
class SolveCounter:
    """Solver statistics accumulated across (possibly concurrent) solves."""

    solves: int = 0
    decisions: int = 0
    cache_hits: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, result: SolveResult) -> None:
        with self._lock:
            self.solves += 1
            self.decisions += result.stats.decisions
            self.cache_hits += result.stats.cache_hits

    def snapshot(self) -> SolverStats:
        return SolverStats(solves=self.solves, decisions=self.decisions, cache_hits=self.cache_hits)


class FairnessVerifier:
    """Runs the enumeration and learning pipelines for one encoded classifier."""

    def __init__(
        self,
        encoded: EncodedClassifier,
        fmap: FeatureMap,
        data: BooleanDataset,
        jobs: int = 1,
        exact: bool = False,
    ):
        if encoded.num_features != fmap.num_vars:
            raise InputValidationError(
                f"Classifier covers {encoded.num_features} features but the map has {fmap.num_vars}"
            )
        self.encoded = encoded
        self.fmap = fmap
        self.data = data
        self.jobs = max(jobs, 1)
        self.exact = exact
        self.groups = enumerate_groups(fmap)
        self.counter = SolveCounter()
        self.tables: List[ProbabilityTable] = []

    def reset_stats(self) -> None:
        self.counter = SolveCounter()

    def _solve(self, formula: SsatFormula) -> SolveResult:
        result = evaluate(formula, exact=self.exact)
        self.counter.add(result)
        return result

    async def _solve_concurrently(self, formulas: Sequence[SsatFormula]) -> List[SolveResult]:
        semaphore = asyncio.Semaphore(self.jobs)

        async def solve_one(formula: SsatFormula) -> SolveResult:
            async with semaphore:
                return await asyncio.to_thread(self._solve, formula)

        return list(await asyncio.gather(*(solve_one(formula) for formula in formulas)))

    def _solve_all(self, formulas: Sequence[SsatFormula]) -> List[SolveResult]:
        if self.jobs == 1 or len(formulas) < 2:
            return [self._solve(formula) for formula in formulas]
        return asyncio.run(self._solve_concurrently(formulas))

    def _table(self, context: ConditioningContext) -> ProbabilityTable:
        table = estimate_probs(self.data, self.fmap, context, exact=self.exact)
        self.tables.append(table)
        return table

    def group_formula(self, group: CompoundGroup, table: ProbabilityTable) -> SsatFormula:
        """Randomized non-protected block, then existential protected and auxiliary variables."""
        units = CnfFormula.from_clauses(group_to_unit_clauses(group), self.fmap.num_vars)
        matrix = self.encoded.positive.conjoin(units)
        return re_formula(table.randomized_block(), [var for var, _ in group.assignment], matrix)

    def enum_ppvs(self, label: Optional[int] = None, conditional: bool = True) -> EnumOutcome:
        """PPV of every compound group.

        Args:
            label: restrict the probability estimates to rows with this label
            conditional: estimate probabilities per group; otherwise every
                group shares the (label-restricted) marginals

        Raises:
            EmptyGroupError: when no group has any rows
        """
        shared = None if conditional else self._table(ConditioningContext(label=label))
        pending = []
        skipped: List[str] = []
        tables: List[ProbabilityTable] = []
        for group in self.groups:
            if shared is not None:
                table = shared
            else:
                try:
                    table = self._table(ConditioningContext(group=group, label=label))
                except EmptyGroupError as error:
                    logger.warning(f"Skipping group: {error}")
                    skipped.append(error.group)
                    continue
            tables.append(table)
            pending.append((group, table, self.group_formula(group, table)))
        if not pending:
            raise EmptyGroupError("every compound group" + ("" if label is None else f" with y={label}"))

        logger.info(f"Solving {len(pending)} group formulas with {self.jobs} job(s)")
        try:
            results = self._solve_all([formula for _, _, formula in pending])
        except FairnessSsatError:
            logger.error("Group solve failed")
            raise
        records = [
            PpvRecord(group, result.probability, table.context)
            for (group, table, _), result in zip(pending, results)
        ]
        return EnumOutcome(records, skipped, tables)

    def _witness_group(self, witness: Dict[int, bool], probability: Number) -> CompoundGroup:
        protected = {var: witness.get(var, False) for var in self.fmap.protected_vars()}
        try:
            return group_from_assignment(self.fmap, protected)
        except ContractViolation:
            # Every group ties at 0 here, so any group attains the extreme.
            if probability == 0:
                return self.groups[0]
            raise

    def learn_extremes(self, label: Optional[int] = None) -> LearnOutcome:
        """Most and least favored groups under (label-restricted) marginals."""
        table = self._table(ConditioningContext(label=label))
        protected = self.fmap.protected_vars()
        block = table.randomized_block()
        validity = CnfFormula.from_clauses(exactly_one_clauses(self.fmap), self.fmap.num_vars)

        best = self._solve(er_formula(protected, block, self.encoded.positive.conjoin(validity)))
        negated = self.encoded.negative
        if negated is None:
            negated = negate_tseitin(self.encoded.positive)[0]
        worst = solve_ur(protected, block, self.encoded.positive, negated=negated.conjoin(validity), exact=self.exact)
        self.counter.add(worst)

        favored = PpvRecord(self._witness_group(best.witness, best.probability), best.probability, table.context)
        unfavored = PpvRecord(self._witness_group(worst.witness, 1 - worst.probability), worst.probability, table.context)
        logger.info(f"Learned extremes: max {float(best.probability):.6f}, min {float(worst.probability):.6f}")
        return LearnOutcome(favored, unfavored, table)

    def equalized_odds(self, mode: str) -> EqualizedOdds:
        """TPR and FPR gaps from label-conditioned runs of the chosen pipeline."""
        labels = self.data.labels
        if not labels.any() or labels.all():
            missing = 0 if labels.all() else 1
            raise InputValidationError(f"Equalized odds needs both label classes; y={missing} is absent")
        gaps = {}
        for y in (1, 0):
            if mode == "enum":
                outcome = self.enum_ppvs(label=y, conditional=True)
                high, low = outcome.favored.ppv, outcome.unfavored.ppv
            else:
                learned = self.learn_extremes(label=y)
                high, low = learned.favored.ppv, learned.unfavored.ppv
            gaps[y] = statistical_parity(low, high)
        return EqualizedOdds(tpr_gap=gaps[1], fpr_gap=gaps[0], eo=max(gaps[1], gaps[0]))

    def _metrics(self, low: Number, high: Number, metrics: Sequence[str], mode: str, warnings: List[str]) -> Metrics:
        result = Metrics()
        if "di" in metrics:
            if high == 0:
                warnings.append("No group receives positive predictions; disparate impact reported as 1.0")
            result.di = disparate_impact(low, high)
        if "sp" in metrics:
            result.sp = statistical_parity(low, high)
        if "eo" in metrics:
            result.eo = self.equalized_odds(mode)
        return result

    def _ppv_record(self, record: PpvRecord) -> GroupPpv:
        return GroupPpv(
            group=record.group.as_dict(), ppv=float(record.ppv), conditioning=record.conditioning.describe()
        )

    def _witness(self, record: PpvRecord) -> GroupWitness:
        return GroupWitness(
            group=record.group.as_dict(),
            ppv=float(record.ppv),
            assignment={self.fmap.name_of(var): value for var, value in record.group.assignment},
        )

    def enum_report(self, metrics: Sequence[str] = DEFAULT_METRICS, conditional: bool = True) -> FairnessReport:
        self.reset_stats()
        return self._enum_to_report(self.enum_ppvs(conditional=conditional), conditional, metrics)

    def learn_report(self, metrics: Sequence[str] = DEFAULT_METRICS) -> FairnessReport:
        self.reset_stats()
        return self._learn_to_report(self.learn_extremes(), metrics)

    def both_reports(
        self, metrics: Sequence[str] = DEFAULT_METRICS, tolerance: float = CROSS_CHECK_TOLERANCE
    ) -> VerificationBundle:
        """Conditional enumeration, marginal enumeration and learning, cross-checked."""
        conditional = self.enum_report(metrics, conditional=True)
        self.reset_stats()
        marginal_outcome = self.enum_ppvs(conditional=False)
        marginal = self._enum_to_report(marginal_outcome, False, metrics)
        self.reset_stats()
        learned_outcome = self.learn_extremes()
        learned = self._learn_to_report(learned_outcome, metrics)
        check = cross_check(marginal_outcome, learned_outcome, tolerance)
        return VerificationBundle(reports=[conditional, marginal, learned], cross_check=check)

    def _enum_to_report(self, outcome: EnumOutcome, conditional: bool, metrics: Sequence[str]) -> FairnessReport:
        warnings: List[str] = []
        favored, unfavored = outcome.favored, outcome.unfavored
        computed = self._metrics(unfavored.ppv, favored.ppv, metrics, "enum", warnings)
        return FairnessReport(
            mode="enum",
            probabilities="conditional" if conditional else "marginal",
            groups=[self._ppv_record(record) for record in outcome.records],
            favored=self._witness(favored),
            unfavored=self._witness(unfavored),
            metrics=computed,
            skipped_groups=outcome.skipped,
            warnings=warnings,
            stats=self.counter.snapshot(),
        )

    def _learn_to_report(self, outcome: LearnOutcome, metrics: Sequence[str]) -> FairnessReport:
        warnings: List[str] = []
        computed = self._metrics(outcome.unfavored.ppv, outcome.favored.ppv, metrics, "learn", warnings)
        return FairnessReport(
            mode="learn",
            probabilities="marginal",
            favored=self._witness(outcome.favored),
            unfavored=self._witness(outcome.unfavored),
            metrics=computed,
            warnings=warnings,
            stats=self.counter.snapshot(),
        )


def _encoded(
    classifier: Union[ClassifierModel, EncodedClassifier],
    scale: int,
    threshold: float,
    implications: Sequence[Sequence[int]],
) -> EncodedClassifier:
    if isinstance(classifier, EncodedClassifier):
        return classifier
    return encode_classifier(classifier, scale, threshold, implications)


def verify_enum(
    classifier: Union[ClassifierModel, EncodedClassifier],
    data: BooleanDataset,
    fmap: FeatureMap,
    metrics: Sequence[str] = DEFAULT_METRICS,
    conditional: bool = True,
    jobs: int = 1,
    exact: bool = False,
    scale: int = 64,
    threshold: float = 0.0,
    implications: Sequence[Sequence[int]] = (),
) -> FairnessReport:
    """Enumerate compound groups and report their PPVs and the derived metrics."""
    encoded = _encoded(classifier, scale, threshold, implications)
    verifier = FairnessVerifier(encoded, fmap, data, jobs=jobs, exact=exact)
    return verifier.enum_report(metrics, conditional=conditional)


def verify_learn(
    classifier: Union[ClassifierModel, EncodedClassifier],
    data: BooleanDataset,
    fmap: FeatureMap,
    metrics: Sequence[str] = DEFAULT_METRICS,
    exact: bool = False,
    scale: int = 64,
    threshold: float = 0.0,
    implications: Sequence[Sequence[int]] = (),
) -> FairnessReport:
    """Learn the most and least favored groups under marginal probabilities."""
    encoded = _encoded(classifier, scale, threshold, implications)
    verifier = FairnessVerifier(encoded, fmap, data, exact=exact)
    return verifier.learn_report(metrics)


def equalized_odds(
    classifier: Union[ClassifierModel, EncodedClassifier],
    data: BooleanDataset,
    fmap: FeatureMap,
    mode: str = "enum",
    scale: int = 64,
    threshold: float = 0.0,
) -> EqualizedOdds:
    """Return TPR gap, FPR gap and their maximum for the chosen pipeline."""
    if mode not in ("enum", "learn"):
        raise InputValidationError(f"Unknown mode {mode!r}")
    encoded = _encoded(classifier, scale, threshold, ())
    return FairnessVerifier(encoded, fmap, data).equalized_odds(mode)


def cross_check(
    enumerated: EnumOutcome, learned: LearnOutcome, tolerance: float = CROSS_CHECK_TOLERANCE
) -> CrossCheck:
    """Compare learn-mode extremes with enumeration over the same marginals."""
    enum_max, enum_min = float(enumerated.favored.ppv), float(enumerated.unfavored.ppv)
    learn_max, learn_min = float(learned.favored.ppv), float(learned.unfavored.ppv)
    agrees = abs(enum_max - learn_max) <= tolerance and abs(enum_min - learn_min) <= tolerance
    if not agrees:
        logger.error(
            f"Learned extremes ({learn_min:.9f}, {learn_max:.9f}) disagree with "
            f"enumeration ({enum_min:.9f}, {enum_max:.9f})"
        )
    return CrossCheck(
        enum_max=enum_max,
        enum_min=enum_min,
        learn_max=learn_max,
        learn_min=learn_min,
        tolerance=tolerance,
        agrees=agrees,
    )


def empirical_ppvs(model: ClassifierModel, data: BooleanDataset, fmap: FeatureMap) -> EmpiricalCheck:
    """Positive-prediction frequency of the model on each group's rows."""
    predictions = model.predict(data.bits)
    records = []
    for group in enumerate_groups(fmap):
        mask = group.mask(data)
        if not mask.any():
            continue
        records.append(
            GroupPpv(group=group.as_dict(), ppv=float(np.mean(predictions[mask])), conditioning=group.label)
        )
    if not records:
        raise EmptyGroupError("every compound group")
    ppvs = [record.ppv for record in records]
    low, high = min(ppvs), max(ppvs)
    return EmpiricalCheck(groups=records, di=disparate_impact(low, high), sp=statistical_parity(low, high))
