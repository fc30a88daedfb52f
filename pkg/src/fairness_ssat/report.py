"""Verification report models and their renderings.

Reports are pydantic models so that the JSON output keeps declaration order
and stays byte-identical across runs with the same inputs. The console
summary is a rich table printed to stderr by the CLI.
"""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field
from rich.console import Console
from rich.table import Table


class GroupPpv(BaseModel):
    """Positive prediction probability of one compound group."""

    group: Dict[str, str] = Field(description="Protected attribute -> category")
    ppv: float = Field(ge=0.0, le=1.0)
    conditioning: str = Field(description="Rows the probability table was estimated from")


class GroupWitness(BaseModel):
    """Most or least favored group together with the protected-variable values selecting it."""

    group: Dict[str, str]
    ppv: float = Field(ge=0.0, le=1.0)
    assignment: Dict[str, bool] = Field(default_factory=dict)


class EqualizedOdds(BaseModel):
    tpr_gap: float = Field(ge=0.0, le=1.0)
    fpr_gap: float = Field(ge=0.0, le=1.0)
    eo: float = Field(ge=0.0, le=1.0, description="max(tpr_gap, fpr_gap)")


class Metrics(BaseModel):
    di: Optional[float] = Field(default=None, ge=0.0, le=1.0, description="Disparate impact")
    sp: Optional[float] = Field(default=None, ge=0.0, le=1.0, description="Statistical parity")
    eo: Optional[EqualizedOdds] = None


class SolverStats(BaseModel):
    solves: int = 0
    decisions: int = 0
    cache_hits: int = 0
    wall_time_seconds: Optional[float] = None


class SampleSizeAnnotation(BaseModel):
    """Order-of-magnitude sample-size guideline attached to a report."""

    protected_vars: int
    non_protected_vars: int
    epsilon0: float
    delta: float
    required_rows: int
    dataset_rows: int
    sufficient: bool
    statement: str


class EmpiricalCheck(BaseModel):
    """Per-group positive-prediction frequencies measured directly on the rows."""

    groups: List[GroupPpv]
    di: float
    sp: float


class FairnessReport(BaseModel):
    """Result of one verification pipeline."""

    mode: Literal["enum", "learn"]
    probabilities: Literal["conditional", "marginal"] = Field(
        description="Whether PPVs use per-group conditional tables or dataset marginals"
    )
    groups: Optional[List[GroupPpv]] = None
    favored: Optional[GroupWitness] = None
    unfavored: Optional[GroupWitness] = None
    metrics: Metrics = Field(default_factory=Metrics)
    skipped_groups: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    stats: SolverStats = Field(default_factory=SolverStats)
    sample_size: Optional[SampleSizeAnnotation] = None
    empirical: Optional[EmpiricalCheck] = None


class CrossCheck(BaseModel):
    """Comparison of learn-mode extremes against unconditioned enumeration."""

    enum_max: float
    enum_min: float
    learn_max: float
    learn_min: float
    tolerance: float
    agrees: bool


class VerificationBundle(BaseModel):
    """Output of ``--mode both``: every report plus the cross-check."""

    reports: List[FairnessReport]
    cross_check: CrossCheck


def to_json(report: BaseModel) -> str:
    return report.model_dump_json(indent=2, exclude_none=True) + "\n"


def _group_text(group: Dict[str, str]) -> str:
    return ", ".join(f"{name}={value}" for name, value in group.items())


def render_summary(report: FairnessReport, console: Console) -> None:
    """Print a human summary of a report."""
    title = f"{report.mode} mode ({report.probabilities} probabilities)"
    if report.groups:
        table = Table(title=title)
        table.add_column("Group")
        table.add_column("PPV", justify="right")
        table.add_column("Context")
        for record in report.groups:
            table.add_row(_group_text(record.group), f"{record.ppv:.4f}", record.conditioning)
        console.print(table)
    else:
        console.print(f"[bold]{title}[/bold]")

    for heading, witness in (("Most favored", report.favored), ("Least favored", report.unfavored)):
        if witness is not None:
            console.print(f"{heading}: {_group_text(witness.group)} (PPV {witness.ppv:.4f})")

    metrics = report.metrics
    parts = []
    if metrics.di is not None:
        parts.append(f"DI {metrics.di:.4f}")
    if metrics.sp is not None:
        parts.append(f"SP {metrics.sp:.4f}")
    if metrics.eo is not None:
        parts.append(f"EO {metrics.eo.eo:.4f} (TPR gap {metrics.eo.tpr_gap:.4f}, FPR gap {metrics.eo.fpr_gap:.4f})")
    if parts:
        console.print("  ".join(parts))
    for skipped in report.skipped_groups:
        console.print(f"[yellow]skipped empty group[/yellow] {skipped}")
    for warning in report.warnings:
        console.print(f"[yellow]warning[/yellow] {warning}")
    if report.sample_size is not None and not report.sample_size.sufficient:
        console.print(f"[yellow]{report.sample_size.statement}[/yellow]")
