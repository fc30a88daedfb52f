"""Run configuration for the fairness-ssat command line."""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

ENV_PREFIX = "FAIRNESS_SSAT_"

Subcommand = Literal["verify", "solve", "encode", "samplesize", "generate"]


class Mode(str, Enum):
    """Verification pipelines."""

    ENUM = "enum"
    LEARN = "learn"
    BOTH = "both"


def _cli(flag: str, help: str, commands: List[str], **extra: Any) -> Dict[str, Any]:
    return {"x_cli": {"flag": flag, "help": help, "commands": commands, **extra}}


class RunConfig(BaseModel):
    """Options of one CLI run.

    Each field's ``x_cli`` block names its flag and the subcommands that
    accept it. Values come from the command line, then from
    ``FAIRNESS_SSAT_<FIELD>`` environment variables, then from the defaults.
    """

    subcommand: Subcommand = "verify"

    # Inputs and outputs
    data: Optional[Path] = Field(
        default=None,
        json_schema_extra=_cli("--data", "CSV file with a header row", ["verify", "encode"]),
    )
    schema_file: Optional[Path] = Field(
        default=None,
        json_schema_extra=_cli("--schema", "Schema JSON describing the CSV columns", ["verify", "encode"]),
    )
    model: Optional[Path] = Field(
        default=None,
        json_schema_extra=_cli("--model", "Classifier JSON (tree, linear or cnf)", ["verify", "encode"]),
    )
    instance: Optional[Path] = Field(
        default=None,
        json_schema_extra=_cli("instance", "SDIMACS file to solve", ["solve"], positional=True),
    )
    out: Optional[Path] = Field(
        default=None,
        json_schema_extra=_cli(
            "--out", "Write the output here instead of stdout (a directory for generate)",
            ["verify", "encode", "generate"],
        ),
    )
    dump_probs: Optional[Path] = Field(
        default=None,
        json_schema_extra=_cli("--dump-probs", "Write every probability table used as JSON", ["verify"]),
    )

    # Verification
    mode: Mode = Field(
        default=Mode.ENUM,
        json_schema_extra=_cli("--mode", "Pipeline to run", ["verify"], choices=[m.value for m in Mode]),
    )
    metrics: List[str] = Field(
        default=["di", "sp"],
        json_schema_extra=_cli("--metrics", "Comma-separated subset of di,sp,eo", ["verify"]),
    )
    protected: Optional[List[str]] = Field(
        default=None,
        json_schema_extra=_cli("--protected", "Comma-separated protected attributes (overrides the schema)", ["verify"]),
    )
    bins: int = Field(
        default=4,
        ge=1,
        json_schema_extra=_cli("--bins", "Equal-width bins for numeric attributes", ["verify", "encode"], type="int"),
    )
    scale: int = Field(
        default=64,
        ge=1,
        json_schema_extra=_cli("--scale", "Integer scale for quantized linear weights", ["verify", "encode"], type="int"),
    )
    weight_threshold: float = Field(
        default=0.0,
        ge=0.0,
        json_schema_extra=_cli("--lambda", "Zero linear weights with |w| <= lambda", ["verify", "encode"], type="float"),
    )
    bin_implications: bool = Field(
        default=False,
        json_schema_extra=_cli("--bin-implications", "Add implications between nested thresholds", ["verify", "encode"], type="flag"),
    )
    jobs: int = Field(
        default=1,
        ge=1,
        json_schema_extra=_cli("--jobs", "Concurrent group solves in enum mode", ["verify"], type="int"),
    )
    exact: bool = Field(
        default=False,
        json_schema_extra=_cli("--exact", "Use rational arithmetic", ["verify", "solve"], type="flag"),
    )
    reference: bool = Field(
        default=False,
        json_schema_extra=_cli("--reference", "Use the uncached reference evaluator", ["solve"], type="flag"),
    )
    empirical: bool = Field(
        default=False,
        json_schema_extra=_cli("--empirical", "Add per-group prediction frequencies measured on the rows", ["verify"], type="flag"),
    )
    timings: bool = Field(
        default=False,
        json_schema_extra=_cli("--timings", "Record wall time in the report", ["verify"], type="flag"),
    )

    # Sample size
    epsilon0: float = Field(
        default=1.1,
        gt=1.0,
        json_schema_extra=_cli("--epsilon0", "Multiplicative error of the estimates", ["verify", "samplesize"], type="float"),
    )
    delta: float = Field(
        default=0.05,
        gt=0.0,
        lt=1.0,
        json_schema_extra=_cli("--delta", "Failure probability", ["verify", "samplesize"], type="float"),
    )
    n: Optional[int] = Field(
        default=None,
        ge=0,
        json_schema_extra=_cli("--n", "Protected Boolean variables", ["samplesize"], type="int"),
    )
    m: Optional[int] = Field(
        default=None,
        ge=2,
        json_schema_extra=_cli("--m", "Non-protected Boolean variables", ["samplesize"], type="int"),
    )

    # Synthetic data
    rows: int = Field(
        default=10_000,
        ge=1,
        json_schema_extra=_cli("--rows", "Rows of synthetic data", ["generate"], type="int"),
    )
    seed: int = Field(
        default=0,
        json_schema_extra=_cli("--seed", "Seed of the synthetic generator", ["generate"], type="int"),
    )

    verbosity: int = Field(
        default=0,
        ge=0,
        le=2,
        json_schema_extra=_cli("-v", "Increase log detail (repeatable)", ["verify", "solve", "encode", "samplesize", "generate"], type="count"),
    )

    @field_validator("metrics", "protected", mode="before")
    @classmethod
    def _split_commas(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value

    @field_validator("metrics")
    @classmethod
    def _known_metrics(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in ("di", "sp", "eo")]
        if unknown:
            raise ValueError(f"Unknown metrics {unknown}; choose from di, sp, eo")
        return list(dict.fromkeys(value))

    @field_validator("verbosity", mode="before")
    @classmethod
    def _cap_verbosity(cls, value: Any) -> Any:
        if isinstance(value, int):
            return min(value, 2)
        return value

    @classmethod
    def cli_fields(cls, subcommand: str) -> Dict[str, Dict[str, Any]]:
        """Map field name to its ``x_cli`` block for fields accepted by a subcommand."""
        found = {}
        for name, info in cls.model_fields.items():
            extra = info.json_schema_extra
            if isinstance(extra, dict) and "x_cli" in extra and subcommand in extra["x_cli"]["commands"]:
                found[name] = extra["x_cli"]
        return found

    @classmethod
    def from_sources(cls, cli_values: Dict[str, Any]) -> "RunConfig":
        """Resolve every field from CLI values, then the environment, then defaults."""
        values: Dict[str, Any] = {}
        for name in cls.model_fields:
            given = cli_values.get(name)
            if given is not None:
                values[name] = given
                continue
            env = os.environ.get(f"{ENV_PREFIX}{name.upper()}")
            if env is not None:
                values[name] = env
        return cls(**values)
