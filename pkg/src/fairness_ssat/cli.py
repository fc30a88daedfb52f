"""Command-line entry point: ``fairness-ssat <verify|solve|encode|samplesize|generate>``.

Machine-readable output goes to stdout (or ``--out``); logs and the human
summary go to stderr. Exit codes: 0 success, 1 usage or input error,
2 verification contract failure.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from fairness_ssat.configuration import Mode, RunConfig
from fairness_ssat.distribution import (
    DatasetSchema,
    discretize,
    dump_probability_tables,
    feature_map_from_schema,
    load_csv,
    threshold_chains,
)
from fairness_ssat.encoders import encode_classifier, load_model_spec, model_thresholds, resolve_model
from fairness_ssat.errors import (
    ContractViolation,
    EmptyGroupError,
    InputValidationError,
    ParseError,
    StructuralError,
)
from fairness_ssat.report import render_summary, to_json
from fairness_ssat.sdimacs import format_cnf, read_sdimacs
from fairness_ssat.ssat_core import evaluate, evaluate_reference, negate_tseitin
from fairness_ssat.synthetic import write_bundle
from fairness_ssat.verifier import (
    FairnessVerifier,
    SampleSizeQuery,
    annotate_sample_size,
    empirical_ppvs,
    required_sample_size,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_CONTRACT = 0, 1, 2

_HELP = {
    "verify": "Verify group fairness of a classifier on a dataset",
    "solve": "Solve an SDIMACS instance",
    "encode": "Print the positive and negative CNF encodings of a classifier",
    "samplesize": "Rows needed for DI/SP estimates of a given precision",
    "generate": "Write the synthetic health-insurance bundle",
}


class UsageError(Exception):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    """Build the parser from the ``x_cli`` metadata of ``RunConfig``."""
    parser = _Parser(prog="fairness-ssat", description="SSAT-based group fairness verification")
    subparsers = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for command, text in _HELP.items():
        sub = subparsers.add_parser(command, help=text, description=text)
        for name, meta in RunConfig.cli_fields(command).items():
            kind = meta.get("type", "str")
            if meta.get("positional"):
                sub.add_argument(name, type=Path, help=meta["help"])
                continue
            options: Dict[str, Any] = {"dest": name, "help": meta["help"], "default": None}
            if kind == "flag":
                options["action"] = "store_true"
            elif kind == "count":
                options["action"] = "count"
            else:
                options["type"] = {"int": int, "float": float}.get(kind, str)
                if "choices" in meta:
                    options["choices"] = meta["choices"]
            sub.add_argument(meta["flag"], **options)
    return parser


def configure_logging(verbosity: int, console: Console) -> None:
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbosity, 2)]
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False, show_time=False)],
        force=True,
    )


def _require(config: RunConfig, *names: str) -> None:
    missing = [name for name in names if getattr(config, name) is None]
    if missing:
        flags = [RunConfig.cli_fields(config.subcommand)[name]["flag"] for name in missing]
        raise UsageError(f"{config.subcommand} needs {', '.join(flags)}")


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {out}")


def cmd_verify(config: RunConfig, console: Console) -> int:
    """Run the selected pipelines and write the JSON report."""
    _require(config, "data", "schema_file", "model")
    schema = DatasetSchema.load(config.schema_file)
    if config.protected:
        schema = schema.with_protected(config.protected)
    schema.require_protected()
    spec = load_model_spec(config.model)
    frame = load_csv(config.data, schema)
    data, fmap = discretize(frame, schema, model_thresholds(spec), config.bins)
    model = resolve_model(spec, fmap)
    implications = threshold_chains(fmap) if config.bin_implications else ()
    encoded = encode_classifier(model, config.scale, config.weight_threshold, implications)
    verifier = FairnessVerifier(encoded, fmap, data, jobs=config.jobs, exact=config.exact)

    started = time.perf_counter()
    if config.mode is Mode.ENUM:
        output = verifier.enum_report(config.metrics)
        reports = [output]
    elif config.mode is Mode.LEARN:
        output = verifier.learn_report(config.metrics)
        reports = [output]
    else:
        output = verifier.both_reports(config.metrics)
        reports = output.reports
    elapsed = time.perf_counter() - started

    sample_size = annotate_sample_size(fmap, data.num_rows, config.epsilon0, config.delta)
    empirical = empirical_ppvs(model, data, fmap) if config.empirical else None
    for report in reports:
        report.sample_size = sample_size
        report.empirical = empirical
        if config.timings:
            report.stats.wall_time_seconds = round(elapsed, 6)

    if config.dump_probs is not None:
        dump_probability_tables(config.dump_probs, verifier.tables, fmap)
    _emit(to_json(output), config.out)
    for report in reports:
        render_summary(report, console)

    if config.mode is Mode.BOTH and not output.cross_check.agrees:
        logger.error("Learn-mode extremes disagree with enumeration over the same marginals")
        return EXIT_CONTRACT
    return EXIT_OK


def cmd_solve(config: RunConfig) -> int:
    """Print the satisfying probability and the leading-block witness."""
    _require(config, "instance")
    formula = read_sdimacs(config.instance)
    if config.reference:
        probability = evaluate_reference(formula, exact=config.exact)
        witness: Dict[int, bool] = {}
    else:
        result = evaluate(formula, exact=config.exact)
        probability, witness = result.probability, result.witness
    lines = [f"{float(probability):.9f}"]
    if witness:
        literals = [str(var if witness[var] else -var) for var in sorted(witness)]
        lines.append("w " + " ".join(literals) + " 0")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_encode(config: RunConfig) -> int:
    """Dump both polarity CNFs with the feature-map legend as comments."""
    _require(config, "schema_file", "model")
    schema = DatasetSchema.load(config.schema_file)
    spec = load_model_spec(config.model)
    thresholds = model_thresholds(spec)
    if config.data is not None:
        _, fmap = discretize(load_csv(config.data, schema), schema, thresholds, config.bins)
    else:
        fmap = feature_map_from_schema(schema, thresholds, config.bins)
    model = resolve_model(spec, fmap)
    implications = threshold_chains(fmap) if config.bin_implications else ()
    encoded = encode_classifier(model, config.scale, config.weight_threshold, implications)

    negative, how = encoded.negative, "direct"
    if negative is None:
        negative, how = negate_tseitin(encoded.positive)[0], "tseitin"
    legend = ["feature map"] + fmap.legend()
    text = format_cnf(encoded.positive, legend + ["positive class"])
    text += format_cnf(negative, [f"negative class ({how})"])
    _emit(text, config.out)
    return EXIT_OK


def cmd_samplesize(config: RunConfig) -> int:
    """Print the sample-size guideline."""
    _require(config, "n", "m")
    query = SampleSizeQuery(n=config.n, m=config.m, epsilon0=config.epsilon0, delta=config.delta)
    sys.stdout.write(f"{required_sample_size(query)}\n")
    return EXIT_OK


def cmd_generate(config: RunConfig) -> int:
    """Write the synthetic bundle."""
    _require(config, "out")
    paths = write_bundle(config.out, rows=config.rows, seed=config.seed)
    sys.stdout.write("".join(f"{path}\n" for path in paths.values()))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    load_dotenv()
    console = Console(stderr=True)
    try:
        args = build_parser().parse_args(argv)
        config = RunConfig.from_sources(vars(args))
    except UsageError as error:
        console.print(f"fairness-ssat: error: {error}", highlight=False)
        return EXIT_USAGE
    except ValidationError as error:
        console.print(f"fairness-ssat: invalid option: {error}", highlight=False)
        return EXIT_USAGE
    except SystemExit as exit:
        return int(exit.code or 0)

    configure_logging(config.verbosity, console)
    commands = {
        "verify": lambda: cmd_verify(config, console),
        "solve": lambda: cmd_solve(config),
        "encode": lambda: cmd_encode(config),
        "samplesize": lambda: cmd_samplesize(config),
        "generate": lambda: cmd_generate(config),
    }
    try:
        return commands[config.subcommand]()
    except ContractViolation as error:
        logger.error(f"Contract violation: {error}")
        return EXIT_CONTRACT
    except (
        UsageError,
        ParseError,
        StructuralError,
        InputValidationError,
        EmptyGroupError,
        ValidationError,
        FileNotFoundError,
    ) as error:
        logger.error(str(error))
        return EXIT_USAGE


def run() -> None:
    """Console-script wrapper."""
    sys.exit(main())


if __name__ == "__main__":
    run()
