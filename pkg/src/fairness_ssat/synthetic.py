"""Seeded synthetic health-insurance dataset with a fixed decision tree.

Age is split into two protected categories with equal probability. Fitness
and income are drawn from normal distributions whose parameters depend on the
age category; they are calibrated so that the tree's threshold predicates
have these probabilities:

=====================  ===========  ========
predicate              40_and_over  under_40
=====================  ===========  ========
fitness >= 0.61        0.01         0.82
income >= 0.29         0.99         0.88
income >= 0.69         0.18         0.01
=====================  ===========  ========

The label is the tree's prediction with 10% of the rows flipped.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

OLD, YOUNG = "40_and_over", "under_40"
LABEL = "approved"
FLIP_RATE = 0.1

# (fitness mean, fitness std, income mean, income std) per age category
_PARAMETERS = {
    OLD: (0.377, 0.1, 0.577, 0.1234),
    YOUNG: (0.7015, 0.1, 0.4243, 0.1143),
}

SCHEMA: Dict[str, Any] = {
    "label": LABEL,
    "attributes": [
        {"name": "age", "kind": "categorical", "protected": True, "binary": True, "categories": [OLD, YOUNG]},
        {"name": "fitness", "kind": "numeric"},
        {"name": "income", "kind": "numeric"},
    ],
}

MODEL: Dict[str, Any] = {
    "type": "tree",
    "root": {
        "attribute": "fitness",
        "threshold": 0.61,
        "true": {
            "attribute": "income",
            "threshold": 0.29,
            "true": {"label": 1},
            "false": {"label": 0},
        },
        "false": {
            "attribute": "income",
            "threshold": 0.69,
            "true": {"label": 1},
            "false": {"label": 0},
        },
    },
}


def tree_prediction(fitness: np.ndarray, income: np.ndarray) -> np.ndarray:
    """Evaluate ``MODEL`` on raw columns."""
    return np.where(fitness >= 0.61, income >= 0.29, income >= 0.69)


def generate_health_insurance(rows: int = 10_000, seed: int = 0) -> pd.DataFrame:
    """Draw ``rows`` applicants with a seeded generator."""
    if rows < 1:
        raise ValueError("rows must be positive")
    rng = np.random.default_rng(seed)
    age = rng.integers(20, 60, size=rows)
    old = age >= 40
    fitness = np.empty(rows)
    income = np.empty(rows)
    for category, selected in ((OLD, old), (YOUNG, ~old)):
        fit_mean, fit_std, inc_mean, inc_std = _PARAMETERS[category]
        count = int(selected.sum())
        fitness[selected] = rng.normal(fit_mean, fit_std, count)
        income[selected] = rng.normal(inc_mean, inc_std, count)
    fitness, income = fitness.round(4), income.round(4)
    label = tree_prediction(fitness, income)
    label ^= rng.random(rows) < FLIP_RATE
    return pd.DataFrame({
        "age": np.where(old, OLD, YOUNG),
        "fitness": fitness,
        "income": income,
        LABEL: label.astype(int),
    })


def write_bundle(directory: Union[str, Path], rows: int = 10_000, seed: int = 0) -> Dict[str, Path]:
    """Write ``data.csv``, ``schema.json`` and ``model.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "data": directory / "data.csv",
        "schema": directory / "schema.json",
        "model": directory / "model.json",
    }
    generate_health_insurance(rows, seed).to_csv(paths["data"], index=False)
    paths["schema"].write_text(json.dumps(SCHEMA, indent=2) + "\n", encoding="utf-8")
    paths["model"].write_text(json.dumps(MODEL, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote synthetic bundle ({rows} rows, seed {seed}) to {directory}")
    return paths
