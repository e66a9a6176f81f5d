"""
Reference run of the strong greedy decay on the thermal block

Usage:
    python scripts/make_reference.py [tests/data/reference_decay.json]

Writes the maximum training error before the first and after every greedy
step (33 cells per side, 41x41 grid on [0.5, 1]^2, N_max = 10), for
comparing the decay across versions.
"""

import json
import logging
import sys
from pathlib import Path

import numpy as np

# Project root on the path
sys.path.insert(0, str(Path(__file__).parent.parent))

from hierrb.core.greedy import strong_greedy
from hierrb.core.param_space import tensor_grid
from hierrb.core.truth_cache import TruthCache
from hierrb.problems import build_model

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

CELLS = 33
GRID = (41, 41)
LOWER, UPPER = (0.5, 0.5), (1.0, 1.0)
N_MAX = 10


def main(path: Path):
    model = build_model("thermal_block", cells=CELLS, lower=LOWER, upper=UPPER)
    train = tensor_grid(model.domain, GRID)
    cache = TruthCache(model, train)
    basis, trace = strong_greedy(model, train, N_MAX, cache=cache)

    reference = {
        "cells": CELLS,
        "grid": list(GRID),
        "lower": list(LOWER),
        "upper": list(UPPER),
        "n_max": N_MAX,
        "initial_max": float(np.max(cache.norms)),
        "max_values": [float(v) for v in trace.max_values],
        "selected": [list(mu) for mu in trace.selected],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(reference, indent=2) + "\n")
    logger.info(f"reference decay written to {path}: "
                f"{reference['initial_max']:.3e} -> {reference['max_values'][-1]:.3e}")


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("tests/data/reference_decay.json")
    try:
        main(target)
    except KeyboardInterrupt:
        logger.info("Interrupted")
