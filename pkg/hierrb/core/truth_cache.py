import logging
from pathlib import Path
from typing import Optional

import numpy as np

from hierrb.core.affine import TruthModel, truth_solve, x_norms
from hierrb.core.basis import ReducedBasis
from hierrb.core.param_space import SampleSet
from hierrb.exceptions import ArtifactError
from hierrb.utils.container import load_container, save_container
from hierrb.utils.helpers import parallel_map

logger = logging.getLogger(__name__)


class TruthCache:
    """Truth solutions over a sample set, computed once and kept on disk"""

    def __init__(self, model: TruthModel, samples: SampleSet, directory: Optional[Path] = None,
                 workers: int = None):
        self.model = model
        self.samples = samples
        self.directory = Path(directory) if directory is not None else None
        self.workers = workers
        self._solutions = None
        self._norms = None

    @property
    def path(self) -> Optional[Path]:
        if self.directory is None:
            return None
        return self.directory / f"truth_{self.model.fingerprint()}_{self.samples.fingerprint()}.npz"

    @property
    def solutions(self) -> np.ndarray:
        if self._solutions is None:
            self.load_or_compute()
        return self._solutions

    @property
    def norms(self) -> np.ndarray:
        """X(mu)-norms of the cached solutions"""
        if self._norms is None:
            self._norms = x_norms(self.model, self.solutions, self.samples.points)
        return self._norms

    def load_or_compute(self) -> np.ndarray:
        path = self.path
        if path is not None and path.exists():
            try:
                arrays, meta = load_container(path)
                if arrays["solutions"].shape == (self.model.dofs, len(self.samples)):
                    self._solutions = arrays["solutions"]
                    logger.info(f"truth cache hit: {path.name} ({len(self.samples)} solutions)")
                    return self._solutions
            except (ArtifactError, KeyError) as e:
                logger.warning(f"truth cache {path} ignored: {e}")

        logger.info(f"computing {len(self.samples)} truth solutions ({self.model.dofs} dofs)")
        columns = parallel_map(lambda mu: truth_solve(self.model, mu), self.samples.points, self.workers)
        self._solutions = np.column_stack(columns) if columns else np.zeros((self.model.dofs, 0), self.model.dtype)
        if path is not None:
            save_container(path, {"solutions": self._solutions, "points": self.samples.points},
                           {"model": self.model.name, "samples": self.samples.fingerprint()})
        return self._solutions

    def solution(self, index: int) -> np.ndarray:
        return self.solutions[:, index]


def truth_errors(model: TruthModel, solutions: np.ndarray, mus, basis: ReducedBasis,
                 coeffs: np.ndarray, chunk: int = 256) -> np.ndarray:
    """
    ||u(mu_k) - sum_j coeffs[k, j] xi_j||_{X(mu_k)} for every k

    Args:
        model: truth model (X-product)
        solutions: truth solutions, one column per parameter
        mus: parameters, one row per column of solutions
        basis: reduced basis
        coeffs: reduced coefficients, one row per parameter
        chunk: number of columns processed at once

    Returns:
        Array of errors
    """
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    coeffs = np.atleast_2d(coeffs)
    n = coeffs.shape[1]
    Xi = basis.vectors[:, :n]
    errors = np.empty(len(mus))
    for start in range(0, len(mus), chunk):
        stop = min(start + chunk, len(mus))
        diff = solutions[:, start:stop] - Xi @ coeffs[start:stop].T
        errors[start:stop] = x_norms(model, diff, mus[start:stop])
    return errors
