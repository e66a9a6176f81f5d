"""
Saturation constant Theta_{N,M} = max ||u - u_M||_X / ||u - u_N||_X over a
discrete parameter set, either as a direct maximum over the set or through
Dinkelbach's root finding for F(q) = max(f - q g).
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from hierrb.core.affine import TruthModel
from hierrb.core.basis import ReducedBasis, ReducedModel, rb_solve_many
from hierrb.core.estimators import ResidualData, reference_norm
from hierrb.core.param_space import SampleSet, partition_positive
from hierrb.core.truth_cache import truth_errors
from hierrb.exceptions import EmptyPartitionError, ParameterError

logger = logging.getLogger(__name__)

METHODS = ("train_ratio", "dinkelbach")
INITIAL_GUESSES = ("zero", "ratio_max", "argmax_then_error")


@dataclass(frozen=True)
class SaturationResult:
    theta: float
    per_subset: tuple
    iterates: tuple
    argmax: tuple  # maximizing parameter per subset
    method: str
    n: Optional[int] = None
    m: Optional[int] = None

    @property
    def valid(self) -> bool:
        return self.theta < 1.0


class DinkelbachRun(NamedTuple):
    theta: float
    iterates: List[float]
    index: int
    residual: float  # F(theta)


def _filtered(f, g, tol):
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ParameterError(f"f and g have shapes {f.shape} and {g.shape}")
    if np.any(f < 0) or np.any(g < 0):
        raise ParameterError("f and g must be nonnegative")
    g_max = float(np.max(g)) if len(g) else 0.0
    keep = np.flatnonzero(g > tol * g_max) if g_max > 0 else np.array([], dtype=int)
    if len(keep) == 0:
        raise EmptyPartitionError("no point with positive denominator left, Theta is undefined")
    return f, g, keep


def theta_train(f_values, g_values, tol: float = 1e-12, points=None) -> SaturationResult:
    """Exact maximum of f/g over the points where g > tol * max(g)"""
    f, g, keep = _filtered(f_values, g_values, tol)
    ratios = f[keep] / g[keep]
    k = int(keep[np.argmax(ratios)])
    theta = float(f[k] / g[k])
    mu = tuple(np.atleast_1d(points[k])) if points is not None else (k,)
    return SaturationResult(theta, (theta,), ((theta,),), (mu,), "train_ratio")


def dinkelbach_theta(f, g, q0: float = 0.0, tol: float = None) -> DinkelbachRun:
    """
    Dinkelbach iteration q_{k+1} = f(mu_k) / g(mu_k), mu_k = argmax f - q_k g

    On a finite set the iterates after the first step are realized ratios and
    nondecreasing, so the loop terminates; a final completion step moves q to
    the exact maximum ratio even when |F(q)| < tol was reached slightly below it.

    Args:
        f: numerator values (fine-space errors)
        g: denominator values, all positive
        q0: initial guess
        tol: stopping tolerance on |F(q)| (default 1e-10 * max f)

    Returns:
        DinkelbachRun with the maximum ratio, iterates, maximizing index and F(theta)
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if len(f) == 0 or f.shape != g.shape:
        raise ParameterError("f and g must be nonempty and aligned")
    if np.any(g <= 0):
        raise ParameterError("Dinkelbach needs g > 0 on the subset")
    if tol is None:
        tol = max(1e-10 * float(np.max(f)), np.finfo(float).tiny)

    q = float(q0)
    iterates = [q]
    updated = False
    for _ in range(len(f) + 1):
        values = f - q * g
        k = int(np.argmax(values))
        logger.debug(f"dinkelbach: q={q:.12g} F(q)={values[k]:.3e}")
        if updated and abs(values[k]) < tol:
            break
        q_next = float(f[k] / g[k])
        if updated and q_next <= q:
            break
        q = q_next
        iterates.append(q)
        updated = True

    # completion to the exact maximum on the finite set
    while True:
        k = int(np.argmax(f - q * g))
        ratio = float(f[k] / g[k])
        if ratio <= q:
            break
        q = ratio
        iterates.append(q)

    k = int(np.argmax(f - q * g))
    residual = float(np.max(f - q * g))
    return DinkelbachRun(q, iterates, k, residual)


def theta_initial_guess(residual_norms_m, residual_norms_n, variant: str = "ratio_max",
                        error_ratio: Callable[[int], float] = None):
    """
    Initial guess for the Dinkelbach iteration from residual norms

    ratio_max: max ||R_M|| / ||R_N||.
    argmax_then_error: the exact error ratio at the maximizer of the residual
    ratio, evaluated through error_ratio(index).

    Returns:
        (guess, index of the maximizing point)
    """
    r_m = np.asarray(residual_norms_m, dtype=float)
    r_n = np.asarray(residual_norms_n, dtype=float)
    if np.any(r_n <= 0):
        raise ParameterError("coarse residual norms must be positive on the subset")
    ratios = r_m / r_n
    k = int(np.argmax(ratios))
    if variant == "ratio_max":
        return float(ratios[k]), k
    if variant == "argmax_then_error":
        if error_ratio is None:
            raise ValueError("argmax_then_error needs the error ratio evaluator")
        return float(error_ratio(k)), k
    raise ValueError(f"unknown initial guess variant '{variant}'")


def saturation_from_errors(f_values, g_values, samples: SampleSet, method: str = "train_ratio",
                           tol: float = 1e-12, groups: Sequence[Sequence[int]] = None,
                           initial_guesses: Sequence[float] = None, n: int = None, m: int = None) -> SaturationResult:
    """Theta over the positive partition of `samples` given cached error values"""
    if method not in METHODS:
        raise ValueError(f"unknown saturation method '{method}'")
    f = np.asarray(f_values, dtype=float)
    g = np.asarray(g_values, dtype=float)
    subsets = partition_positive(samples, g, tol, groups)

    per_subset, iterates, argmax = [], [], []
    for i, subset in enumerate(subsets):
        idx = subset.indices
        if method == "train_ratio":
            part = theta_train(f[idx], g[idx], tol=tol, points=subset.points)
            per_subset.append(part.theta)
            iterates.append(part.iterates[0])
            argmax.append(part.argmax[0])
        else:
            q0 = initial_guesses[i] if initial_guesses is not None else 0.0
            run = dinkelbach_theta(f[idx], g[idx], q0=q0)
            per_subset.append(run.theta)
            iterates.append(tuple(run.iterates))
            argmax.append(tuple(subset.points[run.index]))

    theta = float(max(per_subset))
    return SaturationResult(theta, tuple(per_subset), tuple(iterates), tuple(argmax), method, n, m)


def compute_theta(model: TruthModel, rm: ReducedModel, basis: ReducedBasis, n: int, m: int,
                  samples: SampleSet, solutions: np.ndarray, method: str = "train_ratio",
                  tol: float = 1e-12, groups: Sequence[Sequence[int]] = None,
                  initial_guess: str = "zero", rd: ResidualData = None) -> SaturationResult:
    """
    Theta_{N,M} over a discrete set with cached truth solutions

    Args:
        model: truth model
        rm: reduced model of `basis` (size >= m)
        basis: nested basis, X_N = first n columns, X_M = first m columns
        n, m: coarse and fine dimensions, n < m
        samples: parameter set
        solutions: truth solutions over samples (one column per point)
        method: train_ratio or dinkelbach
        tol: relative exclusion tolerance for the denominator
        groups: explicit subsets (point positions); one subset by default
        initial_guess: Dinkelbach start (zero, ratio_max, argmax_then_error)
        rd: residual data, needed for residual based initial guesses

    Returns:
        SaturationResult
    """
    if not 0 < n < m <= rm.size:
        raise ValueError(f"need 0 < N < M <= {rm.size}, got N={n}, M={m}")
    coeffs_n = rb_solve_many(rm, samples.points, n)
    coeffs_m = rb_solve_many(rm, samples.points, m)
    f = truth_errors(model, solutions, samples.points, basis, coeffs_m)
    g = truth_errors(model, solutions, samples.points, basis, coeffs_n)

    guesses = None
    if method == "dinkelbach" and initial_guess != "zero":
        if rd is None:
            raise ValueError(f"initial guess '{initial_guess}' needs residual data")
        guesses = []
        for subset in partition_positive(samples, g, tol, groups):
            idx = subset.indices
            r_m = [reference_norm(rd, samples[k], coeffs_m[k]) for k in idx]
            r_n = [reference_norm(rd, samples[k], coeffs_n[k]) for k in idx]
            q0, _ = theta_initial_guess(r_m, r_n, initial_guess, lambda j: f[idx[j]] / g[idx[j]])
            logger.debug(f"initial guess ({initial_guess}) for N={n}, M={m}: {q0:.6g}")
            guesses.append(q0)

    result = saturation_from_errors(f, g, samples, method, tol, groups, guesses, n, m)
    logger.info(f"Theta_{{{n},{m}}} = {result.theta:.6g} ({method}){'' if result.valid else ' INVALID'}")
    return result
