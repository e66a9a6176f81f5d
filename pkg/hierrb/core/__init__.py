from . import affine, basis, estimators, greedy, param_space, saturation, scm, taylor, truth_cache

__all__ = ["affine", "basis", "estimators", "greedy", "param_space", "saturation", "scm", "taylor", "truth_cache"]
