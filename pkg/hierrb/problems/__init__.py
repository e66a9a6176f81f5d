"""Benchmark truth discretizations and the registry that rebuilds them by name"""

from hierrb.core.affine import TruthModel
from hierrb.exceptions import ConfigError

from .helmholtz import HelmholtzConfig, build_helmholtz_1d, exact_solution
from .thermal_block import ThermalBlockConfig, build_thermal_block

PROBLEMS = {
    "thermal_block": (ThermalBlockConfig, build_thermal_block),
    "helmholtz": (HelmholtzConfig, build_helmholtz_1d),
}


def problem_config(name: str, **options):
    """Problem config from generic options; unset (None) options keep the problem default"""
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem '{name}', expected one of {sorted(PROBLEMS)}")
    config_cls, _ = PROBLEMS[name]
    values = {k: v for k, v in options.items() if k in config_cls.model_fields and v is not None}
    for key in ("lower", "upper"):
        if key in values:
            values[key] = tuple(values[key])
    return config_cls(**values)


def build_model(name: str, **options) -> TruthModel:
    cfg = problem_config(name, **options)
    return PROBLEMS[name][1](cfg)


__all__ = [
    "PROBLEMS", "problem_config", "build_model",
    "ThermalBlockConfig", "build_thermal_block",
    "HelmholtzConfig", "build_helmholtz_1d", "exact_solution",
]
