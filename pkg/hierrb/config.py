"""
Experiment configuration.

An experiment is an INI file with the sections below; every section is a
pydantic model that rejects unknown keys. Lists are written comma separated.
"""

import configparser
import hashlib
import io
import json
import logging
import typing
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from hierrb.core.affine import TruthModel
from hierrb.core.param_space import SampleSet, random_sample, tensor_grid
from hierrb.core.scm import ScmConfig
from hierrb.exceptions import ConfigError
from hierrb.problems import build_model
from hierrb.utils.helpers import get_settings

logger = logging.getLogger(__name__)


class ProblemSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["thermal_block", "helmholtz"] = "thermal_block"
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    cells: Optional[int] = None  # thermal block
    elements: Optional[int] = None  # helmholtz
    degree: Optional[int] = None
    source: Optional[float] = None
    robin: Optional[float] = None


class TrainingSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid: Optional[List[int]] = None  # points per dimension
    file: Optional[str] = None  # explicit points (CSV), overrides the grid


class SampleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(100, ge=1)
    seed: int = 42


class GreedySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sampling: Literal["strong", "weak_std", "weak_hier"] = "strong"
    n_max: int = Field(10, ge=1)
    tol: float = Field(0.0, ge=0)
    drop_tol: float = Field(1e-10, gt=0)
    k_max: int = Field(4, ge=1)
    enrichment: Literal["taylor", "lagrange"] = "taylor"
    accumulate_derivatives: bool = False


class EstimatorSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m_rules: List[Literal["N+1", "N+2", "N+3"]] = ["N+1", "N+2"]
    taylor_orders: List[int] = []
    beta_source: Literal["exact_eig", "scm", "min_theta"] = "exact_eig"
    theta_method: Literal["train_ratio", "dinkelbach"] = "train_ratio"
    initial_guess: Literal["zero", "ratio_max", "argmax_then_error"] = "zero"
    exclusion_tol: float = Field(1e-12, gt=0)


class TimingSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    repeats: int = Field(11, ge=1)


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: Optional[str] = None  # default: <HIERRB_OUTPUT_ROOT>/<problem>_<sampling>_<hash>


SECTIONS = {
    "problem": ProblemSection,
    "training": TrainingSection,
    "test": SampleSection,
    "greedy": GreedySection,
    "estimators": EstimatorSection,
    "scm": ScmConfig,
    "timing": TimingSection,
    "output": OutputSection,
}


def _is_list(annotation) -> bool:
    if typing.get_origin(annotation) in (list, List):
        return True
    return any(_is_list(arg) for arg in typing.get_args(annotation))


def _coerce(section: str, values: dict) -> dict:
    """Split comma separated strings for list fields"""
    fields = SECTIONS[section].model_fields
    out = {}
    for key, value in values.items():
        info = fields.get(key)
        if info is not None and isinstance(value, str) and _is_list(info.annotation):
            value = [item.strip() for item in value.split(",") if item.strip()]
        out[key] = value
    return out


def _ini_value(value) -> str:
    if isinstance(value, list):
        return ",".join(_ini_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSection = ProblemSection()
    training: TrainingSection = TrainingSection()
    test: SampleSection = SampleSection()
    greedy: GreedySection = GreedySection()
    estimators: EstimatorSection = EstimatorSection()
    scm: ScmConfig = ScmConfig()
    timing: TimingSection = TimingSection()
    output: OutputSection = OutputSection()

    # ============ SERIALIZATION ============

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            return cls(**{name: _coerce(name, values or {}) for name, values in data.items()})
        except ValidationError as e:
            raise ConfigError(f"invalid config: {e}") from e

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"unreadable config: {e}") from e
        return cls.from_dict({name: dict(parser[name]) for name in parser.sections()})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_ini(path.read_text())

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            values = getattr(self, name).model_dump(mode="json")
            parser[name] = {key: _ini_value(value) for key, value in values.items() if value is not None}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump; the output section does not count"""
        payload = json.dumps(self.model_dump(mode="json", exclude={"output"}), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def apply_overrides(self, assignments: List[str] = (), **flags) -> "ExperimentConfig":
        """
        New config with `section.key=value` assignments and direct flags applied

        Direct flags: problem, sampling, n_max, beta_source, output (None = unchanged).
        """
        data = self.model_dump(mode="json")
        for item in assignments or ():
            target, sep, value = item.partition("=")
            section, dot, key = target.strip().partition(".")
            if not sep or not dot or not key:
                raise ConfigError(f"override '{item}' is not of the form section.key=value")
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section '{section}'")
            data[section][key] = value.strip()

        direct = {
            "problem": ("problem", "name"),
            "sampling": ("greedy", "sampling"),
            "n_max": ("greedy", "n_max"),
            "beta_source": ("estimators", "beta_source"),
            "output": ("output", "directory"),
        }
        for flag, value in flags.items():
            if flag not in direct:
                raise ConfigError(f"unknown override flag '{flag}'")
            if value is not None:
                section, key = direct[flag]
                data[section][key] = value
        return ExperimentConfig.from_dict(data)

    # ============ BUILDERS ============

    def build_model(self) -> TruthModel:
        options = self.problem.model_dump(exclude={"name"})
        try:
            return build_model(self.problem.name, **options)
        except ValidationError as e:
            raise ConfigError(f"invalid [problem] section: {e}") from e

    def training_set(self, model: TruthModel) -> SampleSet:
        if self.training.file:
            return SampleSet.from_csv(self.training.file, model.domain)
        grid = self.training.grid or [41] * model.domain.dim
        return tensor_grid(model.domain, grid)

    def scm_training_set(self, model: TruthModel) -> SampleSet:
        if self.scm.grid:
            return tensor_grid(model.domain, self.scm.grid)
        return self.training_set(model)

    def test_set(self, model: TruthModel) -> SampleSet:
        return random_sample(model.domain, self.test.n, self.test.seed)

    def output_directory(self) -> Path:
        if self.output.directory:
            return Path(self.output.directory)
        root = get_settings()["output_root"]
        return root / f"{self.problem.name}_{self.greedy.sampling}_{self.config_hash()[:12]}"
