"""
Run Configuration
One pydantic model for every subcommand: an optional JSON config file
supplies defaults, command-line flags override them, and the validated result
is echoed to <out>/config.json before any computation starts.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union
import json

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator

from core.errors import ValidationError
from core.selectors.selector import Measure

CONFIG_ECHO = "config.json"


class RunConfig(BaseModel):
    """Parameters shared by the wassfs subcommands; unused ones are ignored per command"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    data: Optional[Path] = None
    test: Optional[Path] = None
    metric: Optional[Path] = None
    trace: Optional[Path] = None
    synthetic: Optional[Literal["hierarchical"]] = None
    out: Path = Path("out")

    k: Optional[int] = Field(default=None, ge=1)
    l: int = Field(default=3, ge=1)
    measure: Optional[str] = None
    lam: float = Field(default=100.0, gt=0, alias="lambda")
    smoothing: float = Field(default=0.5, ge=0)
    recompute_neighbors: bool = True

    label_column: str = "label"
    delimiter: Optional[str] = None
    discretize: Literal["none", "quantile", "uniform"] = "none"
    bins: int = Field(default=10, ge=2, le=64)
    arity: Optional[int] = Field(default=None, ge=1, le=64)
    test_fraction: float = Field(default=0.2, gt=0, lt=1)

    seed: int = Field(default=0, ge=0)
    seeds: Optional[List[int]] = None
    p_list: List[float] = Field(default_factory=lambda: [0.0])
    neighbor_threshold: float = Field(default=0.2, ge=0)
    feature_grid: Optional[List[int]] = None

    knn: int = Field(default=5, ge=1)
    top_k: List[int] = Field(default_factory=lambda: [5])
    distance: Literal["hamming", "l1"] = "hamming"

    trials: int = Field(default=200, ge=1)
    n_features: int = Field(default=5, ge=1, le=6)
    n_classes: int = Field(default=3, ge=2, le=4)
    noise_max: float = Field(default=0.5, ge=0, le=1)

    threads: Optional[int] = Field(default=None, ge=1)

    @field_validator("measure")
    @classmethod
    def _known_measures(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return value
        for name in value.split(","):
            if name.strip() not in {m.value for m in Measure}:
                raise ValueError(f"unknown measure '{name.strip()}' "
                                 f"(expected {', '.join(m.value for m in Measure)})")
        return value

    @field_validator("p_list")
    @classmethod
    def _probabilities(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("at least one P is required")
        if any(not 0.0 <= p <= 1.0 for p in value):
            raise ValueError("every P must lie in [0, 1]")
        return value

    @field_validator("seeds")
    @classmethod
    def _nonnegative_seeds(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and (not value or any(s < 0 for s in value)):
            raise ValueError("seeds must be a non-empty list of integers >= 0")
        return value

    @field_validator("top_k", "feature_grid")
    @classmethod
    def _positive_counts(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and (not value or any(v < 1 for v in value)):
            raise ValueError("values must be integers >= 1")
        return value

    def measures(self) -> List[Measure]:
        """Measures named by --measure; the sweep defaults to exact Wasserstein vs KL"""
        if self.measure is None:
            return [Measure.WASSERSTEIN_EXACT, Measure.KL]
        return [Measure.parse(name.strip()) for name in self.measure.split(",")]

    def seed_list(self) -> List[int]:
        return self.seeds if self.seeds is not None else [self.seed]

    def require(self, *fields: str):
        """Raise a ValidationError naming the first missing required field"""
        for name in fields:
            if getattr(self, name) is None:
                raise ValidationError(f"--{name.replace('_', '-')} is required", field=name)

    def echo(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)

    def write_echo(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / CONFIG_ECHO
        path.write_text(self.echo() + "\n")
        return path


def format_pydantic_error(error: PydanticValidationError) -> ValidationError:
    """First pydantic error as a ValidationError naming its field"""
    first = error.errors()[0]
    field = ".".join(str(part) for part in first.get("loc", ())) or None
    return ValidationError(first.get("msg", str(error)), field=field)


def load_run_config(config_file: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Merge config-file defaults with flag overrides (None means "not given").

    Raises:
        ValidationError: unreadable config file or any invalid field
    """
    values: Dict[str, Any] = {}
    if config_file is not None:
        path = Path(config_file)
        if not path.exists():
            raise ValidationError(f"config file {path} does not exist", field="config")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})", field="config") from None
        if not isinstance(loaded, dict):
            raise ValidationError(f"{path}: expected a JSON object", field="config")
        values.update(loaded)

    for key, value in (overrides or {}).items():
        if value is not None:
            values["lambda" if key == "lam" else key] = value

    try:
        return RunConfig.model_validate(values)
    except PydanticValidationError as e:
        raise format_pydantic_error(e) from None
