"""Loading and validating run configurations.

A run configuration is a YAML file (see ``src/config/run_config.yaml``).
Values can include shell‑style variables such as ``${SQZCAV_SEED}`` which
are replaced with the corresponding environment variable at load time.
The parsed mapping is validated into a :class:`RunConfig`, which rebuilds
every domain object so their own checks run on load.
"""
from __future__ import annotations

import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.cavity.ring import DEFAULT_CARRIER_HZ, Detuning, RingCavity
from src.errors import ConfigError, FitSpecError
from src.estimator.fit import FitSpec
from src.estimator.parameters import REFLECTIVITY_NAMES, required_parameters
from src.quadrature.squeezing import DEFAULT_OPO_LINEWIDTH_HZ, InputSqueezingModel
from src.quadrature.transfer import DetectionModel
from src.synth.measurement import MeasurementConfig, Spur

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "src/config/run_config.yaml"


#: ``${NAME}`` references expanded from the environment at load time.
_ENV_REFERENCE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _load_yaml_with_env(path: str) -> Dict[str, Any]:
    """Read a YAML run configuration, substituting ``${NAME}`` from the environment.

    References in comments are left alone.  A reference to an unset variable
    outside a comment raises :class:`ConfigError` naming the variable and line.
    """
    raw = Path(path).read_text(encoding="utf-8")
    for number, line in enumerate(raw.splitlines(), start=1):
        code = line.split("#", 1)[0]
        unset = [name for name in _ENV_REFERENCE.findall(code) if name not in os.environ]
        if unset:
            raise ConfigError(f"{path}: line {number}: environment variable {unset[0]} is not set")
    expanded = _ENV_REFERENCE.sub(lambda match: os.environ.get(match.group(1), match.group(0)), raw)
    return yaml.safe_load(expanded) or {}


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CavityBlock(_Block):
    sqrt_r1: float = Field(gt=0.0, le=1.0)
    sqrt_r1r2r3: float = Field(gt=0.0, le=1.0)
    fsr_hz: float = Field(gt=0.0)
    carrier_hz: float = Field(DEFAULT_CARRIER_HZ, gt=0.0)
    t1: Optional[float] = Field(None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check(self) -> "CavityBlock":
        if self.sqrt_r1r2r3 > self.sqrt_r1:
            raise ValueError("sqrt_r1r2r3 cannot exceed sqrt_r1 (R2*R3 <= 1)")
        self.to_cavity()
        return self

    def to_cavity(self) -> RingCavity:
        return RingCavity.from_amplitudes(
            self.sqrt_r1, self.sqrt_r1r2r3, self.fsr_hz, carrier_hz=self.carrier_hz, t1=self.t1
        )


class DetuningBlock(_Block):
    omega_d_hz: float

    def to_detuning(self) -> Detuning:
        return Detuning(self.omega_d_hz)


class SqueezingBlock(_Block):
    kind: Literal["constant", "opo_lorentzian", "tabulated"] = "opo_lorentzian"
    v1_a: Optional[float] = None
    v2_a: Optional[float] = None
    pump_x: Optional[float] = None
    opo_linewidth_hz: float = DEFAULT_OPO_LINEWIDTH_HZ
    escape_purity: float = 1.0
    table: Optional[List[Tuple[float, float, float]]] = None

    @model_validator(mode="after")
    def _check(self) -> "SqueezingBlock":
        self.to_model()
        return self

    def to_model(self) -> InputSqueezingModel:
        if self.kind == "constant":
            if self.v1_a is None or self.v2_a is None:
                raise ValueError("constant squeezing needs v1_a and v2_a")
            return InputSqueezingModel.constant(self.v1_a, self.v2_a)
        if self.kind == "opo_lorentzian":
            if self.pump_x is None:
                raise ValueError("opo_lorentzian squeezing needs pump_x")
            return InputSqueezingModel.opo_lorentzian(
                self.pump_x, self.opo_linewidth_hz, self.escape_purity
            )
        if not self.table:
            raise ValueError("tabulated squeezing needs table")
        return InputSqueezingModel.tabulated(self.table)

    def fit_values(self) -> Dict[str, float]:
        if self.kind == "constant":
            return {"v1_a": self.v1_a, "v2_a": self.v2_a}
        if self.kind == "opo_lorentzian":
            return {
                "pump_x": self.pump_x,
                "opo_linewidth_hz": self.opo_linewidth_hz,
                "escape_purity": self.escape_purity,
            }
        return {}


class DetectionBlock(_Block):
    """Either explicit efficiencies or the homodyne/quantum-efficiency budget."""

    eta_c: Optional[float] = Field(None, ge=0.0, le=1.0)
    eta_m: float = Field(0.0, ge=0.0, le=1.0)
    homodyne_efficiency: Optional[float] = Field(None, ge=0.0, le=1.0)
    quantum_efficiency: Optional[float] = Field(None, ge=0.0, le=1.0)
    mismatch_homodyne_efficiency: float = Field(0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check(self) -> "DetectionBlock":
        budget = self.homodyne_efficiency is not None or self.quantum_efficiency is not None
        if budget and self.eta_c is not None:
            raise ValueError("give either eta_c/eta_m or the efficiency budget, not both")
        if budget and (self.homodyne_efficiency is None or self.quantum_efficiency is None):
            raise ValueError("the efficiency budget needs homodyne_efficiency and quantum_efficiency")
        if not budget and self.eta_c is None:
            raise ValueError("detection needs eta_c or an efficiency budget")
        self.to_detection()
        return self

    def to_detection(self) -> DetectionModel:
        if self.eta_c is not None:
            return DetectionModel(eta_c=self.eta_c, eta_m=self.eta_m)
        return DetectionModel.from_budget(
            self.homodyne_efficiency,
            self.quantum_efficiency,
            self.mismatch_homodyne_efficiency,
        )


class SpurBlock(_Block):
    enabled: bool = False
    center_hz: float = 13.3e6
    height_linear: float = Field(0.5, ge=0.0)
    width_hz: float = Field(50e3, gt=0.0)

    def to_spur(self) -> Optional[Spur]:
        if not self.enabled:
            return None
        return Spur(self.center_hz, self.height_linear, self.width_hz)


class GridBlock(_Block):
    start_hz: float = Field(ge=0.0)
    stop_hz: float = Field(gt=0.0)
    step_hz: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _check(self) -> "GridBlock":
        if not self.stop_hz > self.start_hz:
            raise ValueError("stop_hz must exceed start_hz")
        return self

    def frequencies(self) -> np.ndarray:
        count = int(round((self.stop_hz - self.start_hz) / self.step_hz)) + 1
        return self.start_hz + self.step_hz * np.arange(count)


class MeasurementBlock(_Block):
    rbw_hz: float = Field(100e3, gt=0.0)
    n_averages: int = Field(100, ge=1)
    n_eff: Optional[float] = Field(None, gt=0.0)
    seed: int = 0
    spur: SpurBlock = Field(default_factory=SpurBlock)
    grid: GridBlock

    def to_measurement(self, seed: Optional[int] = None) -> MeasurementConfig:
        return MeasurementConfig(
            rbw_hz=self.rbw_hz,
            n_averages=self.n_averages,
            spur=self.spur.to_spur(),
            seed=self.seed if seed is None else seed,
            n_eff=self.n_eff,
        )


class FitBlock(_Block):
    float_params: List[str] = Field(default_factory=lambda: ["sqrt_r1", "sqrt_r1r2r3", "omega_d_hz"])
    coordinates: Literal["amplitude", "power"] = "amplitude"
    initial_guess: Dict[str, float] = Field(default_factory=dict)
    bounds: Dict[str, Tuple[float, float]] = Field(default_factory=dict)
    masks: List[Tuple[float, float]] = Field(default_factory=list)
    quadratures: List[int] = Field(default_factory=lambda: [1, 2])
    model_rbw: bool = True
    unit_weights: bool = False
    max_iter: int = Field(500, ge=1)
    reference_linewidth_hz: Optional[float] = Field(None, gt=0.0)
    reference_linewidth_sigma_hz: Optional[float] = Field(None, ge=0.0)


class OutputBlock(_Block):
    dir: str = "out"


class RunConfig(_Block):
    """Complete, validated run configuration."""

    cavity: CavityBlock
    detuning: DetuningBlock
    squeezing: SqueezingBlock
    detection: DetectionBlock
    measurement: MeasurementBlock
    fit: FitBlock = Field(default_factory=FitBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def _check_fit(self) -> "RunConfig":
        try:
            self.fit_spec()
        except FitSpecError as exc:
            raise ValueError(f"fit: {exc}") from exc
        return self

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "RunConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(_describe(exc)) from exc

    def model_values(self, coordinates: str) -> Dict[str, float]:
        """Every fit parameter as implied by the model blocks."""
        mirror, product = REFLECTIVITY_NAMES[coordinates]
        if coordinates == "amplitude":
            values = {mirror: self.cavity.sqrt_r1, product: self.cavity.sqrt_r1r2r3}
        else:
            values = {mirror: self.cavity.sqrt_r1 ** 2, product: self.cavity.sqrt_r1r2r3 ** 2}
        detection = self.detection.to_detection()
        values.update(
            omega_d_hz=self.detuning.omega_d_hz,
            fsr_hz=self.cavity.fsr_hz,
            eta_c=detection.eta_c,
            eta_m=detection.eta_m,
        )
        values.update(self.squeezing.fit_values())
        return values

    def fit_spec(
        self,
        extra_masks: Sequence[Tuple[float, float]] = (),
        quadratures: Optional[Sequence[int]] = None,
    ) -> FitSpec:
        """FitSpec whose fixed parameters come from the model blocks."""
        block = self.fit
        values = self.model_values(block.coordinates)
        required = required_parameters(block.coordinates, self.squeezing.kind)
        fixed = {name: values[name] for name in required if name not in block.float_params}
        guess = {name: block.initial_guess.get(name, values.get(name)) for name in block.float_params}
        missing = sorted(name for name, value in guess.items() if value is None)
        if missing:
            raise FitSpecError(f"no initial guess for {', '.join(missing)}")
        return FitSpec(
            float_params=tuple(block.float_params),
            fixed_params=fixed,
            initial_guess=guess,
            bounds=block.bounds,
            masks=tuple(block.masks) + tuple(extra_masks),
            coordinates=block.coordinates,
            squeezing_kind=self.squeezing.kind,
            squeezing_table=tuple(self.squeezing.table) if self.squeezing.table else None,
            carrier_hz=self.cavity.carrier_hz,
            t1=self.cavity.t1,
            rbw_hz=self.measurement.rbw_hz if block.model_rbw else None,
            quadratures=tuple(quadratures if quadratures is not None else block.quadratures),
            unit_weights=block.unit_weights,
            max_iter=block.max_iter,
            reference_linewidth_hz=block.reference_linewidth_hz,
            reference_linewidth_sigma_hz=block.reference_linewidth_sigma_hz,
        )

    def resolved(self) -> Dict[str, Any]:
        """The configuration with every default filled in, as plain data."""
        return self.model_dump(mode="json")


def _describe(exc: ValidationError) -> str:
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        lines.append(f"{location}: {error['msg']}")
    return "; ".join(lines)


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """Load and validate a run configuration.

    The path defaults to ``SQZCAV_CONFIG`` and then to
    ``src/config/run_config.yaml``.  Validation failures raise
    :class:`ConfigError` naming the offending field paths.
    """
    if path is None:
        path = os.getenv("SQZCAV_CONFIG", DEFAULT_CONFIG_PATH)
    try:
        data = _load_yaml_with_env(path)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    config = RunConfig.from_mapping(data)
    logger.debug("Loaded run configuration from %s", path)
    return config
