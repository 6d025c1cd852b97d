"""Registry of fit parameters and their bound-respecting internal coordinates.

Bounded parameters are fit through a logit, positive scales through a log,
so the optimizer works on an unconstrained vector.  The reflectivity
product is bounded above by the input mirror value (R2·R3 <= 1), which
makes its decoding depend on the already decoded input mirror.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from src.errors import FitSpecError

logger = logging.getLogger(__name__)

COORDINATE_SYSTEMS = ("amplitude", "power")

#: Name of the input-mirror and reflectivity-product parameters per coordinate system.
REFLECTIVITY_NAMES: Dict[str, Tuple[str, str]] = {
    "amplitude": ("sqrt_r1", "sqrt_r1r2r3"),
    "power": ("r1", "r1r2r3"),
}

SQUEEZING_PARAMETERS: Dict[str, Tuple[str, ...]] = {
    "opo_lorentzian": ("pump_x", "opo_linewidth_hz", "escape_purity"),
    "constant": ("v1_a", "v2_a"),
    "tabulated": (),
}

#: Room left at the edge of a bounded interval when encoding a value that sits on it.
_EDGE = 1e-12


@dataclass(frozen=True)
class ParameterDef:
    name: str
    lower: float
    upper: float
    description: str

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)


PARAMETERS: Dict[str, ParameterDef] = {
    definition.name: definition
    for definition in (
        ParameterDef("sqrt_r1", 0.0, 1.0, "input mirror amplitude reflectivity √R1"),
        ParameterDef("sqrt_r1r2r3", 0.0, 1.0, "round-trip amplitude √(R1R2R3)"),
        ParameterDef("r1", 0.0, 1.0, "input mirror power reflectivity R1"),
        ParameterDef("r1r2r3", 0.0, 1.0, "round-trip power R1R2R3"),
        ParameterDef("omega_d_hz", 0.0, math.inf, "carrier detuning (magnitude fit, sign by branch)"),
        ParameterDef("fsr_hz", 0.0, math.inf, "free spectral range"),
        ParameterDef("pump_x", 0.0, 1.0, "OPO pump parameter"),
        ParameterDef("opo_linewidth_hz", 0.0, math.inf, "OPO half-width"),
        ParameterDef("escape_purity", 0.0, 1.0, "OPO escape efficiency"),
        ParameterDef("v1_a", 0.0, math.inf, "constant incident squeezed variance"),
        ParameterDef("v2_a", 0.0, math.inf, "constant incident anti-squeezed variance"),
        ParameterDef("eta_c", 0.0, 1.0, "cavity-mode detection efficiency"),
        ParameterDef("eta_m", 0.0, 1.0, "mismatched-mode detection efficiency"),
    )
}


def required_parameters(coordinates: str, squeezing_kind: str) -> Tuple[str, ...]:
    """All parameter names the forward model needs for one configuration."""
    if coordinates not in COORDINATE_SYSTEMS:
        raise FitSpecError(f"unknown coordinates {coordinates!r}; expected one of {COORDINATE_SYSTEMS}")
    if squeezing_kind not in SQUEEZING_PARAMETERS:
        raise FitSpecError(f"unknown squeezing kind {squeezing_kind!r}")
    mirror, product = REFLECTIVITY_NAMES[coordinates]
    return (
        (mirror, product, "omega_d_hz", "fsr_hz")
        + SQUEEZING_PARAMETERS[squeezing_kind]
        + ("eta_c", "eta_m")
    )


def _encode_bounded(value: float, lower: float, upper: float) -> float:
    fraction = (value - lower) / (upper - lower)
    return float(logit(min(max(fraction, _EDGE), 1.0 - _EDGE)))


def _decode_bounded(u: float, lower: float, upper: float) -> float:
    return lower + (upper - lower) * float(expit(u))


def _encode_scale(value: float, lower: float) -> float:
    return math.log(max(value - lower, _EDGE * max(abs(value), 1.0)))


def _decode_scale(u: float, lower: float) -> float:
    return lower + math.exp(u)


class ParameterTransform:
    """Maps floated parameters between external values and internal coordinates.

    Parameters
    ----------
    names : sequence of str
        Floated parameters in vector order.
    bounds : mapping
        Effective (lower, upper) per floated parameter.
    fixed : mapping
        Values of the parameters that are not floated.
    coordinates : str
        ``"amplitude"`` or ``"power"``; selects the reflectivity pair.
    """

    def __init__(
        self,
        names: Sequence[str],
        bounds: Mapping[str, Tuple[float, float]],
        fixed: Mapping[str, float],
        coordinates: str,
    ) -> None:
        self.mirror, self.product = REFLECTIVITY_NAMES[coordinates]
        self.names = list(names)
        self.bounds = dict(bounds)
        self.fixed = dict(fixed)
        # decode the input mirror before the product that it bounds
        self._order = sorted(range(len(self.names)), key=lambda i: self.names[i] == self.product)

    def _bounds_for(self, name: str, values: Mapping[str, float]) -> Tuple[float, float]:
        lower, upper = self.bounds[name]
        if name == self.product:
            upper = min(upper, values[self.mirror])
        elif name == self.mirror and self.product in self.fixed:
            lower = max(lower, self.fixed[self.product])
        return lower, upper

    def encode(self, external: Mapping[str, float]) -> np.ndarray:
        values = dict(self.fixed)
        values.update(external)
        internal = np.empty(len(self.names))
        for index in self._order:
            name = self.names[index]
            lower, upper = self._bounds_for(name, values)
            value = abs(values[name]) if name == "omega_d_hz" else values[name]
            if math.isfinite(upper):
                internal[index] = _encode_bounded(value, lower, upper)
            else:
                internal[index] = _encode_scale(value, lower)
        return internal

    def decode(self, internal: Iterable[float]) -> Dict[str, float]:
        """Floated parameters in external units (``omega_d_hz`` as a magnitude)."""
        internal = list(internal)
        values = dict(self.fixed)
        decoded: Dict[str, float] = {}
        for index in self._order:
            name = self.names[index]
            lower, upper = self._bounds_for(name, values)
            if math.isfinite(upper):
                value = _decode_bounded(internal[index], lower, upper)
            else:
                value = _decode_scale(internal[index], lower)
            values[name] = value
            decoded[name] = value
        return {name: decoded[name] for name in self.names}


def default_bounds(names: Iterable[str], overrides: Optional[Mapping[str, Tuple[float, float]]] = None) -> Dict[str, Tuple[float, float]]:
    """Registry bounds for ``names`` narrowed by any user overrides."""
    overrides = dict(overrides or {})
    bounds: Dict[str, Tuple[float, float]] = {}
    for name in names:
        definition = PARAMETERS[name]
        lower, upper = overrides.get(name, (definition.lower, definition.upper))
        lower = max(float(lower), definition.lower)
        upper = min(float(upper), definition.upper)
        if not lower < upper:
            raise FitSpecError(f"bounds for {name} are empty: ({lower!r}, {upper!r})")
        bounds[name] = (lower, upper)
    return bounds


def unknown_names(names: Iterable[str]) -> List[str]:
    return sorted(name for name in names if name not in PARAMETERS)
