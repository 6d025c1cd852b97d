"""Ring cavity model: geometry, reflection/loss coefficients and γ, Q, finesse."""
from .ring import (
    DEFAULT_CARRIER_HZ,
    Detuning,
    Linewidth,
    RingCavity,
    finesse,
    impedance_matched_cavity,
    linewidth,
    loss_coupling,
    phase_shifts,
    quality_factor,
    reflection_coefficient,
)

__all__ = [
    "DEFAULT_CARRIER_HZ",
    "Detuning",
    "Linewidth",
    "RingCavity",
    "finesse",
    "impedance_matched_cavity",
    "linewidth",
    "loss_coupling",
    "phase_shifts",
    "quality_factor",
    "reflection_coefficient",
]
