"""Incident squeezed-vacuum models V1a(Ω), V2a(Ω).

V1 is the squeezed quadrature and V2 the anti-squeezed one at low
frequency.  Three kinds are supported:

``constant``
    Frequency independent variances.
``opo_lorentzian``
    Below-threshold OPO output with pump parameter x, escape efficiency
    η and half-width γ:  V1 = 1 − η·4x/((1+x)² + (Ω/γ)²),
    V2 = 1 + η·4x/((1−x)² + (Ω/γ)²).
``tabulated``
    Rows (Ω, V1, V2) interpolated linearly in Ω and held constant past the ends.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import HeisenbergViolationError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SQUEEZING_KINDS = ("constant", "opo_lorentzian", "tabulated")
#: Relative slack on V1·V2 >= 1.
HEISENBERG_TOLERANCE = 1e-12
#: Squeezing bandwidth of the source OPO, hertz.
DEFAULT_OPO_LINEWIDTH_HZ = 66.2e6


@dataclass(frozen=True)
class InputSqueezingModel:
    """Frequency-dependent incident quadrature variances.

    Use the :meth:`constant`, :meth:`opo_lorentzian` and :meth:`tabulated`
    constructors rather than filling the fields by hand.
    """

    kind: str
    v1_a: Optional[float] = None
    v2_a: Optional[float] = None
    pump_x: Optional[float] = None
    opo_linewidth_hz: float = DEFAULT_OPO_LINEWIDTH_HZ
    escape_purity: float = 1.0
    table: Optional[Tuple[Tuple[float, float, float], ...]] = None

    def __post_init__(self) -> None:
        if self.kind not in SQUEEZING_KINDS:
            raise ValueError(
                f"unknown squeezing kind {self.kind!r}; expected one of {SQUEEZING_KINDS}"
            )
        if self.kind == "constant":
            self._validate_constant()
        elif self.kind == "opo_lorentzian":
            self._validate_opo()
        else:
            self._validate_table()

    def _validate_constant(self) -> None:
        if self.v1_a is None or self.v2_a is None:
            raise ValueError("constant squeezing needs v1_a and v2_a")
        for name in ("v1_a", "v2_a"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        _check_heisenberg(np.asarray(self.v1_a), np.asarray(self.v2_a))

    def _validate_opo(self) -> None:
        if self.pump_x is None or not 0.0 <= self.pump_x < 1.0:
            raise ValueError(f"pump_x must lie in [0, 1), got {self.pump_x!r}")
        if not math.isfinite(self.opo_linewidth_hz) or self.opo_linewidth_hz <= 0.0:
            raise ValueError(
                f"opo_linewidth_hz must be positive, got {self.opo_linewidth_hz!r}"
            )
        if not 0.0 < self.escape_purity <= 1.0:
            raise ValueError(
                f"escape_purity must lie in (0, 1], got {self.escape_purity!r}"
            )

    def _validate_table(self) -> None:
        if not self.table:
            raise ValueError("tabulated squeezing needs a non-empty table")
        rows = np.asarray(self.table, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 3:
            raise ValueError("squeezing table rows must be (omega_hz, v1, v2)")
        if np.any(np.diff(rows[:, 0]) <= 0.0):
            raise ValueError("squeezing table frequencies must be strictly ascending")
        if np.any(rows[:, 1:] <= 0.0) or not np.all(np.isfinite(rows)):
            raise ValueError("squeezing table variances must be positive and finite")
        _check_heisenberg(rows[:, 1], rows[:, 2])

    @classmethod
    def constant(cls, v1_a: float, v2_a: float) -> "InputSqueezingModel":
        return cls(kind="constant", v1_a=float(v1_a), v2_a=float(v2_a))

    @classmethod
    def vacuum(cls) -> "InputSqueezingModel":
        return cls.constant(1.0, 1.0)

    @classmethod
    def opo_lorentzian(
        cls,
        pump_x: float,
        opo_linewidth_hz: float = DEFAULT_OPO_LINEWIDTH_HZ,
        escape_purity: float = 1.0,
    ) -> "InputSqueezingModel":
        return cls(
            kind="opo_lorentzian",
            pump_x=float(pump_x),
            opo_linewidth_hz=float(opo_linewidth_hz),
            escape_purity=float(escape_purity),
        )

    @classmethod
    def tabulated(cls, rows: Sequence[Sequence[float]]) -> "InputSqueezingModel":
        return cls(kind="tabulated", table=tuple(tuple(float(v) for v in row) for row in rows))

    def variances(self, freqs_hz: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        """Return (V1a, V2a) evaluated on ``freqs_hz``; sign of Ω is ignored."""
        omega = np.abs(np.asarray(freqs_hz, dtype=float))
        if self.kind == "constant":
            v1 = np.full_like(omega, self.v1_a)
            v2 = np.full_like(omega, self.v2_a)
        elif self.kind == "opo_lorentzian":
            x = self.pump_x
            detune_sq = (omega / self.opo_linewidth_hz) ** 2
            gain = self.escape_purity * 4.0 * x
            v1 = 1.0 - gain / ((1.0 + x) ** 2 + detune_sq)
            v2 = 1.0 + gain / ((1.0 - x) ** 2 + detune_sq)
        else:
            rows = np.asarray(self.table, dtype=float)
            v1 = np.interp(omega, rows[:, 0], rows[:, 1])
            v2 = np.interp(omega, rows[:, 0], rows[:, 2])
        _check_heisenberg(v1, v2)
        return v1, v2


def _check_heisenberg(v1: np.ndarray, v2: np.ndarray) -> None:
    product = np.asarray(v1) * np.asarray(v2)
    if np.any(product < 1.0 - HEISENBERG_TOLERANCE):
        worst = float(np.min(product))
        raise HeisenbergViolationError(
            f"input variances violate V1*V2 >= 1 (minimum product {worst:.6g})"
        )
