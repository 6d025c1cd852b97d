"""Weighted least-squares fit of dual-quadrature spectra.

The optimizer runs Levenberg-Marquardt (``scipy.optimize.least_squares``
with ``method="lm"``) on unconstrained internal coordinates, once per
detuning sign.  Uncertainties come from a central-difference Jacobian of
the weighted residuals in external units at the solution:
``cov = pinv(JᵀJ) · χ²_red``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from src.cavity.ring import (
    DEFAULT_CARRIER_HZ,
    Detuning,
    RingCavity,
    finesse_derivative,
    finesse_from_amplitude,
    linewidth_derivative,
    linewidth_from_amplitude,
)
from src.errors import (
    FitConvergenceError,
    FitSpecError,
    ModelError,
    UnidentifiableParameterError,
)
from src.estimator.parameters import (
    COORDINATE_SYSTEMS,
    PARAMETERS,
    REFLECTIVITY_NAMES,
    ParameterTransform,
    default_bounds,
    required_parameters,
    unknown_names,
)
from src.quadrature.spectrum import QuadratureSpectrum, spectrum
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel
from src.synth.measurement import rbw_smooth

logger = logging.getLogger(__name__)

FTOL = 1e-10
XTOL = 1e-12
GTOL = 1e-12
#: χ² difference, relative to max(χ², 1), under which the two detuning branches count as tied.
TIE_TOLERANCE = 1e-8
#: Smallest relative singular value of the column-scaled Jacobian still treated as identifiable.
SINGULAR_TOLERANCE = 1e-7
#: Residual returned for parameter points where the model cannot be evaluated.
_PENALTY = 1e10
_STEP = 6.0555e-6  # cube root of double epsilon


@dataclass(frozen=True)
class FitSpec:
    """Which parameters float, their start values and bounds, and what data enters.

    Parameters
    ----------
    float_params : sequence of str
        Parameters adjusted by the fit, in covariance order.
    fixed_params : mapping
        Values of every other model parameter.
    initial_guess : mapping
        Start value for each floated parameter.
    bounds : mapping, optional
        (lower, upper) narrowing the registry bounds.
    masks : sequence of (lo, hi)
        Frequency intervals in hertz excluded from the residual.
    coordinates : {"amplitude", "power"}
        Whether reflectivities are fit as √R or as R.
    squeezing_kind : {"opo_lorentzian", "constant", "tabulated"}
        Input squeezing model; ``squeezing_table`` is required for tabulated.
    rbw_hz : float, optional
        When set, the model is RBW-smoothed before comparison.
    quadratures : sequence of int
        Which quadratures (1, 2) enter the residual.
    unit_weights : bool
        Allow traces without sigmas, weighting every point by one.
    """

    float_params: Tuple[str, ...]
    fixed_params: Mapping[str, float]
    initial_guess: Mapping[str, float]
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict)
    masks: Tuple[Tuple[float, float], ...] = ()
    coordinates: str = "amplitude"
    squeezing_kind: str = "opo_lorentzian"
    squeezing_table: Optional[Tuple[Tuple[float, float, float], ...]] = None
    carrier_hz: float = DEFAULT_CARRIER_HZ
    t1: Optional[float] = None
    rbw_hz: Optional[float] = None
    quadratures: Tuple[int, ...] = (1, 2)
    unit_weights: bool = False
    max_iter: int = 500
    reference_linewidth_hz: Optional[float] = None
    reference_linewidth_sigma_hz: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "float_params", tuple(self.float_params))
        object.__setattr__(self, "fixed_params", {k: float(v) for k, v in self.fixed_params.items()})
        object.__setattr__(self, "initial_guess", {k: float(v) for k, v in self.initial_guess.items()})
        object.__setattr__(self, "bounds", {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()})
        object.__setattr__(self, "masks", tuple((float(lo), float(hi)) for lo, hi in self.masks))
        object.__setattr__(self, "quadratures", tuple(sorted(set(int(q) for q in self.quadratures))))
        self._validate()

    def _validate(self) -> None:
        if self.coordinates not in COORDINATE_SYSTEMS:
            raise FitSpecError(f"coordinates must be one of {COORDINATE_SYSTEMS}, got {self.coordinates!r}")
        unknown = unknown_names(
            list(self.float_params) + list(self.fixed_params) + list(self.initial_guess) + list(self.bounds)
        )
        if unknown:
            raise FitSpecError(f"unknown parameter names: {', '.join(unknown)}")
        if len(set(self.float_params)) != len(self.float_params):
            raise FitSpecError("float_params contains duplicates")
        if not self.float_params:
            raise FitSpecError("at least one parameter must float")
        overlap = sorted(set(self.float_params) & set(self.fixed_params))
        if overlap:
            raise FitSpecError(f"parameters both floated and fixed: {', '.join(overlap)}")
        required = set(required_parameters(self.coordinates, self.squeezing_kind))
        provided = set(self.float_params) | set(self.fixed_params)
        missing = sorted(required - provided)
        if missing:
            raise FitSpecError(f"parameters neither floated nor fixed: {', '.join(missing)}")
        extra = sorted(provided - required)
        if extra:
            raise FitSpecError(
                f"parameters not used by {self.coordinates}/{self.squeezing_kind} model: {', '.join(extra)}"
            )
        if self.squeezing_kind == "tabulated" and not self.squeezing_table:
            raise FitSpecError("tabulated squeezing needs squeezing_table")
        if not self.quadratures or not set(self.quadratures) <= {1, 2}:
            raise FitSpecError(f"quadratures must be a non-empty subset of (1, 2), got {self.quadratures!r}")
        for lo, hi in self.masks:
            if not lo < hi:
                raise FitSpecError(f"mask interval ({lo!r}, {hi!r}) is empty")
        if self.rbw_hz is not None and not self.rbw_hz > 0.0:
            raise FitSpecError(f"rbw_hz must be positive, got {self.rbw_hz!r}")
        if self.max_iter < 1:
            raise FitSpecError(f"max_iter must be at least 1, got {self.max_iter!r}")
        for name, value in list(self.fixed_params.items()) + list(self.initial_guess.items()):
            if not math.isfinite(value):
                raise FitSpecError(f"{name} must be finite, got {value!r}")
        self._validate_initial_guess()

    def _validate_initial_guess(self) -> None:
        missing = sorted(set(self.float_params) - set(self.initial_guess))
        if missing:
            raise FitSpecError(f"initial_guess lacks: {', '.join(missing)}")
        bounds = self.effective_bounds()
        start = self.start_values()
        mirror, product = REFLECTIVITY_NAMES[self.coordinates]
        for name in self.float_params:
            value = abs(start[name]) if name == "omega_d_hz" else start[name]
            lower, upper = bounds[name]
            if name == product:
                upper = min(upper, start[mirror])
            if name == mirror and product in self.fixed_params:
                lower = max(lower, self.fixed_params[product])
            if not lower < value < upper and not (name == product and value == upper):
                raise FitSpecError(
                    f"initial guess {name}={start[name]!r} lies outside its bounds ({lower!r}, {upper!r})"
                )

    def effective_bounds(self) -> Dict[str, Tuple[float, float]]:
        return default_bounds(self.float_params, self.bounds)

    def start_values(self) -> Dict[str, float]:
        """Fixed values merged with the initial guess of the floated ones."""
        values = dict(self.fixed_params)
        values.update({name: self.initial_guess[name] for name in self.float_params})
        return values


class DerivedParameters(NamedTuple):
    gamma_hz: float
    gamma_sigma_hz: float
    q_factor: float
    q_sigma: float
    finesse: float
    finesse_sigma: float


@dataclass
class FitResult:
    """Outcome of :func:`fit`; ``names`` orders ``covariance`` and ``correlation``."""

    names: List[str]
    estimates: Dict[str, float]
    sigmas: Dict[str, float]
    covariance: np.ndarray
    correlation: np.ndarray
    gamma_hz: float
    gamma_sigma_hz: float
    q_factor: float
    q_sigma: float
    finesse: float
    finesse_sigma: float
    chi2: float
    chi2_reduced: float
    dof: int
    converged: bool
    nfev: int
    branch: int
    branch_chi2: Dict[int, float]
    tie: bool
    masks: Tuple[Tuple[float, float], ...]
    frequencies_hz: np.ndarray
    quadrature_labels: np.ndarray
    data: np.ndarray
    model: np.ndarray
    sigma: np.ndarray
    residuals: np.ndarray
    fixed: Dict[str, float] = field(default_factory=dict)
    linewidth_z: Optional[float] = None

    def residual_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "frequency_hz": self.frequencies_hz,
                "quadrature": self.quadrature_labels,
                "data": self.data,
                "model": self.model,
                "sigma": self.sigma,
                "weighted_residual": self.residuals,
            }
        )


def linewidth_agreement(
    gamma_hz: float,
    sigma_hz: float,
    reference_hz: float,
    reference_sigma_hz: float,
) -> float:
    """z-score between a fitted linewidth and an independent measurement."""
    combined = math.hypot(sigma_hz, reference_sigma_hz)
    if combined <= 0.0:
        raise ValueError("at least one linewidth uncertainty must be positive")
    return (gamma_hz - reference_hz) / combined


def build_model(values: Mapping[str, float], spec: FitSpec) -> Tuple[RingCavity, Detuning, InputSqueezingModel, DetectionModel]:
    """Assemble the forward model from a full parameter mapping."""
    mirror_name, product_name = REFLECTIVITY_NAMES[spec.coordinates]
    mirror = values[mirror_name]
    product = values[product_name]
    if spec.coordinates == "amplitude":
        r1_sq = mirror ** 2
        r2r3_sq = min((product / mirror) ** 2, 1.0)
    else:
        r1_sq = mirror
        r2r3_sq = min(product / mirror, 1.0)
    cavity = RingCavity(
        r1_sq=r1_sq,
        r2r3_sq=r2r3_sq,
        fsr_hz=values["fsr_hz"],
        carrier_hz=spec.carrier_hz,
        t1=spec.t1,
    )
    if spec.squeezing_kind == "opo_lorentzian":
        squeezing = InputSqueezingModel.opo_lorentzian(
            values["pump_x"], values["opo_linewidth_hz"], values["escape_purity"]
        )
    elif spec.squeezing_kind == "constant":
        squeezing = InputSqueezingModel.constant(values["v1_a"], values["v2_a"])
    else:
        squeezing = InputSqueezingModel.tabulated(spec.squeezing_table)
    detection = DetectionModel(eta_c=values["eta_c"], eta_m=values["eta_m"])
    return cavity, Detuning(values["omega_d_hz"]), squeezing, detection


def model_spectrum(values: Mapping[str, float], spec: FitSpec, freqs_hz: np.ndarray) -> QuadratureSpectrum:
    model = spectrum(*build_model(values, spec), freqs_hz)
    if spec.rbw_hz is not None:
        model = rbw_smooth(model, spec.rbw_hz)
    return model


class _FitData(NamedTuple):
    freqs_hz: np.ndarray
    keep: np.ndarray
    frequencies: np.ndarray
    labels: np.ndarray
    values: np.ndarray
    sigma: np.ndarray


def _select_data(traces: QuadratureSpectrum, spec: FitSpec) -> _FitData:
    freqs = traces.freqs_hz
    keep = np.ones(freqs.shape, dtype=bool)
    for lo, hi in spec.masks:
        keep &= ~((freqs >= lo) & (freqs <= hi))
    masked = int(np.count_nonzero(~keep))
    if masked:
        logger.warning("Masked %d of %d frequency points", masked, freqs.size)
    if not traces.has_sigmas and not spec.unit_weights:
        raise FitSpecError("trace has no sigmas; set unit_weights to fit with unit weights")

    values, sigmas, labels, frequencies = [], [], [], []
    for quadrature in spec.quadratures:
        v, sigma = traces.quadrature(quadrature)
        sigma = np.ones_like(v) if sigma is None or spec.unit_weights else sigma
        values.append(v[keep])
        sigmas.append(sigma[keep])
        labels.append(np.full(int(np.count_nonzero(keep)), quadrature))
        frequencies.append(freqs[keep])
    sigma = np.concatenate(sigmas)
    if np.any(sigma <= 0.0):
        raise FitSpecError("trace sigmas must be strictly positive")
    return _FitData(
        freqs_hz=freqs,
        keep=keep,
        frequencies=np.concatenate(frequencies),
        labels=np.concatenate(labels),
        values=np.concatenate(values),
        sigma=sigma,
    )


class _FitProblem:
    def __init__(self, spec: FitSpec, data: _FitData) -> None:
        self.spec = spec
        self.data = data
        self.transform = ParameterTransform(
            spec.float_params, spec.effective_bounds(), spec.fixed_params, spec.coordinates
        )

    def model_values(self, values: Mapping[str, float]) -> np.ndarray:
        model = model_spectrum(values, self.spec, self.data.freqs_hz)
        parts = [model.quadrature(q)[0][self.data.keep] for q in self.spec.quadratures]
        return np.concatenate(parts)

    def weighted_residuals(self, values: Mapping[str, float]) -> np.ndarray:
        try:
            model = self.model_values(values)
        except (ModelError, ValueError) as exc:
            logger.debug("Model undefined at %s: %s", values, exc)
            return np.full(self.data.values.shape, _PENALTY)
        return (model - self.data.values) / self.data.sigma

    def merged(self, floated: Mapping[str, float]) -> Dict[str, float]:
        values = dict(self.spec.fixed_params)
        values.update(floated)
        return values


class _BranchSolution(NamedTuple):
    sign: int
    values: Dict[str, float]
    chi2: float
    nfev: int
    converged: bool
    message: str


def _solve_branch(problem: _FitProblem, sign: int) -> _BranchSolution:
    spec = problem.spec
    floats_detuning = "omega_d_hz" in spec.float_params

    def to_values(internal: np.ndarray) -> Dict[str, float]:
        floated = problem.transform.decode(internal)
        if floats_detuning:
            floated["omega_d_hz"] = sign * floated["omega_d_hz"]
        return problem.merged(floated)

    start = problem.transform.encode(spec.start_values())
    result = least_squares(
        lambda u: problem.weighted_residuals(to_values(u)),
        start,
        method="lm",
        ftol=FTOL,
        xtol=XTOL,
        gtol=GTOL,
        max_nfev=spec.max_iter * (len(start) + 1),
    )
    chi2 = float(np.sum(result.fun ** 2))
    logger.debug(
        "Branch %+d: chi2=%.8g nfev=%d status=%d (%s)",
        sign, chi2, result.nfev, result.status, result.message,
    )
    return _BranchSolution(
        sign=sign,
        values=to_values(result.x),
        chi2=chi2,
        nfev=int(result.nfev),
        converged=bool(result.status > 0),
        message=str(result.message),
    )


def _choose_branch(solutions: Sequence[_BranchSolution]) -> Tuple[_BranchSolution, bool]:
    if len(solutions) == 1:
        return solutions[0], False
    candidates = [s for s in solutions if s.converged] or list(solutions)
    negative = next((s for s in candidates if s.sign < 0), None)
    best = min(candidates, key=lambda s: s.chi2)
    tie = False
    if len(candidates) == 2:
        scale = max(abs(candidates[0].chi2), abs(candidates[1].chi2), 1.0)
        tie = abs(candidates[0].chi2 - candidates[1].chi2) <= TIE_TOLERANCE * scale
    if tie and negative is not None:
        best = negative
    return best, tie


def _difference_points(x: float, step: float, lower: float, upper: float) -> Tuple[float, float]:
    """(forward, backward) evaluation points for a difference of width ``step`` inside [lower, upper].

    Central when both sides have room, otherwise one-sided toward the roomier
    side with the step shortened to the room available.
    """
    room_up = upper - x
    room_down = x - lower
    if room_up >= step and room_down >= step:
        return x + step, x - step
    if room_up >= room_down:
        return x + min(step, room_up), x
    return x, x - min(step, room_down)


def _central_jacobian(problem: _FitProblem, names: Sequence[str], values: Mapping[str, float]) -> np.ndarray:
    """Jacobian of the weighted residuals with respect to external parameter values.

    Steps stay inside the parameter bounds and keep the reflectivity product
    at or below the input mirror.
    """
    mirror, product = REFLECTIVITY_NAMES[problem.spec.coordinates]
    columns = []
    for name in names:
        x = values[name]
        definition = PARAMETERS[name]
        upper = definition.upper
        lower = -math.inf if name == "omega_d_hz" else definition.lower
        if name == product:
            upper = min(upper, values[mirror])
        elif name == mirror:
            lower = max(lower, values[product])
        ahead, behind = _difference_points(x, _STEP * max(abs(x), 1e-3), lower, upper)
        forward = dict(values)
        backward = dict(values)
        forward[name] = ahead
        backward[name] = behind
        columns.append(
            (problem.weighted_residuals(forward) - problem.weighted_residuals(backward)) / (ahead - behind)
        )
    return np.column_stack(columns)


def _check_identifiable(jacobian: np.ndarray, names: Sequence[str]) -> None:
    norms = np.linalg.norm(jacobian, axis=0)
    dead = np.flatnonzero(norms == 0.0)
    if dead.size:
        direction = [(name, 1.0 if i == dead[0] else 0.0) for i, name in enumerate(names)]
        raise UnidentifiableParameterError(
            f"residuals do not depend on {names[dead[0]]}", direction=direction
        )
    scaled = jacobian / norms
    _, singular, vt = np.linalg.svd(scaled, full_matrices=False)
    ratio = singular[-1] / singular[0]
    if ratio < SINGULAR_TOLERANCE:
        vector = vt[-1] / norms
        vector = vector / np.linalg.norm(vector)
        direction = [(name, float(component)) for name, component in zip(names, vector)]
        described = ", ".join(f"{c:+.3g}*{n}" for n, c in direction if abs(c) > 1e-3)
        raise UnidentifiableParameterError(
            f"weighted Jacobian is singular (relative singular value {ratio:.3g}); "
            f"degenerate direction: {described}",
            direction=direction,
        )


def _amplitude_product(values: Mapping[str, float], coordinates: str) -> Tuple[float, float]:
    """√(R1R2R3) and its derivative with respect to the fitted product coordinate."""
    if coordinates == "amplitude":
        return values["sqrt_r1r2r3"], 1.0
    power = values["r1r2r3"]
    root = math.sqrt(power)
    return root, 0.5 / root


def derive_parameters(
    estimates: Mapping[str, float],
    covariance: np.ndarray,
    spec: FitSpec,
) -> DerivedParameters:
    """γ, Q and finesse at ``estimates`` with first-order propagated 1σ uncertainties.

    ``covariance`` is ordered like ``spec.float_params``; parameters missing
    from ``estimates`` are taken from ``spec.fixed_params``.
    """
    values = dict(spec.fixed_params)
    values.update(estimates)
    names = list(spec.float_params)
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    if covariance.shape != (len(names), len(names)):
        raise ValueError(
            f"covariance shape {covariance.shape} does not match {len(names)} floated parameters"
        )
    s, ds_dproduct = _amplitude_product(values, spec.coordinates)
    fsr = values["fsr_hz"]
    gamma = linewidth_from_amplitude(s, fsr).exact_hz
    finesse = finesse_from_amplitude(s)
    q_factor = spec.carrier_hz / gamma

    d_gamma_ds, d_gamma_dfsr = linewidth_derivative(s, fsr)
    product_name = REFLECTIVITY_NAMES[spec.coordinates][1]
    grad_gamma = np.zeros(len(names))
    grad_finesse = np.zeros(len(names))
    for index, name in enumerate(names):
        if name == product_name:
            grad_gamma[index] = d_gamma_ds * ds_dproduct
            grad_finesse[index] = finesse_derivative(s) * ds_dproduct
        elif name == "fsr_hz":
            grad_gamma[index] = d_gamma_dfsr
    gamma_sigma = math.sqrt(max(float(grad_gamma @ covariance @ grad_gamma), 0.0))
    finesse_sigma = math.sqrt(max(float(grad_finesse @ covariance @ grad_finesse), 0.0))
    q_sigma = q_factor / gamma * gamma_sigma
    return DerivedParameters(
        gamma_hz=gamma,
        gamma_sigma_hz=gamma_sigma,
        q_factor=q_factor,
        q_sigma=q_sigma,
        finesse=finesse,
        finesse_sigma=finesse_sigma,
    )


def fit(traces: QuadratureSpectrum, spec: FitSpec) -> FitResult:
    """Fit ``traces`` with the model described by ``spec``.

    Raises
    ------
    FitSpecError
        Inconsistent spec, missing sigmas or too few points.
    UnidentifiableParameterError
        The data carry no information on some parameter combination.
    FitConvergenceError
        No detuning branch met the convergence tolerances.
    """
    data = _select_data(traces, spec)
    names = list(spec.float_params)
    if data.values.size < 2 * len(names):
        raise FitSpecError(
            f"{data.values.size} residual points cannot constrain {len(names)} parameters "
            "(need at least twice as many)"
        )
    if np.all(data.values == 1.0):
        raise UnidentifiableParameterError(
            "trace is exactly vacuum; it carries no cavity information",
            direction=[(name, 1.0 / math.sqrt(len(names))) for name in names],
        )

    problem = _FitProblem(spec, data)
    if "omega_d_hz" in spec.float_params:
        signs = (-1, 1)
    else:
        signs = (-1 if spec.fixed_params["omega_d_hz"] <= 0.0 else 1,)
    solutions = [_solve_branch(problem, sign) for sign in signs]
    best, tie = _choose_branch(solutions)
    if tie:
        logger.info("Detuning branches tie (chi2=%.8g); keeping negative detuning", best.chi2)

    jacobian = _central_jacobian(problem, names, best.values)
    _check_identifiable(jacobian, names)
    if not best.converged:
        raise FitConvergenceError(
            f"least-squares did not converge after {best.nfev} evaluations: {best.message}",
            n_evaluations=best.nfev,
        )

    residuals = problem.weighted_residuals(best.values)
    chi2 = float(np.sum(residuals ** 2))
    dof = int(residuals.size - len(names))
    chi2_reduced = chi2 / dof
    covariance = np.linalg.pinv(jacobian.T @ jacobian) * chi2_reduced
    covariance = 0.5 * (covariance + covariance.T)
    sigmas = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    with np.errstate(invalid="ignore", divide="ignore"):
        correlation = covariance / np.outer(sigmas, sigmas)
    correlation = np.where(np.isfinite(correlation), correlation, 0.0)
    np.fill_diagonal(correlation, 1.0)

    estimates = {name: float(best.values[name]) for name in names}
    derived = derive_parameters(estimates, covariance, spec)
    linewidth_z = None
    if spec.reference_linewidth_hz is not None:
        linewidth_z = linewidth_agreement(
            derived.gamma_hz,
            derived.gamma_sigma_hz,
            spec.reference_linewidth_hz,
            spec.reference_linewidth_sigma_hz or 0.0,
        )

    logger.info(
        "Fit finished: chi2_red=%.4g dof=%d branch=%+d gamma=%.6g +/- %.3g Hz",
        chi2_reduced, dof, best.sign, derived.gamma_hz, derived.gamma_sigma_hz,
    )
    return FitResult(
        names=names,
        estimates=estimates,
        sigmas={name: float(sigma) for name, sigma in zip(names, sigmas)},
        covariance=covariance,
        correlation=correlation,
        gamma_hz=derived.gamma_hz,
        gamma_sigma_hz=derived.gamma_sigma_hz,
        q_factor=derived.q_factor,
        q_sigma=derived.q_sigma,
        finesse=derived.finesse,
        finesse_sigma=derived.finesse_sigma,
        chi2=chi2,
        chi2_reduced=chi2_reduced,
        dof=dof,
        converged=best.converged,
        nfev=sum(s.nfev for s in solutions),
        branch=best.sign,
        branch_chi2={s.sign: s.chi2 for s in solutions},
        tie=tie,
        masks=spec.masks,
        frequencies_hz=data.frequencies,
        quadrature_labels=data.labels,
        data=data.values,
        model=data.values + residuals * data.sigma,
        sigma=data.sigma,
        residuals=residuals,
        fixed=dict(spec.fixed_params),
        linewidth_z=linewidth_z,
    )
