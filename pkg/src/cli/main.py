"""Command line entry point: ``python -m src.cli <subcommand>``.

Subcommands
-----------
simulate   synthesize a noisy trace and the noiseless model curve
fit        fit a trace and write the report and residuals
contrast   signal contrast of squeezed vs classical probing
sweep      derived γ/Q/F and spectrum summaries over one parameter
validate   check a configuration file

Exit codes: 0 success, 2 configuration or usage error, 3 fit failure,
4 I/O or trace format error.
Every subcommand echoes the resolved configuration on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.cavity.ring import finesse, impedance_matched_cavity, linewidth, quality_factor
from src.config.load_config import RunConfig, load_run_config
from src.config.logging_config import setup_logging
from src.errors import (
    ConfigError,
    FitError,
    FitSpecError,
    ModelError,
    TraceFormatError,
)
from src.estimator.fit import fit
from src.formats.reports import (
    TABLE_FORMATS,
    dumps_report,
    fit_report,
    table_text,
    write_report,
    write_table,
)
from src.formats.traces import load_trace, save_trace
from src.quadrature.contrast import (
    contrast_curves,
    impedance_matched_variance,
    signal_contrast,
    squeeze_factor_from_db,
    squeezed_photon_number,
)
from src.quadrature.spectrum import feature_center, from_db, spectrum, to_db, uncoupled_variances
from src.synth.measurement import synthesize_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_IO = 4

#: (v1_db, v2_db) of the incident field for each contrast preset.
CONTRAST_PRESETS: Dict[str, Tuple[float, float]] = {
    "classical": (0.0, 10.0),
    "squeezed": (-6.0, 10.0),
    "vacuum": (0.0, 0.0),
}

#: Sweepable names and the configuration block they live in.
SWEEP_PARAMETERS: Dict[str, str] = {
    "sqrt_r1": "cavity",
    "sqrt_r1r2r3": "cavity",
    "fsr_hz": "cavity",
    "carrier_hz": "cavity",
    "omega_d_hz": "detuning",
    "pump_x": "squeezing",
    "opo_linewidth_hz": "squeezing",
    "escape_purity": "squeezing",
    "eta_c": "detection",
}


class UsageError(ConfigError):
    """Command line arguments are inconsistent."""
    pass


def _derived_summary(config: RunConfig) -> Dict[str, float]:
    cavity = config.cavity.to_cavity()
    width = linewidth(cavity)
    return {
        "gamma_hz": width.exact_hz,
        "gamma_approx_hz": width.approx_hz,
        "q_factor": quality_factor(cavity),
        "finesse": finesse(cavity),
    }


def _load_config(args: argparse.Namespace) -> RunConfig:
    """Load the run configuration and echo it, defaults filled in, on stderr."""
    config = load_run_config(args.config)
    print(f"# resolved configuration: {json.dumps(config.resolved(), sort_keys=True)}", file=sys.stderr)
    return config


def _output_dir(args: argparse.Namespace, config: Optional[RunConfig]) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(config.output.dir if config is not None else "out")


def _model_frame(freqs: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(
        {"frequency_hz": freqs, "v1": v1, "v2": v2, "v1_db": to_db(v1), "v2_db": to_db(v2)}
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    cavity = config.cavity.to_cavity()
    detuning = config.detuning.to_detuning()
    squeezing = config.squeezing.to_model()
    detection = config.detection.to_detection()
    measurement = config.measurement.to_measurement(seed=args.seed)
    freqs = config.measurement.grid.frequencies()

    trace = synthesize_trace(cavity, detuning, squeezing, detection, measurement, freqs)
    model = spectrum(cavity, detuning, squeezing, detection, freqs)

    out = _output_dir(args, config)
    header = {
        "quadrature_1": "squeezed",
        "quadrature_2": "anti-squeezed",
        "reference": "dB relative to shot noise",
        "rbw_hz": measurement.rbw_hz,
        "n_averages": measurement.n_averages,
        "seed": measurement.seed,
    }
    save_trace(out / "trace.csv", trace, header)
    write_table(out / f"model.{args.format}", _model_frame(model.freqs_hz, model.v1, model.v2), args.format)

    summary = _derived_summary(config)
    print(f"gamma = {summary['gamma_hz'] / 1e3:.2f} kHz (high-Q form {summary['gamma_approx_hz'] / 1e3:.2f} kHz)")
    print(f"Q = {summary['q_factor']:.4g}")
    print(f"finesse = {summary['finesse']:.1f}")
    return EXIT_OK


def _parse_mask(text: str) -> Tuple[float, float]:
    try:
        lo_text, hi_text = text.split(":")
        lo, hi = float(lo_text), float(hi_text)
    except ValueError as exc:
        raise UsageError(f"mask {text!r} must look like LO:HI in hertz") from exc
    if not lo < hi:
        raise UsageError(f"mask {text!r} is empty")
    return lo, hi


def _parse_quadratures(text: Optional[str]) -> Optional[Tuple[int, ...]]:
    if text is None:
        return None
    return {"1": (1,), "2": (2,), "both": (1, 2)}[text]


def cmd_fit(args: argparse.Namespace) -> int:
    config = _load_config(args)
    masks = [_parse_mask(text) for text in args.mask or []]
    spec = config.fit_spec(extra_masks=masks, quadratures=_parse_quadratures(args.quadrature))
    trace = load_trace(args.trace)
    result = fit(trace, spec)

    out = _output_dir(args, config)
    report = fit_report(result, source=Path(args.trace).name)
    write_report(out / "fit_report.json", report)
    write_table(out / f"residuals.{args.format}", result.residual_frame(), args.format)
    sys.stdout.write(dumps_report(report))
    return EXIT_OK


def _contrast_row(label: str, v1_db: float, v2_db: float) -> Dict[str, Any]:
    v1_a = from_db(v1_db)
    v2_a = from_db(v2_db)
    s1, s2 = signal_contrast(v1_a, v2_a)
    v_b = impedance_matched_variance(v1_a, v2_a)
    photons = squeezed_photon_number(squeeze_factor_from_db(v1_db)) if v1_db <= 0.0 else math.nan
    return {
        "case": label,
        "v1_a_db": v1_db,
        "v2_a_db": v2_db,
        "s1": s1,
        "s2": s2,
        "v_b": v_b,
        "v_b_db": to_db(v_b),
        "pure_state_photon_number": photons,
    }


def cmd_contrast(args: argparse.Namespace) -> int:
    if (args.v1_db is None) != (args.v2_db is None):
        raise UsageError("--v1-db and --v2-db must be given together")
    config = _load_config(args)
    if args.v1_db is not None:
        cases = [("custom", args.v1_db, args.v2_db)]
    elif args.preset:
        cases = [(args.preset, *CONTRAST_PRESETS[args.preset])]
    else:
        cases = [(name, *levels) for name, levels in CONTRAST_PRESETS.items()]
    try:
        frame = pd.DataFrame([_contrast_row(*case) for case in cases])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    if args.format == "json":
        sys.stdout.write(table_text(frame, "json"))
    else:
        sys.stdout.write(frame.to_string(index=False) + "\n")

    out = _output_dir(args, config) if (args.out or args.curve) else None
    if out is not None:
        write_table(out / f"contrast.{args.format}", frame, args.format)
    if args.curve:
        matched = impedance_matched_cavity(
            config.cavity.sqrt_r1 ** 2, config.cavity.fsr_hz, config.cavity.carrier_hz
        )
        _, v1_db, v2_db = cases[0]
        curves = contrast_curves(
            from_db(v1_db), from_db(v2_db), matched,
            config.detuning.to_detuning(), config.measurement.grid.frequencies(),
        )
        write_table(out / f"contrast_curve.{args.format}", _model_frame(curves.freqs_hz, curves.v1, curves.v2), args.format)
    return EXIT_OK


def _with_value(config: RunConfig, name: str, value: float) -> RunConfig:
    data = config.resolved()
    block = SWEEP_PARAMETERS[name]
    if name == "eta_c":
        data["detection"] = {"eta_c": value, "eta_m": config.detection.to_detection().eta_m}
    else:
        data[block][name] = value
    return RunConfig.from_mapping(data)


def _sweep_row(config: RunConfig, name: str, value: float) -> Dict[str, Any]:
    row: Dict[str, Any] = {"value": value}
    try:
        row.update(_derived_summary(config))
    except ModelError as exc:
        logger.warning("No linewidth at %s=%.8g: %s", name, value, exc)
        row.update(gamma_hz=math.nan, gamma_approx_hz=math.nan, q_factor=math.nan, finesse=math.nan)
    cavity = config.cavity.to_cavity()
    squeezing = config.squeezing.to_model()
    detection = config.detection.to_detection()
    freqs = config.measurement.grid.frequencies()
    model = spectrum(cavity, config.detuning.to_detuning(), squeezing, detection, freqs)
    baseline, _ = uncoupled_variances(cavity, squeezing, detection, freqs)
    row.update(
        feature_center_hz=feature_center(model, baseline),
        v1_min_db=float(np.min(to_db(model.v1))),
        v1_max_db=float(np.max(to_db(model.v1))),
        v2_min_db=float(np.min(to_db(model.v2))),
        v2_max_db=float(np.max(to_db(model.v2))),
    )
    return row


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.param not in SWEEP_PARAMETERS:
        raise UsageError(
            f"cannot sweep {args.param!r}; choose one of {', '.join(sorted(SWEEP_PARAMETERS))}"
        )
    if args.num < 1 or (args.num > 1 and args.start == args.stop):
        raise UsageError("sweep range is empty")
    config = _load_config(args)
    values = np.linspace(args.start, args.stop, args.num)
    rows: List[Dict[str, Any]] = []
    for value in values:
        swept = _with_value(config, args.param, float(value))
        rows.append(_sweep_row(swept, args.param, float(value)))
    frame = pd.DataFrame(rows)
    out = _output_dir(args, config)
    write_table(out / f"sweep_{args.param}.{args.format}", frame, args.format)
    sys.stdout.write(frame.to_string(index=False) + "\n")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    summary = _derived_summary(config)
    print(f"{args.config or 'default configuration'}: OK")
    print(json.dumps({"resolved": config.resolved(), "derived": summary}, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.cli",
        description="Squeezed-vacuum cavity probing: simulate, fit and analyse quadrature spectra.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out: bool = True, fmt: bool = True) -> None:
        p.add_argument("--config", default=None, help="run configuration YAML (default: $SQZCAV_CONFIG or src/config/run_config.yaml)")
        if out:
            p.add_argument("--out", default=None, help="output directory (default: output.dir)")
        if fmt:
            p.add_argument("--format", choices=TABLE_FORMATS, default="csv", help="tabular output format")

    simulate = sub.add_parser("simulate", help="synthesize a noisy trace and the model curve")
    common(simulate)
    simulate.add_argument("--seed", type=int, default=None, help="noise seed (overrides measurement.seed)")
    simulate.set_defaults(handler=cmd_simulate)

    fit_parser = sub.add_parser("fit", help="fit a trace file")
    fit_parser.add_argument("trace", help="trace CSV file")
    common(fit_parser)
    fit_parser.add_argument("--mask", action="append", metavar="LO:HI", help="exclude LO..HI hertz (repeatable)")
    fit_parser.add_argument("--quadrature", choices=("1", "2", "both"), default=None, help="quadratures entering the fit")
    fit_parser.set_defaults(handler=cmd_fit)

    contrast = sub.add_parser("contrast", help="signal contrast table")
    common(contrast)
    contrast.add_argument("--preset", choices=sorted(CONTRAST_PRESETS), default=None)
    contrast.add_argument("--v1-db", type=float, default=None, help="incident squeezed quadrature, dB")
    contrast.add_argument("--v2-db", type=float, default=None, help="incident anti-squeezed quadrature, dB")
    contrast.add_argument("--curve", action="store_true", help="also write reflected spectra off an impedance-matched cavity")
    contrast.set_defaults(handler=cmd_contrast)

    sweep = sub.add_parser("sweep", help="sweep one model parameter")
    common(sweep)
    sweep.add_argument("--param", required=True, help="parameter name")
    sweep.add_argument("--start", type=float, required=True)
    sweep.add_argument("--stop", type=float, required=True)
    sweep.add_argument("--num", type=int, default=11)
    sweep.set_defaults(handler=cmd_sweep)

    validate = sub.add_parser("validate", help="validate a configuration file")
    common(validate, out=False, fmt=False)
    validate.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging("DEBUG" if args.verbose else "WARNING" if args.quiet else None)
    try:
        return args.handler(args)
    except (ConfigError, FitSpecError, ModelError) as exc:
        logger.error("Configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        logger.error("Fit failed: %s", exc)
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (TraceFormatError, OSError) as exc:
        logger.error("I/O error: %s", exc)
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
