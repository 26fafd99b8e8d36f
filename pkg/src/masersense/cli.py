"""Command-line pipeline: ``masersense <subcommand> [--config run.toml] [--out DIR]``.

Each run goes through four stages, and each stage has its own exit code
on failure:

1. validate the config (exit 2)
2. load the inputs (exit 4)
3. compute everything in memory (exit 3)
4. write the artifacts atomically, plus ``run_summary.json`` (exit 4)

A failed run writes nothing to the output directory and prints an error
JSON on stderr.
"""

from __future__ import annotations

import argparse
import platform
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import dataio, hfi, lineshape, magnetometry, maser_dynamics, spectral_fit
from .config import RunConfig, parse_config
from .errors import ConfigError, FitError, InputError, MaserSenseError
from .spectrum import Spectrum, ValueKind

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_COMPUTATION = 3
EXIT_IO = 4

SUBCOMMANDS = ("threshold", "lv-dynamics", "lineshape-sim", "hfi", "fit", "sensitivity", "report")

#: evaluation points for widths measured on a fitted model curve
FIT_CURVE_POINTS = 20001


@dataclass
class Inputs:
    """Input data for one run, with the checksum of every file read."""

    spectrum: Spectrum | None = None
    background: Spectrum | None = None
    trace: object | None = None
    field_response: object | None = None
    checksums: dict[str, str] = field(default_factory=dict)


@dataclass
class Outcome:
    """Summary document plus tabular outputs, all held in memory until written."""

    name: str
    summary: dict
    tables: dict[str, tuple[dict, dict]] = field(default_factory=dict)

    def table(self, name: str, columns: dict, meta: dict | None = None) -> None:
        self.tables[name] = (columns, meta or {})


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


# -- subcommands ----------------------------------------------------------

def run_threshold(cfg: RunConfig, inputs: Inputs) -> Outcome:
    rates = cfg.rates.build()
    N_th = maser_dynamics.threshold_inversion(rates)
    limit = N_th * (1.0 - maser_dynamics.THRESHOLD_GUARD)
    points = []
    for N in cfg.threshold.N_values:
        below = N < limit
        points.append({
            "inverted_spins": N,
            "below_threshold": below,
            "photons": maser_dynamics.steady_state_photons(rates, N) if below else None,
            "slope": maser_dynamics.steady_state_slope(rates, N) if below else None,
        })
    slopes = [p["slope"] for p in points if p["slope"] is not None]
    summary = {
        "rates": {"einstein_B_per_s": rates.einstein_B, "gamma_s_per_s": rates.gamma_s,
                  "kappa_c_per_s": rates.kappa_c},
        "threshold_inversion": N_th,
        "steady_state": points,
        "slope_ratio_last_to_first": slopes[-1] / slopes[0] if len(slopes) > 1 else None,
    }
    out = Outcome("threshold", summary)
    # plot-ready curve up to 99% of threshold, where the map is still finite
    N = np.linspace(0.0, 0.99 * N_th, cfg.threshold.curve_points)
    out.table("threshold_curve", {
        "inverted_spins": N,
        "photons": maser_dynamics.steady_state_photons(rates, N),
        "slope": maser_dynamics.steady_state_slope(rates, N),
    })
    return out


def run_lv_dynamics(cfg: RunConfig, inputs: Inputs) -> Outcome:
    rates = cfg.rates.build()
    lv = cfg.lv_dynamics
    traj = maser_dynamics.integrate_lv(rates, lv.initial(), lv.t_end_s, lv.rel_tol, lv.abs_tol)
    t_pk, n_pk = maser_dynamics.peak_photons(traj) if len(traj) >= 3 else (float(traj.times[0]), lv.n0)
    final = traj.final
    summary = {
        "initial": {"inverted_spins": lv.N0, "photons": lv.n0},
        "t_end_s": lv.t_end_s,
        "accepted_steps": len(traj) - 1,
        "final": {"inverted_spins": final.inverted_spins, "photons": final.photons},
        "peak_photons": n_pk,
        "peak_time_s": t_pk,
        "transient_gain_possible": lv.N0 * rates.einstein_B > rates.kappa_c,
    }
    out = Outcome("lv_dynamics", summary)
    out.table("lv_trajectory", {"time_s": traj.times, "inverted_spins": traj.inverted_spins,
                                "photons": traj.photons})
    return out


def run_lineshape_sim(cfg: RunConfig, inputs: Inputs) -> Outcome:
    rates = cfg.rates.build()
    below, above = cfg.lineshape.profiles()
    grid = lineshape.default_grid(above, cfg.lineshape.n_points)
    spec_in = lineshape.sample_profile(above, grid)
    spec_out = lineshape.map_to_photons(spec_in, rates)
    report = lineshape.narrowing_report(below, above, rates, grid)
    summary = {
        "profile": {"N_max": above.N_max, "N_max_below": below.N_max,
                    "center_MHz": above.center, "fwhm_MHz": above.fwhm},
        "grid": {"points": len(grid), "step_MHz": float(grid[1] - grid[0]),
                 "start_MHz": float(grid[0]), "stop_MHz": float(grid[-1])},
        "narrowing": report.to_dict(),
        "closed_form_fwhm_MHz": lineshape.closed_form_fwhm(above, rates),
        "closed_form_fwhm_below_MHz": lineshape.closed_form_fwhm(below, rates),
    }
    out = Outcome("lineshape", summary)
    out.table("lineshape_in", {"frequency_MHz": spec_in.frequencies, "value": spec_in.values},
              {"value_kind": spec_in.value_kind.value})
    out.table("lineshape_out", {"frequency_MHz": spec_out.frequencies, "value": spec_out.values},
              {"value_kind": spec_out.value_kind.value})
    return out


def run_hfi(cfg: RunConfig, inputs: Inputs) -> Outcome:
    protons = cfg.hfi.build()
    dist = hfi.enumerate_shifts(protons)
    bandwidth = cfg.hfi.bandwidth_MHz
    curve = hfi.kde(dist, bandwidth, cfg.hfi.kde_points)
    hist = hfi.histogram(dist, cfg.hfi.bins)
    summary = {
        "n_protons": protons.n_protons,
        "n_configurations": len(dist),
        "max_shift_MHz": float(dist.shifts.max()),
        "max_shift_bound_MHz": hfi.max_shift_bound(protons),
        "mean_shift_MHz": float(dist.shifts.mean()),
        "kde_bandwidth_MHz": curve.bandwidth,
        "kde_integral": curve.integral(),
    }
    out = Outcome("hfi", summary)
    out.table("hfi_kde", {"shift_MHz": curve.grid, "density_per_MHz": curve.density})
    out.table("hfi_histogram", {"shift_MHz": hist.frequencies, "count": hist.values},
              {"value_kind": hist.value_kind.value})
    if cfg.hfi.write_rug:
        out.table("hfi_rug", {"shift_MHz": dist.shifts})
    return out


def _linear(spectrum: Spectrum, cfg: RunConfig) -> Spectrum:
    if spectrum.value_kind is ValueKind.LOG_AMPLITUDE_DB:
        return spectral_fit.log_to_linear(spectrum, cfg.detector.build())
    return spectrum


def _fit_section(cfg: RunConfig, spectrum: Spectrum, background: Spectrum | None):
    spec = _linear(spectrum, cfg)
    clipped = None
    if background is not None:
        spec, clipped = spectral_fit.subtract_background(spec, _linear(background, cfg))
    fit = spectral_fit.fit_bilorentzian(spec, model=cfg.fit.model, max_iterations=cfg.fit.max_iterations)
    if not fit.converged:
        raise FitError(f"fit did not converge: {fit.message}")
    f = spec.frequencies
    widths = spectral_fit.extract_linewidths(fit, np.linspace(f[0], f[-1], FIT_CURVE_POINTS))
    boot = None
    if cfg.fit.bootstrap_resamples:
        boot = spectral_fit.bootstrap_stderr(spec, fit, cfg.fit.bootstrap_resamples, cfg.seed)
    summary = {
        "fit": fit.to_dict(),
        "linewidths_MHz": widths.to_dict(),
        "bootstrap_stderr": boot,
        "background_points_clipped": clipped,
    }
    columns = {"frequency_MHz": f, "data": spec.values, "model": fit.model.values(f)}
    return summary, columns


def run_fit(cfg: RunConfig, inputs: Inputs) -> Outcome:
    summary, columns = _fit_section(cfg, inputs.spectrum, inputs.background)
    out = Outcome("fit", summary)
    out.table("fit_curve", columns)
    return out


def _sensitivity_section(cfg: RunConfig, inputs: Inputs):
    mag = cfg.magnetometry
    summary: dict = {}
    columns = None
    if inputs.trace is not None:
        window = tuple(mag.noise_window_s) if mag.noise_window_s else None
        sigma = magnetometry.noise_sigma(inputs.trace, window)
        summary["trace"] = {
            "noise_sigma_V": sigma,
            "peak_amplitude_V": magnetometry.peak_amplitude(inputs.trace, mag.smoothing_samples),
            "snr_dB": magnetometry.snr_db(inputs.trace, window, mag.smoothing_samples) if sigma > 0 else None,
        }
    else:
        sigma = mag.sigma_s_V

    B0 = mag.B0_T
    if B0 is None and inputs.trace is not None:
        B0 = inputs.trace.B0_T
    if inputs.field_response is not None:
        ffit = magnetometry.fit_field_response(inputs.field_response, weighted=mag.weighted)
        if not ffit.converged:
            raise FitError(f"field-response fit did not converge: {ffit.message}")
        slope = magnetometry.slope_at(ffit.model, B0)
        m_s = abs(slope)
        summary["field_fit"] = {**ffit.to_dict(), "slope_V_per_T": slope}
        B = inputs.field_response.fields
        columns = {"field_T": B, "amplitude_V": inputs.field_response.amplitudes, "model_V": ffit.model(B)}
    else:
        m_s = mag.m_s_V_per_T

    report = magnetometry.sensitivity_report(sigma, m_s, mag.delta_f_Hz, B0)
    summary["sensitivity"] = report.to_dict()
    return summary, columns


def run_sensitivity(cfg: RunConfig, inputs: Inputs) -> Outcome:
    summary, columns = _sensitivity_section(cfg, inputs)
    out = Outcome("sensitivity", summary)
    if columns is not None:
        out.table("field_response_fit", columns)
    return out


def run_report(cfg: RunConfig, inputs: Inputs) -> Outcome:
    summary = {"fit": None, "sensitivity": None}
    out = Outcome("report", summary)
    if inputs.spectrum is not None:
        summary["fit"], columns = _fit_section(cfg, inputs.spectrum, inputs.background)
        out.table("fit_curve", columns)
    if _sensitivity_ready(cfg, inputs):
        summary["sensitivity"], columns = _sensitivity_section(cfg, inputs)
        if columns is not None:
            out.table("field_response_fit", columns)
    return out


RUNNERS = {
    "threshold": run_threshold,
    "lv-dynamics": run_lv_dynamics,
    "lineshape-sim": run_lineshape_sim,
    "hfi": run_hfi,
    "fit": run_fit,
    "sensitivity": run_sensitivity,
    "report": run_report,
}


# -- stages -----------------------------------------------------------------

def _load_inputs(args) -> Inputs:
    inputs = Inputs()
    sources = {}
    if getattr(args, "manifest", None):
        manifest = dataio.load_manifest(args.manifest)
        inputs.checksums[str(Path(args.manifest))] = dataio.sha256_file(args.manifest)
        inputs.checksums.update(manifest.checksums())
        sources = {e.role: e.path for e in manifest.entries}
    for role in dataio.ROLES:
        path = getattr(args, role.replace("-", "_"), None)
        if path:
            sources[role] = Path(path)
    for role, path in sources.items():
        setattr(inputs, role.replace("-", "_"), dataio.LOADERS[role](path))
        inputs.checksums.setdefault(str(path), dataio.sha256_file(path))
    return inputs


def _sensitivity_ready(cfg: RunConfig, inputs: Inputs) -> bool:
    return not _sensitivity_problems(cfg, inputs)


def _sensitivity_problems(cfg: RunConfig, inputs: Inputs) -> list[str]:
    mag = cfg.magnetometry
    problems = []
    if inputs.trace is None and mag.sigma_s_V is None:
        problems.append("magnetometry.sigma_s_V: give a noise sigma or a --trace to measure it from")
    if inputs.field_response is None and mag.m_s_V_per_T is None:
        problems.append("magnetometry.m_s_V_per_T: give a slope or a --field-response to fit it from")
    if inputs.field_response is not None and mag.B0_T is None and (inputs.trace is None or inputs.trace.B0_T is None):
        problems.append("magnetometry.B0_T: the operating field is needed to evaluate the fitted slope")
    return problems


def _requirements(subcommand: str, cfg: RunConfig, inputs: Inputs) -> list[str]:
    """Subcommand-specific checks that need both the config and the inputs."""
    if subcommand == "hfi" and cfg.hfi.rho is None:
        return ["hfi.rho: proton spin densities rho_i are mandatory for the hfi subcommand; "
                "list one value per coupled proton"]
    if subcommand == "fit" and inputs.spectrum is None:
        return ["fit needs a spectrum: pass --spectrum PATH"]
    if subcommand == "sensitivity":
        return _sensitivity_problems(cfg, inputs)
    if subcommand == "report" and inputs.spectrum is None and not _sensitivity_ready(cfg, inputs):
        return ["report needs a spectrum or complete sensitivity inputs in the manifest"]
    return []


def _render(outcome: Outcome, fmt: str) -> dict[str, str]:
    files = {}
    for name, (columns, meta) in outcome.tables.items():
        if fmt == "csv":
            files[f"{name}.csv"] = dataio.table_csv(columns, meta)
        else:
            doc = {"meta": meta, "columns": {k: np.asarray(v, dtype=float) for k, v in columns.items()}}
            files[f"{name}.json"] = dataio.dumps_json(doc)
    files[f"{outcome.name}.json"] = dataio.dumps_json(outcome.summary)
    return files


def _run_summary(subcommand: str, cfg: RunConfig, inputs: Inputs, files: dict[str, str]) -> str:
    doc = {
        "subcommand": subcommand,
        "status": "ok",
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "inputs": inputs.checksums,
        "artifacts": {name: dataio.sha256_bytes(text) for name, text in sorted(files.items())},
        "versions": {
            "masersense": _version("masersense"),
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    return dataio.dumps_json(doc)


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        dataio.atomic_write(out_dir / name, text)


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration (default: built-in defaults)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, metavar="U64", help="random seed (overrides seed)")
    common.add_argument("--format", choices=("csv", "json"), help="format of tabular outputs")
    common.add_argument("--n-max", type=float, dest="n_max", help="override lineshape.N_max")
    common.add_argument("--fwhm-mhz", type=float, dest="fwhm_mhz", help="override lineshape.fwhm_MHz")
    common.add_argument("--bandwidth-hz", type=float, dest="bandwidth_hz",
                        help="override magnetometry.delta_f_Hz")

    parser = argparse.ArgumentParser(prog="masersense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version('masersense')}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {
        "threshold": "masing threshold and the steady-state photon map",
        "lv-dynamics": "integrate the maser rate equations from an initial state",
        "lineshape-sim": "map an inhomogeneous line through the photon map; narrowing report",
        "hfi": "second-order hyperfine shift distribution (KDE and histogram)",
        "fit": "bi-Lorentzian fit of a measured spectrum",
        "sensitivity": "noise, field-response slope and magnetic sensitivity",
        "report": "fit + sensitivity over the files listed in a manifest",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name in ("fit", "report"):
            p.add_argument("--spectrum", metavar="CSV")
            p.add_argument("--background", metavar="CSV")
        if name in ("sensitivity", "report"):
            p.add_argument("--trace", metavar="CSV")
            p.add_argument("--field-response", dest="field_response", metavar="CSV")
        if name == "report":
            p.add_argument("--manifest", metavar="TOML", required=True)
    return parser


def _error(code: int, kind: str, messages: list[str]) -> int:
    doc = {"status": "error", "exit_code": code, "error_type": kind, "errors": messages}
    sys.stderr.write(dataio.dumps_json(doc))
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "output.dir": args.out,
        "output.format": args.format,
        "lineshape.N_max": args.n_max,
        "lineshape.fwhm_MHz": args.fwhm_mhz,
        "magnetometry.delta_f_Hz": args.bandwidth_hz,
    }
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        return _error(EXIT_IO if exc.io else EXIT_VALIDATION, "config", exc.errors)

    try:
        inputs = _load_inputs(args)
    except (InputError, OSError) as exc:
        return _error(EXIT_IO, "input", [str(exc)])

    problems = _requirements(args.subcommand, cfg, inputs)
    if problems:
        return _error(EXIT_VALIDATION, "config", problems)

    try:
        outcome = RUNNERS[args.subcommand](cfg, inputs)
        files = _render(outcome, cfg.output.format)
    except ConfigError as exc:
        return _error(EXIT_VALIDATION, "config", exc.errors)
    except (MaserSenseError, ValueError, ArithmeticError) as exc:
        return _error(EXIT_COMPUTATION, type(exc).__name__, [str(exc)])

    files["run_summary.json"] = _run_summary(args.subcommand, cfg, inputs, files)
    out_dir = Path(cfg.output.dir)
    try:
        write_outputs(out_dir, files)
    except OSError as exc:
        return _error(EXIT_IO, "output", [f"{out_dir}: {exc.strerror or exc}"])
    sys.stdout.write(dataio.dumps_json({"status": "ok", "out": str(out_dir), "artifacts": sorted(files)}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
