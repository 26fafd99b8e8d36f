"""Run configuration: TOML sections mirroring the computational modules.

Every physical quantity carries its unit in the key name. Validation
collects every problem (with a dotted field path) before anything is
computed; see :func:`parse_config`.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .hfi import DEFAULT_A_ZZ, DEFAULT_ZFS_XY, MAX_PROTONS, ProtonSet
from .lineshape import LorentzianProfile
from .maser_dynamics import DEFAULT_ABS_TOL, DEFAULT_REL_TOL, TYPICAL_RATES, LVState, RateConstants
from .spectral_fit import DetectorCalibration


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class RatesSection(_Section):
    einstein_B_per_s: float = Field(TYPICAL_RATES.einstein_B, gt=0)
    gamma_s_per_s: float = Field(TYPICAL_RATES.gamma_s, gt=0)
    kappa_c_per_s: float = Field(TYPICAL_RATES.kappa_c, gt=0)

    def build(self) -> RateConstants:
        return RateConstants(self.einstein_B_per_s, self.gamma_s_per_s, self.kappa_c_per_s)


class ThresholdSection(_Section):
    #: inversions at which the steady-state map and its slope are tabulated
    N_values: list[float] = Field(default_factory=lambda: [2e11, 6e12], min_length=1)
    curve_points: int = Field(400, ge=2)

    @field_validator("N_values")
    @classmethod
    def _non_negative(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("inversions must be non-negative")
        return v


class LVSection(_Section):
    N0: float = Field(1e14, ge=0)
    n0: float = Field(1.0, ge=0)
    t_end_s: float = Field(2e-5, gt=0)
    rel_tol: float = Field(DEFAULT_REL_TOL, gt=0, le=1e-2)
    abs_tol: float = Field(DEFAULT_ABS_TOL, gt=0, le=1e-2)

    def initial(self) -> LVState:
        return LVState(self.N0, self.n0)


class LineshapeSection(_Section):
    N_max: float = Field(6e12, gt=0)
    N_max_below: float = Field(2e11, gt=0)
    center_MHz: float = 1450.0
    fwhm_MHz: float = Field(4.0, gt=0)
    n_points: int = Field(1601, ge=3)

    def profiles(self) -> tuple[LorentzianProfile, LorentzianProfile]:
        """(below, above) threshold profiles."""
        return (LorentzianProfile(self.N_max_below, self.center_MHz, self.fwhm_MHz),
                LorentzianProfile(self.N_max, self.center_MHz, self.fwhm_MHz))


class HfiSection(_Section):
    rho: Optional[list[float]] = None
    A_zz_MHz: Union[float, list[float]] = DEFAULT_A_ZZ
    E_X_minus_E_Y_MHz: float = Field(DEFAULT_ZFS_XY, gt=0)
    bandwidth_MHz: Union[Literal["auto"], float] = "auto"
    kde_points: int = Field(1000, ge=2)
    bins: int = Field(1000, ge=2)
    write_rug: bool = False

    @field_validator("rho")
    @classmethod
    def _rho_length(cls, v):
        if v is not None and len(v) > MAX_PROTONS:
            raise ValueError(f"at most {MAX_PROTONS} protons can be enumerated")
        return v

    @field_validator("bandwidth_MHz")
    @classmethod
    def _bandwidth(cls, v):
        if v != "auto" and not v > 0:
            raise ValueError("bandwidth must be positive or 'auto'")
        return v

    @model_validator(mode="after")
    def _a_matches_rho(self):
        if isinstance(self.A_zz_MHz, list) and self.rho is not None and len(self.A_zz_MHz) != len(self.rho):
            raise ValueError(f"A_zz_MHz has {len(self.A_zz_MHz)} entries but rho has {len(self.rho)}")
        return self

    def build(self) -> ProtonSet:
        if self.rho is None:
            raise ConfigError(["hfi.rho: proton spin densities rho_i are mandatory for the hfi "
                               "subcommand; list one value per coupled proton"])
        a = self.A_zz_MHz if isinstance(self.A_zz_MHz, float) else tuple(self.A_zz_MHz)
        return ProtonSet(tuple(self.rho), a, self.E_X_minus_E_Y_MHz)


class FitSection(_Section):
    model: Literal["bi_lorentzian", "split_lorentzian"] = "bi_lorentzian"
    max_iterations: int = Field(500, ge=1)
    bootstrap_resamples: int = Field(0, ge=0)


class DetectorSection(_Section):
    volts_per_dB: float = Field(0.022, gt=0)
    external_attenuation_dB: float = Field(0.0, ge=0)

    def build(self) -> DetectorCalibration:
        return DetectorCalibration(self.volts_per_dB, self.external_attenuation_dB)


class MagnetometrySection(_Section):
    #: [start, end] of the noise window in seconds; default is t < 0
    noise_window_s: Optional[tuple[float, float]] = None
    smoothing_samples: Optional[int] = Field(None, ge=1)
    delta_f_Hz: float = Field(5e8, gt=0)
    B0_T: Optional[float] = None
    #: direct inputs used when no trace / field-response data are supplied
    sigma_s_V: Optional[float] = Field(None, gt=0)
    m_s_V_per_T: Optional[float] = Field(None, gt=0)
    weighted: bool = False

    @field_validator("noise_window_s")
    @classmethod
    def _window(cls, v):
        if v is not None and not v[0] < v[1]:
            raise ValueError("noise window needs start < end")
        return v


class OutputSection(_Section):
    dir: str = "masersense-out"
    format: Literal["csv", "json"] = "csv"


class RunConfig(_Section):
    seed: int = Field(0, ge=0, lt=2**64)
    rates: RatesSection = RatesSection()
    threshold: ThresholdSection = ThresholdSection()
    lv_dynamics: LVSection = LVSection()
    lineshape: LineshapeSection = LineshapeSection()
    hfi: HfiSection = HfiSection()
    fit: FitSection = FitSection()
    detector: DetectorSection = DetectorSection()
    magnetometry: MagnetometrySection = MagnetometrySection()
    output: OutputSection = OutputSection()

    def digest(self) -> str:
        """sha256 of the canonical JSON of everything except the output location."""
        d = self.model_dump(mode="json", exclude={"output": {"dir"}})
        text = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(text.encode()).hexdigest()


def _format_loc(loc) -> str:
    return ".".join(str(p) for p in loc)


def _check_domain(cfg: RunConfig) -> list[str]:
    """Run the module constructors so their invariants apply before any work."""
    errors = []
    checks = {
        "rates": cfg.rates.build,
        "lv_dynamics": cfg.lv_dynamics.initial,
        "lineshape": cfg.lineshape.profiles,
        "detector": cfg.detector.build,
    }
    if cfg.hfi.rho is not None:
        checks["hfi"] = cfg.hfi.build
    for section, build in checks.items():
        try:
            build()
        except ValueError as exc:
            errors.append(f"{section}: {exc}")
    return errors


def validate_config(data: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a raw mapping; ``overrides`` maps dotted paths to values.

    Raises :class:`ConfigError` listing every problem found.
    """
    data = copy.deepcopy(data)
    for path, value in (overrides or {}).items():
        if value is None:
            continue
        *parents, leaf = path.split(".")
        node = data
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError([f"{p}: expected a table"])
        node[leaf] = value
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([f"{_format_loc(e['loc'])}: {e['msg']}" for e in exc.errors()]) from None
    errors = _check_domain(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read and validate a TOML run configuration.

    ``path=None`` gives the defaults (the pentacene maser rates). A TOML
    syntax error is reported with its line and column.
    """
    data = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc.strerror or exc}"], io=True) from None
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: TOML parse error: {exc}"]) from None
    return validate_config(data, overrides)


def example_config_path() -> Path:
    return Path(__file__).with_name("data") / "example.toml"
