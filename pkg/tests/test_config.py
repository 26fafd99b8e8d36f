import sys

import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from masersense.config import RunConfig, example_config_path, parse_config, validate_config
from masersense.errors import ConfigError
from masersense.maser_dynamics import TYPICAL_RATES


def example_data() -> dict:
    return tomllib.loads(example_config_path().read_text())


def test_example_config_has_typical_rates():
    cfg = parse_config(example_config_path())
    assert cfg.rates.build() == TYPICAL_RATES
    assert (cfg.rates.einstein_B_per_s, cfg.rates.gamma_s_per_s, cfg.rates.kappa_c_per_s) == (1.1e-7, 4e4, 2.1e6)
    assert len(cfg.hfi.build().rho) == 14


def test_defaults_equal_example_rates():
    assert parse_config().rates.build() == TYPICAL_RATES


def test_negative_kappa_names_the_field():
    with pytest.raises(ConfigError) as info:
        validate_config({"rates": {"kappa_c_per_s": -1}})
    assert any(e.startswith("rates.kappa_c_per_s:") for e in info.value.errors)


def test_every_error_is_reported():
    bad = {"rates": {"kappa_c_per_s": -1, "gamma_s_per_s": 0}, "lineshape": {"fwhm_MHz": "wide"},
           "output": {"format": "xml"}, "extra_section": {}}
    with pytest.raises(ConfigError) as info:
        validate_config(bad)
    paths = {e.split(":")[0] for e in info.value.errors}
    assert {"rates.kappa_c_per_s", "rates.gamma_s_per_s", "lineshape.fwhm_MHz", "output.format",
            "extra_section"} <= paths


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="rates.kappa"):
        validate_config({"rates": {"kappa": 2.1e6}})


def test_non_finite_rejected():
    with pytest.raises(ConfigError, match="lineshape.N_max"):
        validate_config({"lineshape": {"N_max": float("inf")}})


def test_domain_checks_run_before_computation():
    # cross-field invariants are enforced by the module constructors
    with pytest.raises(ConfigError, match="hfi"):
        validate_config({"hfi": {"rho": [0.1, 0.2], "A_zz_MHz": [-61.0]}})


def test_toml_syntax_error_has_line_number(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[rates]\neinstein_B_per_s = 1.1e-7\nkappa_c_per_s = = 3\n")
    with pytest.raises(ConfigError, match=r"line 3") as info:
        parse_config(p)
    assert not info.value.io


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(tmp_path / "absent.toml")
    assert info.value.io


def test_hfi_needs_densities():
    cfg = validate_config({})
    with pytest.raises(ConfigError, match="rho_i are mandatory"):
        cfg.hfi.build()


def test_overrides_apply_dotted_paths():
    cfg = validate_config(example_data(), {"lineshape.N_max": 5e12, "hfi.bandwidth_MHz": 0.02, "seed": 7,
                                           "lineshape.fwhm_MHz": None})
    assert cfg.lineshape.N_max == 5e12 and cfg.hfi.bandwidth_MHz == 0.02 and cfg.seed == 7
    assert cfg.lineshape.fwhm_MHz == 4.0


def test_digest_ignores_output_dir_only():
    a = validate_config(example_data())
    b = validate_config(example_data(), {"output.dir": "elsewhere"})
    c = validate_config(example_data(), {"seed": 1})
    assert a.digest() == b.digest() != c.digest()


def test_config_is_frozen():
    cfg = validate_config({})
    assert isinstance(cfg, RunConfig)
    with pytest.raises(Exception):
        cfg.rates.kappa_c_per_s = 1.0
