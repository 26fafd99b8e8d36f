import numpy as np
import pytest

from masersense.errors import DomainError
from masersense.spectrum import Spectrum, TimeTrace, ValueKind, normalize_peak, uniform_grid


def test_spectrum_validation():
    with pytest.raises(DomainError, match="equal length"):
        Spectrum([1, 2, 3], [1, 2])
    with pytest.raises(DomainError, match="strictly increasing"):
        Spectrum([1, 3, 2], [1, 1, 1])
    with pytest.raises(DomainError, match="strictly increasing"):
        Spectrum([1, 1, 2], [1, 1, 1])
    with pytest.raises(DomainError, match="non-finite"):
        Spectrum([1, 2, 3], [1, np.nan, 1])
    with pytest.raises(DomainError, match="empty"):
        Spectrum([], [])
    for kind in ("photon_count", "linear_amplitude", "count"):
        with pytest.raises(DomainError, match="non-negative"):
            Spectrum([1, 2], [1, -1], kind)
    s = Spectrum([1, 2], [-30.0, -20.0], "log_amplitude_dB")
    assert s.value_kind is ValueKind.LOG_AMPLITUDE_DB


def test_spectrum_is_read_only():
    s = Spectrum([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        s.values[0] = 5.0
    src = np.array([1.0, 2.0, 3.0])
    s2 = Spectrum(src, src)
    src[0] = 0.5
    assert s2.frequencies[0] == 1.0


def test_spectrum_step_and_uniformity():
    s = Spectrum(np.linspace(0, 1, 11), np.ones(11))
    assert s.step == pytest.approx(0.1)
    assert s.is_uniform()
    mixed = Spectrum([0.0, 0.5, 1.0, 1.05, 1.1], np.ones(5))
    assert not mixed.is_uniform()
    assert mixed.step == pytest.approx(0.05)
    assert Spectrum([1.0], [2.0]).step == 0.0


def test_uniform_grid():
    g = uniform_grid(1450.0)
    assert len(g) == 1601
    assert g[800] == 1450.0
    assert np.diff(g) == pytest.approx(0.01)
    with pytest.raises(DomainError):
        uniform_grid(0.0, 0.0)
    with pytest.raises(DomainError):
        uniform_grid(0.0, 1.0, 2)


def test_normalize_peak():
    s = normalize_peak(Spectrum([0, 1, 2], [1.0, 4.0, 2.0]))
    np.testing.assert_array_equal(s.values, [0.25, 1.0, 0.5])
    with pytest.raises(DomainError):
        normalize_peak(Spectrum([0, 1], [0.0, 0.0]))


def test_time_trace():
    t = TimeTrace([-1.0, 0.0, 1.0], [0.1, -0.2, 0.3], B0_T=66e-6, freq_MHz=1448.45)
    assert len(t) == 3 and t.freq_MHz == 1448.45
    t2 = t.with_volts([0.0, 0.0, 0.0])
    assert t2.B0_T == 66e-6 and np.all(t2.volts == 0)
    with pytest.raises(DomainError):
        TimeTrace([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        TimeTrace([0.0, 1.0], [1.0])
    with pytest.raises(DomainError):
        TimeTrace([0.0, 1.0], [1.0, np.inf])
