import numpy as np
import pytest

from ndeepc.errors import ConfigError
from ndeepc.signals import (MultisineSpec, ReferenceSpec, multisine,
                            multisine_bins, reference)


def test_multisine_paper_style_spec():
    spec = MultisineSpec(amplitude_range=(-4.0, 4.0), band=(0.0, 1.0), period=1000,
                         num_sines=25, freq_trials=40, phase_trials=1, seed=1)
    u = multisine(spec)
    assert u.shape == (1000,)
    assert abs(u.min() + 4.0) < 1e-12
    assert abs(u.max() - 4.0) < 1e-12


def test_multisine_single_sinusoid():
    spec = MultisineSpec(amplitude_range=(-1.0, 1.0), period=8, num_sines=1,
                         freq_trials=3, seed=2)
    u = multisine(spec)
    assert u.shape == (8,)
    assert abs(u.min() + 1.0) < 1e-12
    assert abs(u.max() - 1.0) < 1e-12


def test_multisine_deterministic_per_seed():
    spec = MultisineSpec(seed=5)
    assert np.array_equal(multisine(spec), multisine(spec))
    other = MultisineSpec(seed=6)
    assert not np.array_equal(multisine(spec), multisine(other))


def test_multisine_spectral_content():
    spec = MultisineSpec(amplitude_range=(-4.0, 4.0), band=(0.0, 1.0), period=1000,
                         num_sines=25, freq_trials=40, seed=1)
    u = multisine(spec)
    bins = multisine_bins(spec)
    spectrum = np.abs(np.fft.rfft(u)) ** 2
    # the exact range mapping adds a DC offset, which lands in bin 0
    allowed = set(bins.tolist()) | {0}
    outside = sum(e for i, e in enumerate(spectrum) if i not in allowed)
    assert outside < 0.01 * np.sum(spectrum)


def test_multisine_num_periods_tiles():
    spec = MultisineSpec(period=64, num_sines=4, num_periods=3, seed=0)
    u = multisine(spec)
    assert u.shape == (192,)
    assert np.array_equal(u[:64], u[64:128])


def test_multisine_validation():
    with pytest.raises(ConfigError):
        multisine(MultisineSpec(amplitude_range=(1.0, 1.0)))
    with pytest.raises(ConfigError):
        multisine(MultisineSpec(band=(0.5, 0.2)))
    with pytest.raises(ConfigError):
        multisine(MultisineSpec(period=10, num_sines=30))


def test_reference_steps():
    spec = ReferenceSpec(kind="steps", levels=(0.5, -0.5), dwell=100, horizon=200)
    r = reference(spec)
    assert r.shape == (200,)
    assert np.all(r[:100] == 0.5)
    assert np.all(r[100:] == -0.5)


def test_reference_chirp_zero_amplitude():
    spec = ReferenceSpec(kind="chirp", amplitude=0.0, chirp_start_hz=0.1,
                         chirp_end_hz=0.2, ts=0.033, horizon=50)
    assert np.allclose(reference(spec), 0.0)


def test_reference_chirp_constant_frequency():
    spec = ReferenceSpec(kind="chirp", amplitude=1.0, chirp_start_hz=0.1,
                         chirp_end_hz=0.1, ts=0.033, horizon=4)
    expected = [np.sin(2.0 * np.pi * 0.1 * k * 0.033) for k in range(4)]
    assert np.allclose(reference(spec), expected)


def test_reference_validation():
    with pytest.raises(ConfigError):
        reference(ReferenceSpec(kind="chirp", chirp_start_hz=0.3, chirp_end_hz=0.1))
    with pytest.raises(ConfigError):
        reference(ReferenceSpec(kind="nope"))
