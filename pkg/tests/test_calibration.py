import json

import numpy as np
import pytest

from opticloud import calibration
from opticloud.calibration import CalibrationError, calibrate_mzm_array, golden_section, predistort
from opticloud.photonics import MzmModel, single_pole_lowpass

V_PI = 3.0


def _array(**overrides):
    base = MzmModel.quadrature(V_PI)
    mzms = [base, base, base]
    for idx, kwargs in overrides.items():
        mzms[int(idx)] = MzmModel(V_PI, **kwargs)
    return mzms


def test_golden_section_finds_minimum():
    x, fx = golden_section(lambda v: (v - 0.3) ** 2, -1.0, 2.0, 1e-8)
    assert x == pytest.approx(0.3, abs=1e-6) and fx < 1e-10


def test_identical_array_needs_no_correction():
    report = calibrate_mzm_array(_array())
    assert all(c.bias == 0 and c.gain == 1 and c.delay == 0 for c in report.corrections)
    assert max(report.residuals) < 1e-12
    json.dumps(report.as_dict())


def test_recovers_injected_bias_offset():
    mzms = _array(**{"2": {"bias_voltage": V_PI / 2 + 0.05 * V_PI}})
    report = calibrate_mzm_array(mzms)
    assert report.corrections[2].bias == pytest.approx(-0.05 * V_PI, abs=1e-3 * V_PI)
    assert report.corrections[1].bias == 0.0


def test_random_mismatches_converge():
    rng = np.random.default_rng(5)
    good = 0
    trials = 100
    for _ in range(trials):
        mzm = MzmModel(
            V_PI,
            bias_voltage=V_PI / 2 + rng.uniform(-0.05, 0.05) * V_PI,
            v_pp=1.5 * rng.uniform(0.9, 1.1),
            delay=rng.uniform(-10, 10),
        )
        try:
            report = calibrate_mzm_array([MzmModel.quadrature(V_PI), mzm], tolerance=1e-2)
        except CalibrationError:
            continue
        good += report.residuals[1] < 1e-2
    assert good >= 95


def test_nonconvergence_raises():
    mzms = [MzmModel.quadrature(V_PI), MzmModel(V_PI, bias_voltage=0.4 * V_PI)]
    with pytest.raises(CalibrationError):
        calibrate_mzm_array(mzms, max_sweeps=1, tolerance=1e-12)


def test_waveform_is_periodic_and_bounded():
    wave = calibration.test_waveform(symbols=32, oversample=4, seed=1)
    assert wave.shape == (128,) and np.max(np.abs(wave)) == pytest.approx(0.5)


def test_predistort_identity_for_wide_response(rng):
    x = rng.normal(size=256)
    y = predistort(x, 1e9, 80.0)
    assert np.allclose(y, x, atol=1e-6)


def test_predistort_speeds_up_step():
    step = np.r_[np.zeros(20), np.ones(80)]
    plain = single_pole_lowpass(step, 10.0, 80.0)
    boosted = single_pole_lowpass(predistort(step, 10.0, 80.0), 10.0, 80.0)

    def rise(y):
        return np.argmax(y >= 0.9) - np.argmax(y >= 0.1)

    assert rise(boosted) < rise(plain)


def test_predistort_round_trip_band_limited():
    rng = np.random.default_rng(2)
    oversample, cutoff = 8, 10.0
    errors = []
    for _ in range(20):
        symbols = rng.uniform(-1, 1, 64)
        x = single_pole_lowpass(np.repeat(symbols, oversample), cutoff / 2, cutoff * oversample)
        y = single_pole_lowpass(predistort(x, cutoff, cutoff * oversample), cutoff, cutoff * oversample)
        errors.append(np.sqrt(np.mean((y - x) ** 2)) / np.sqrt(np.mean(x**2)))
    assert max(errors) < 0.05
