import math

import numpy as np
import pytest
from sklearn.base import clone

from opticloud import OpticalConvolver
from opticloud.opu import (
    DegenerateKernelError,
    KernelTooLongError,
    NoiseModel,
    NormalizationError,
    OpuConfig,
    calibrated_alpha,
    elementary_op,
    ideal_cyclic_correlation,
    load_weights,
    measure_enob,
    noise_sigma,
    normalize_kernel,
    opu_convolve,
    peak_tops,
    plan_wavelengths,
    quantize_midrise,
    read_weights,
    split_kernel,
    valid_slice,
)
from opticloud.photonics import AwgrSpec, apply_waveshaper


def test_split_kernel_examples(rng):
    s = split_kernel([0.2, -0.5, 0.7])
    assert np.allclose(s.positive_part, [0.2, 0, 0.7]) and np.allclose(s.negative_part, [0, 0.5, 0])
    assert not split_kernel([1.0, 2.0]).negative_part.any()
    for _ in range(100):
        w = rng.normal(size=5)
        s = split_kernel(w)
        assert np.allclose(s.weights, w) and not np.any(s.positive_part * s.negative_part)


def test_normalize_kernel(rng):
    w, scale = normalize_kernel([2, -4, 6])
    assert scale == 6 and np.allclose(w, [1 / 3, -2 / 3, 1])
    assert normalize_kernel([0.5, -1.0])[1] == 1.0
    with pytest.raises(DegenerateKernelError):
        normalize_kernel([0.0, 0.0])
    cfg = OpuConfig()
    for _ in range(100):
        kernel = rng.normal(size=3) * 5
        x = rng.uniform(size=8)
        unit, s = normalize_kernel(kernel)
        assert np.allclose(opu_convolve(cfg, unit, x) * s, opu_convolve(cfg, kernel, x), atol=1e-9)


@pytest.mark.parametrize("layout", ["leading", "edges"])
def test_wavelength_plan_counts(layout):
    awgr = AwgrSpec(8, 84.0)
    plan = plan_wavelengths(awgr, 3, 16, layout)
    assert len(plan.positive_teeth) == 3 and len(plan.negative_teeth) == 3
    cycle = set(plan.cycle_teeth.tolist())
    assert len(cycle - plan.weight_tooth_set) == 10
    assert not (plan.signal_tooth_set & plan.weight_tooth_set)
    assert len(plan_wavelengths(awgr, 1, 16, layout).positive_teeth) == 1
    full = plan_wavelengths(awgr, 8, 16, layout)
    assert not full.signal_tooth_set


def test_plan_rejects_long_kernels():
    with pytest.raises(KernelTooLongError):
        plan_wavelengths(AwgrSpec(4, 84.0), 5, 8)


def test_load_and_read_weights(rng):
    cfg = OpuConfig()
    comb = cfg.source_comb()
    plan = plan_wavelengths(cfg.awgr, 3, comb.grid.tooth_count)
    ones = split_kernel([1.0, 1.0, 1.0])
    att = load_weights(plan, ones, comb).attenuation_per_tooth
    assert np.all(att[plan.positive_teeth] == 0) and np.all(np.isinf(att[plan.negative_teeth]))
    half = load_weights(plan, split_kernel([0.5, 0, 0]), comb).attenuation_per_tooth
    assert half[plan.positive_teeth[0]] == pytest.approx(10 * math.log10(2))
    split = split_kernel(rng.uniform(-1, 1, 3))
    shaped = apply_waveshaper(comb, load_weights(plan, split, comb))
    back = read_weights(plan, shaped, comb.power_per_tooth.min())
    assert np.allclose(back.positive_part, split.positive_part, atol=1e-9)
    assert np.allclose(back.negative_part, split.negative_part, atol=1e-9)
    with pytest.raises(NormalizationError):
        load_weights(plan, split_kernel([2.0, 0, 0]), comb)


def test_convolve_examples():
    cfg = OpuConfig(awgr=AwgrSpec(4, 84.0))
    y = opu_convolve(cfg, [1, -2, 3], [0.1, 0.2, 0.3, 0.4])
    assert np.allclose(y[valid_slice(cfg, 3)], [0.6, 0.8], atol=1e-9)
    impulse = np.zeros(8)
    impulse[0] = 1
    out = opu_convolve(OpuConfig(), [0.3, -0.6, 0.9], impulse)
    # correlation orientation: impulse at the start reads the kernel backwards
    assert np.allclose(out[:1], [0.3])
    padded = np.zeros(8)
    padded[2] = 1
    assert np.allclose(opu_convolve(OpuConfig(), [0.3, -0.6, 0.9], padded)[:3], [0.9, -0.6, 0.3])


@pytest.mark.parametrize("layout", ["leading", "edges"])
def test_convolve_matches_cyclic_oracle(layout, rng):
    for n in (4, 8):
        cfg = OpuConfig(awgr=AwgrSpec(n, 84.0), layout=layout)
        for k in range(1, n + 1):
            w, x = rng.uniform(-1, 1, k), rng.uniform(size=(5, n))
            assert np.allclose(opu_convolve(cfg, w, x), ideal_cyclic_correlation(x, w), atol=1e-9)


def test_sign_split_and_linearity(rng):
    cfg = OpuConfig()
    w = rng.uniform(-1, 1, 3)
    s = split_kernel(w)
    x1, x2 = rng.uniform(0, 0.5, 8), rng.uniform(0, 0.5, 8)
    both = opu_convolve(cfg, s.positive_part, x1) - opu_convolve(cfg, s.negative_part, x1)
    assert np.allclose(opu_convolve(cfg, w, x1), both, atol=1e-12)
    assert np.allclose(opu_convolve(cfg, w, 0.5 * x1), 0.5 * opu_convolve(cfg, w, x1), atol=1e-12)
    assert np.allclose(opu_convolve(cfg, w, x1 + x2),
                       opu_convolve(cfg, w, x1) + opu_convolve(cfg, w, x2), atol=1e-12)


def test_noisy_convolve_rms_and_determinism(rng):
    cfg = OpuConfig(mode="noisy", noise=NoiseModel.calibrated(seed=4))
    sigma_ref = NoiseModel().sigma_ref
    w = rng.uniform(-1, 1, 3)
    x = rng.uniform(size=(4096, 8))
    noisy = opu_convolve(cfg, w, x, job_id=1)
    ideal = opu_convolve(cfg, w, x, mode="ideal")
    rms = np.sqrt(np.mean(((noisy - ideal) / np.abs(w).sum()) ** 2))
    assert 0.8 * sigma_ref <= rms <= 1.2 * sigma_ref
    assert np.array_equal(noisy, opu_convolve(cfg, w, x, job_id=1))
    assert not np.array_equal(noisy, opu_convolve(cfg, w, x, job_id=2))


def test_elementary_ops():
    cfg = OpuConfig()
    assert elementary_op(cfg, "multiply", 0.5, 0.5) == pytest.approx(0.25)
    assert elementary_op(cfg, "subtract", 0.7, 0.7) == pytest.approx(0.0, abs=1e-12)
    assert elementary_op(cfg, "add", 0.25, 0.5) == pytest.approx(0.75)
    assert elementary_op(cfg, "mac", [0.1, 0.2, 0.3], [1, -1, 1]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        elementary_op(cfg, "divide", 1, 1)


def test_enob():
    assert measure_enob(np.full(10, 2.0), 2.0) == pytest.approx(0.0)
    assert measure_enob(np.array([0.0984, -0.0984]), 14.0) == pytest.approx(7.15, abs=0.01)
    e = np.random.default_rng(0).normal(size=100)
    assert measure_enob(e / 2, 1.0) - measure_enob(e, 1.0) == pytest.approx(1.0)


def test_noise_law():
    model = NoiseModel()
    assert noise_sigma(model, 10.0) == model.sigma_ref
    assert calibrated_alpha() == pytest.approx(0.646, abs=1e-3)
    drop = math.log2(noise_sigma(model, 50.0) / noise_sigma(model, 10.0))
    assert drop == pytest.approx(1.5, abs=1e-12)
    sigmas = [noise_sigma(model, b) for b in (10, 20, 30, 40)]
    assert np.all(np.diff(sigmas) > 0)


def test_quantize_midrise():
    q = quantize_midrise(np.linspace(0, 1, 1000), 3, 0.0, 1.0)
    assert len(np.unique(q)) == 8
    assert np.max(np.abs(q - np.linspace(0, 1, 1000))) <= 1 / 16 + 1e-12


def test_peak_tops():
    assert peak_tops(8, 3, 10) == 0.72
    assert peak_tops(8, 3, 50) == 3.6
    assert peak_tops(64, 3, 100) == pytest.approx(74.4)
    with pytest.raises(KernelTooLongError):
        peak_tops(4, 5, 10)


def test_optical_convolver_estimator(rng):
    est = OpticalConvolver(kernel=[0.5, -1.0, 0.25])
    assert clone(est).get_params()["kernel"] == [0.5, -1.0, 0.25]
    X = rng.uniform(size=(6, 8))
    Y = est.fit(X).transform(X)
    assert Y.shape == (6, 6)
    expected = np.array([np.correlate(row, [0.5, -1.0, 0.25], "valid") for row in X])
    assert np.allclose(Y, expected, atol=1e-9)
    assert est.set_params(output="ports").fit(X).transform(X).shape == (6, 8)
    with pytest.raises(ValueError):
        est.transform(rng.uniform(size=(2, 5)))
    with pytest.raises(ValueError):
        OpticalConvolver(kernel=[1.0]).fit().transform(np.full((1, 8), 1.5))
