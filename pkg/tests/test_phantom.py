import numpy as np
import pytest
from scipy.spatial import cKDTree

from phaserecon.models import build_partial_fourier, forward
from phaserecon.phantom import (combine_masks, full_mask, make_phantom,
                                make_sens_maps, partial_fourier_mask,
                                poisson_disk_mask, psnr, psnr_rmse,
                                simulate_acquisition)


def test_phantom_is_deterministic():
    a = make_phantom("pf-brain-like", (32, 32), 3 * np.pi, seed=9)
    b = make_phantom("pf-brain-like", (32, 32), 3 * np.pi, seed=9)
    assert np.array_equal(a.magnitude, b.magnitude)
    assert np.array_equal(a.phase, b.phase)


def test_phantom_phase_range_honored():
    ph = make_phantom("pf-brain-like", (32, 32), 3 * np.pi, seed=1)
    assert ph.phase.max() - ph.phase.min() == pytest.approx(3 * np.pi,
                                                            rel=1e-10)
    flat = make_phantom("pf-brain-like", (32, 32), 0.0, seed=1)
    assert np.ptp(flat.phase) == 0.0


def test_phantom_wraps_are_exact_multiples_of_two_pi():
    ph = make_phantom("pf-brain-like", (32, 32), 3 * np.pi, seed=4)
    principal = np.angle(np.exp(1j * ph.phase))
    k = (ph.phase - principal) / (2 * np.pi)
    assert np.allclose(k, np.round(k), atol=1e-9)
    assert np.any(np.round(k) != 0)  # range > 2 pi forces actual wraps


def test_phantom_shape_guard():
    with pytest.raises(ValueError, match=">= 16"):
        make_phantom("pf-brain-like", (8, 32), 1.0, seed=0)
    with pytest.raises(ValueError, match="unknown phantom kind"):
        make_phantom("mystery", (32, 32), 1.0, seed=0)
    with pytest.raises(ValueError, match="3-D"):
        make_phantom("flow-tube", (32, 32), 1.0, seed=0)


def test_flow_tube_velocity_divergence_free_inside_vessel():
    from phaserecon.regularizers import divergence
    ph = make_phantom("flow-tube", (32, 32, 16), 1.0, seed=2)
    vessel = ph.extras["vessel"]
    core = vessel.copy()
    for ax in range(3):
        core &= np.roll(vessel, 1, ax) & np.roll(vessel, -1, ax)
    assert core.sum() > 100
    div = divergence(ph.phase[1:])
    assert np.max(np.abs(div[core])) <= 1e-8


def test_waterfat_phantom_components():
    ph = make_phantom("waterfat-2compartment", (32, 32), 0.5, seed=3,
                      field_range_hz=60.0)
    assert ph.magnitude.shape == (2, 32, 32)
    assert ph.phase.shape == (3, 32, 32)
    field = ph.phase[2]
    assert field.max() == pytest.approx(2 * np.pi * 60, rel=1e-9)
    assert field.min() == pytest.approx(-2 * np.pi * 60, rel=1e-9)
    # Compartments do not overlap.
    assert np.all((ph.magnitude[0] > 0) & (ph.magnitude[1] > 0) == False)  # noqa: E712


def test_sens_maps_single_coil_all_ones():
    maps = make_sens_maps((16, 16), 1, seed=0)
    assert np.array_equal(maps, np.ones((1, 16, 16), dtype=complex))


def test_sens_maps_sum_of_squares_normalized():
    maps = make_sens_maps((24, 24), 8, seed=11)
    sos = np.sum(np.abs(maps) ** 2, axis=0)
    assert np.max(np.abs(sos - 1.0)) <= 1e-10
    again = make_sens_maps((24, 24), 8, seed=11)
    assert np.array_equal(maps, again)
    with pytest.raises(ValueError):
        make_sens_maps((8, 8), 0)


def test_partial_fourier_mask_convention():
    sm = partial_fourier_mask((256, 4), 5 / 8, axis=0)
    rows = np.flatnonzero(sm.mask[:, 0])
    assert rows[0] == 0 and rows[-1] == 159 and len(rows) == 160
    assert sm.mask[128, 0]  # centered DC row is kept
    assert np.all(partial_fourier_mask((16, 16), 1.0).mask)
    with pytest.raises(ValueError):
        partial_fourier_mask((16, 16), 0.0)


def test_poisson_disk_mask_acceleration_and_calibration():
    sm = poisson_disk_mask((256, 256), 4.0, 24, seed=5)
    assert 3.6 <= sm.acceleration <= 4.4
    lo = 128 - 12
    assert np.all(sm.mask[lo:lo + 24, lo:lo + 24])
    again = poisson_disk_mask((256, 256), 4.0, 24, seed=5)
    assert np.array_equal(sm.mask, again.mask)


def test_poisson_disk_min_distance_audit():
    # Every accepted pair outside the calibration block must keep at least
    # the smaller of the two local rejection radii apart (the symmetric
    # dart-throwing rule guarantees dist >= (r_a + r_b) / 2 >= min(r_a, r_b)).
    shape = (256, 256)
    sm = poisson_disk_mask(shape, 4.0, 24, seed=5)
    from phaserecon.phantom import _calib_block, _radius_field
    calib = _calib_block(shape, 24)
    radii = _radius_field(shape, sm.radius_scale, 3.0)

    pts = np.argwhere(sm.mask & ~calib)
    tree = cKDTree(pts.astype(float))
    r_max = radii.max()
    violations = 0
    for i, j in tree.query_pairs(r_max):
        a, b = pts[i], pts[j]
        dist = np.linalg.norm((a - b).astype(float))
        local = min(radii[tuple(a)], radii[tuple(b)])
        if dist < local - 1e-9:
            violations += 1
    assert violations == 0


def test_poisson_disk_infeasible_calibration():
    with pytest.raises(ValueError, match="infeasible"):
        poisson_disk_mask((32, 32), 8.0, 24, seed=0)


def test_combine_masks_counts():
    pf = partial_fourier_mask((64, 64), 5 / 8, axis=0)
    pd = poisson_disk_mask((64, 64), 2.0, 12, seed=2)
    both = combine_masks(pf, pd)
    assert both.mask.sum() <= pf.mask.sum()
    assert both.mask.sum() <= pd.mask.sum()
    assert both.kind == "combined"


def test_simulate_acquisition_noise_statistics():
    img = (16, 16)
    model = build_partial_fourier(np.ones(img), np.ones((1,) + img))
    ph = make_phantom("pf-brain-like", img, 1.0, seed=0)
    y0 = simulate_acquisition(model, ph, 0.0, seed=1)
    assert np.array_equal(y0, forward(model, ph.magnitude, ph.phase))

    # Empirical noise std within 2% over ~1e5 samples.
    sigma = 0.37
    reps = 200  # 200 * 256 complex = 102400 samples
    noise = []
    for s in range(reps):
        y = simulate_acquisition(model, ph, sigma, seed=s)
        noise.append((y - y0).ravel())
    noise = np.concatenate(noise)
    assert np.std(noise.real) == pytest.approx(sigma, rel=0.02)
    assert np.std(noise.imag) == pytest.approx(sigma, rel=0.02)

    y1 = simulate_acquisition(model, ph, sigma, seed=7)
    y2 = simulate_acquisition(model, ph, sigma, seed=7)
    assert np.array_equal(y1, y2)
    with pytest.raises(ValueError):
        simulate_acquisition(model, ph, -0.1, seed=0)


def test_psnr_unit_impulse_example():
    ref = np.zeros((16, 16))
    ref[8, 8] = 1.0
    rec = ref.copy()
    rec[0, 0] += 0.1
    assert psnr(ref, rec) == pytest.approx(20.0, abs=1e-12)


def test_psnr_exact_match_saturates():
    ref = np.ones((4, 4))
    assert psnr(ref, ref) == np.inf


def test_psnr_matches_independent_formula():
    rng = np.random.default_rng(3)
    ref = np.abs(rng.standard_normal((12, 12))) + 0.1
    rec = ref + 0.01 * rng.standard_normal((12, 12))
    expected = 20 * np.log10(ref.max() / np.sqrt(np.sum((ref - rec) ** 2)))
    assert psnr(ref, rec) == pytest.approx(expected, abs=1e-10)
    expected_rmse = 20 * np.log10(
        ref.max() / np.sqrt(np.mean((ref - rec) ** 2)))
    assert psnr_rmse(ref, rec) == pytest.approx(expected_rmse, abs=1e-10)


def test_psnr_rejects_zero_reference():
    with pytest.raises(ValueError, match="identically zero"):
        psnr(np.zeros((4, 4)), np.ones((4, 4)))
    with pytest.raises(ValueError, match="shape"):
        psnr(np.ones((4, 4)), np.ones((4, 5)))
