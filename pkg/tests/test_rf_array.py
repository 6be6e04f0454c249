"""Signal-chain tests: array manifold, TDM alignment, phase-mode transform
against a Bessel-series oracle, smoothing rank behavior, spectral search
against a brute-force fine-grid oracle, and the median filter."""

import math

import numpy as np
import pytest
from scipy.special import jv

from followsim.config import RfConfig
from followsim.rf import (
    AoaEstimator,
    ArrayGeometry,
    DegenerateSnapshotError,
    IQSnapshot,
    PhaseModeTransform,
    align_tdm,
    median_filter3,
    music_estimate,
    smoothed_covariance,
    steering_vector,
)

GEOM = ArrayGeometry()
TRANSFORM = PhaseModeTransform(GEOM, mode_order=3)


def make_snapshot(slot_values, ref_values, n=64, t=0.0, jitter=None):
    slots = [np.full(n, v, dtype=complex) for v in slot_values]
    refs = [np.full(n, v, dtype=complex) for v in ref_values]
    if jitter is not None:
        slots = [s * np.exp(1j * j) for s, j in zip(slots, jitter)]
        refs = [r * np.exp(1j * j) for r, j in zip(refs, jitter)]
    return IQSnapshot(slot_samples=slots, reference_samples=refs,
                      slot_phase_jitter=np.zeros(len(slots)) if jitter is None else np.asarray(jitter),
                      timestamp=t)


# ---------------------------------------------------------------------------
# steering vector
# ---------------------------------------------------------------------------

def test_geometry_chord_spacing_half_wavelength():
    pos = GEOM.element_positions()
    chord = np.linalg.norm(pos[1] - pos[0])
    assert abs(chord - GEOM.wavelength / 2.0) < 1e-9


def test_steering_vector_unit_modulus():
    for az in np.linspace(-np.pi, np.pi, 17):
        sv = steering_vector(GEOM, az)
        assert np.allclose(np.abs(sv), 1.0)


def test_steering_vector_ring_symmetry_is_cyclic_permutation():
    theta = 0.37
    base = steering_vector(GEOM, theta)
    rotated = steering_vector(GEOM, theta + 2.0 * np.pi / GEOM.ring_count)
    assert np.allclose(np.roll(base, 1), rotated)


def test_steering_vector_direct_substitution():
    sv = steering_vector(GEOM, 0.0)
    expected = np.exp(1j * 2.0 * np.pi * GEOM.ring_radius / GEOM.wavelength)
    assert abs(sv[0] - expected) < 1e-12


# ---------------------------------------------------------------------------
# TDM alignment
# ---------------------------------------------------------------------------

def test_align_constant_phases():
    phi, psi = 0.8, -1.3
    snap = make_snapshot([np.exp(1j * phi)] * 8, [np.exp(1j * psi)] * 8)
    aligned = align_tdm(snap)
    assert np.allclose(aligned, np.exp(1j * (phi - psi)))


def test_align_self_conjugation_is_real_power():
    values = [0.5 * np.exp(1j * k) for k in range(8)]
    snap = make_snapshot(values, values)
    aligned = align_tdm(snap)
    assert np.allclose(aligned.imag, 0.0)
    assert np.allclose(aligned.real, 0.25)


def test_align_jitter_immunity():
    # exact cancellation up to float rounding: the perturbed inputs are
    # themselves rounded, so agreement is at the ulp level, not bitwise
    rng = np.random.default_rng(3)
    ring = steering_vector(GEOM, 0.6)
    clean = make_snapshot(ring, np.ones(8))
    jitter = rng.uniform(-0.3, 0.3, 8)
    perturbed = make_snapshot(ring, np.ones(8), jitter=jitter)
    assert np.max(np.abs(align_tdm(clean) - align_tdm(perturbed))) < 1e-12


def test_align_rejects_dead_reference():
    snap = make_snapshot(np.ones(8), np.zeros(8))
    with pytest.raises(DegenerateSnapshotError):
        align_tdm(snap)


# ---------------------------------------------------------------------------
# phase-mode transform vs. the Jacobi-Anger aliasing series
# ---------------------------------------------------------------------------

def mode_series_oracle(theta, mode_order=3, p_max=48):
    """Direct series evaluation of the beamspace output: every excitation
    order aliasing onto each mode contributes with its Bessel weight."""
    n = GEOM.ring_count
    kr = GEOM.wavenumber_radius
    modes = np.arange(-mode_order, mode_order + 1)
    out = np.zeros(len(modes), dtype=complex)
    for mi, m in enumerate(modes):
        acc = 0.0 + 0.0j
        for p in range(-p_max, p_max + 1):
            if (p - m) % n == 0:
                acc += (1j ** p) * jv(p, kr) * np.exp(1j * p * theta)
        out[mi] = math.sqrt(n) * acc / ((1j ** m) * jv(m, kr))
    return out


def test_transform_matches_series_oracle_over_sweep():
    for theta in np.linspace(-np.pi, np.pi, 25):
        got = TRANSFORM.apply(steering_vector(GEOM, theta))
        assert np.max(np.abs(got - mode_series_oracle(theta))) < 1e-10


def test_transform_phase_flat_at_zero():
    beam = TRANSFORM.apply(steering_vector(GEOM, 0.0))
    assert np.max(np.abs(np.angle(beam))) < 0.05


def test_transform_phase_slope_tracks_azimuth():
    modes = TRANSFORM.modes
    for theta in np.linspace(-2.5, 2.5, 11):
        beam = TRANSFORM.apply(steering_vector(GEOM, theta))
        phases = np.unwrap(np.angle(beam))
        slope = np.polyfit(modes, phases, 1)[0]
        assert abs(slope - theta) < 0.1


def test_transform_linearity_zero():
    assert np.allclose(TRANSFORM.apply(np.zeros(8, dtype=complex)), 0.0)


def test_transform_rejects_unexcitable_mode():
    class NullGeometry:
        ring_count = 8
        wavenumber_radius = 2.404825557695773   # first zero of J_0
        element_azimuths = GEOM.element_azimuths

    with pytest.raises(ValueError, match="unexcitable"):
        PhaseModeTransform(NullGeometry(), mode_order=3)


def test_transform_rejects_oversized_mode_order():
    with pytest.raises(ValueError):
        PhaseModeTransform(GEOM, mode_order=4)


# ---------------------------------------------------------------------------
# spatial smoothing
# ---------------------------------------------------------------------------

def coherent_two_path_beam(primary=45.0, echo=135.0, ratio=0.5):
    mix = steering_vector(GEOM, math.radians(primary)) \
        + ratio * steering_vector(GEOM, math.radians(echo))
    return TRANSFORM.apply(mix)


def signal_rank(cov, rel_threshold=1e-6):
    evals = np.linalg.eigvalsh(cov)
    return int(np.sum(evals >= rel_threshold * evals[-1]))


def test_smoothing_restores_coherent_rank():
    beam = coherent_two_path_beam()
    plain = smoothed_covariance([beam], n_subarrays=1)
    smoothed = smoothed_covariance([beam], n_subarrays=3)
    plain_evals = np.linalg.eigvalsh(plain)
    assert plain_evals[-1] / max(plain_evals[-2], 1e-300) > 1e3   # rank one
    assert signal_rank(smoothed) >= 2


def test_smoothing_identity_average():
    history = [np.ones(7, dtype=complex)]
    out = smoothed_covariance(history, n_subarrays=3)
    assert out.shape == (5, 5)
    assert np.allclose(out, np.ones((5, 5)))


def test_smoothing_degenerate_is_plain_covariance():
    rng = np.random.default_rng(5)
    vecs = [rng.normal(size=7) + 1j * rng.normal(size=7) for _ in range(4)]
    plain = sum(np.outer(v, v.conj()) for v in vecs) / 4
    out = smoothed_covariance(vecs, n_subarrays=1)
    assert np.allclose(out, plain)


def test_smoothing_rejects_short_subarray():
    with pytest.raises(ValueError):
        smoothed_covariance([np.ones(7, dtype=complex)], n_subarrays=7)
    with pytest.raises(ValueError):
        smoothed_covariance([], n_subarrays=3)


# ---------------------------------------------------------------------------
# spectral search
# ---------------------------------------------------------------------------

def brute_force_peak(cov, n_sources=1, rank_fraction=0.05, step_deg=0.01):
    """Dense-grid pseudospectrum argmax, no interpolation: the oracle the
    coarse-grid + parabolic estimate must agree with."""
    dim = cov.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    rank = max(n_sources, int(np.sum(evals >= rank_fraction * evals[-1])))
    rank = min(rank, dim - 1)
    noise = evecs[:, : dim - rank]
    grid = np.deg2rad(np.arange(-180.0, 180.0, step_deg))
    manifold = np.exp(1j * np.outer(np.arange(dim), grid))
    power = np.sum(np.abs(noise.conj().T @ manifold) ** 2, axis=0)
    return math.degrees(grid[int(np.argmin(power))])


def test_music_noiseless_single_source():
    sv = np.exp(1j * np.arange(5) * math.radians(45.0))
    cov = np.outer(sv, sv.conj())
    est = music_estimate(cov, n_sources=1, grid_step=math.radians(1.0))
    assert abs(math.degrees(est.azimuth) - 45.0) <= 0.5


def test_music_matches_brute_force_on_coherent_case():
    beam = coherent_two_path_beam()
    smoothed = smoothed_covariance([beam], n_subarrays=3)
    est = music_estimate(smoothed, n_sources=1)
    oracle = brute_force_peak(smoothed)
    assert abs(math.degrees(est.azimuth) - oracle) < 0.1
    assert abs(math.degrees(est.azimuth) - 45.0) <= 5.0

    unsmoothed = smoothed_covariance([beam], n_subarrays=1)
    est_plain = music_estimate(unsmoothed, n_sources=1)
    err_smoothed = abs(math.degrees(est.azimuth) - 45.0)
    err_plain = abs(math.degrees(est_plain.azimuth) - 45.0)
    assert err_plain > err_smoothed


def test_music_flat_spectrum_on_isotropic_noise():
    est = music_estimate(np.eye(5, dtype=complex))
    assert abs(est.confidence - 1.0) < 1e-6
    assert est.confidence < RfConfig().confidence_threshold


def test_music_rejects_bad_input():
    cov = np.eye(5, dtype=complex)
    cov[0, 0] = np.nan
    with pytest.raises(ValueError):
        music_estimate(cov)
    with pytest.raises(ValueError):
        music_estimate(np.eye(3, dtype=complex), n_sources=3)


# ---------------------------------------------------------------------------
# median filter
# ---------------------------------------------------------------------------

def test_median_of_three():
    vals = np.radians([10.0, 50.0, 12.0])
    assert abs(math.degrees(median_filter3(vals)) - 12.0) < 1e-12


def test_median_wraparound():
    vals = np.radians([179.0, -179.0, 178.0])
    out = math.degrees(median_filter3(vals))
    assert abs((out - 179.0 + 180.0) % 360.0 - 180.0) < 1e-9


def test_median_idempotent():
    assert abs(median_filter3([0.4, 0.4, 0.4]) - 0.4) < 1e-12


def test_median_short_history_passthrough():
    assert median_filter3([0.2]) == pytest.approx(0.2)
    assert median_filter3([0.2, 0.9]) == pytest.approx(0.9)


def test_median_output_is_one_of_inputs():
    rng = np.random.default_rng(11)
    for _ in range(200):
        vals = rng.uniform(-np.pi, np.pi, 3)
        out = median_filter3(vals)
        wrapped = (vals - out + np.pi) % (2 * np.pi) - np.pi
        assert np.min(np.abs(wrapped)) < 1e-9


# ---------------------------------------------------------------------------
# estimator chain invariants
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def estimator():
    return AoaEstimator(RfConfig())


def noiseless_estimate(estimator, theta, n=64):
    estimator.reset()
    snap = make_snapshot(steering_vector(GEOM, theta), np.ones(8), n=n)
    return estimator.process(snap)


def test_chain_sweep_consistency(estimator):
    for theta_deg in np.arange(-180.0, 180.0, 3.0) + 0.21:
        est = noiseless_estimate(estimator, math.radians(theta_deg))
        err = math.degrees(est.azimuth) - theta_deg
        err = (err + 180.0) % 360.0 - 180.0
        assert abs(err) <= 0.5, f"{theta_deg}: err {err}"


def test_chain_ring_equivariance_exact(estimator):
    base = noiseless_estimate(estimator, 0.3).azimuth
    for k in (1, 3, 5):
        delta = k * 2.0 * np.pi / GEOM.ring_count
        shifted = noiseless_estimate(estimator, 0.3 + delta).azimuth
        diff = (shifted - base - delta + np.pi) % (2 * np.pi) - np.pi
        assert abs(diff) < 1e-9


def test_pseudospectrum_dump_csv(estimator, tmp_path):
    sv = np.exp(1j * np.arange(5) * math.radians(30.0))
    cov = np.outer(sv, sv.conj())
    out = tmp_path / "spectrum.csv"
    estimator.dump_pseudospectrum(cov, str(out))
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "theta_deg,power"
    assert len(lines) == 1 + 720          # 0.5 deg grid over the circle
    rows = [ln.split(",") for ln in lines[1:]]
    best = max(rows, key=lambda r: float(r[1]))
    assert abs(float(best[0]) - 30.0) <= 0.5
