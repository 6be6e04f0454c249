"""Beacon bearing estimation from a time-multiplexed circular array.

The chain: per-slot phase alignment against the continuously sampled center
antenna, beamspace transform of the ring snapshot onto azimuthal phase modes
(giving a virtual uniform linear manifold), forward spatial smoothing over
sub-arrays to decorrelate specular multipath, subspace spectral search with
parabolic peak refinement, and a circular three-step median filter.

Everything here is pure and deterministic; the stateful windowing lives in
:class:`AoaEstimator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from .config import RfConfig
from .geometry import circular_median, wrap_angle

SPEED_OF_LIGHT = 299792458.0


class DegenerateSnapshotError(ValueError):
    """Raised when a snapshot cannot be phase-aligned (dead reference slot)."""


@dataclass(frozen=True)
class ArrayGeometry:
    """8+1 uniform circular array: ring elements plus a center reference.

    The ring radius is chosen so adjacent elements sit half a wavelength
    apart along the chord.
    """

    ring_count: int = 8
    carrier_freq: float = 2.4e9

    def __post_init__(self):
        if self.ring_count < 3:
            raise ValueError("ring_count must be >= 3")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def ring_radius(self) -> float:
        return (self.wavelength / 2.0) / (2.0 * math.sin(math.pi / self.ring_count))

    @property
    def element_azimuths(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.ring_count) / self.ring_count

    @property
    def wavenumber_radius(self) -> float:
        """k * r, the electrical radius governing phase-mode excitation."""
        return 2.0 * np.pi * self.ring_radius / self.wavelength

    def element_positions(self, z: float = 0.0) -> np.ndarray:
        """Ring element positions, (ring_count, 3), array center at origin."""
        az = self.element_azimuths
        return np.stack([
            self.ring_radius * np.cos(az),
            self.ring_radius * np.sin(az),
            np.full(self.ring_count, z),
        ], axis=1)


@dataclass
class IQSnapshot:
    """One TDM measurement cycle.

    slot_samples[i] holds the complex baseband samples recorded while ring
    antenna i was switched in; reference_samples[i] is the center antenna
    over the same interval. slot_phase_jitter is simulation metadata only.
    """

    slot_samples: list
    reference_samples: list
    slot_phase_jitter: np.ndarray
    timestamp: float

    def validate(self, ring_count: int):
        if len(self.slot_samples) != ring_count or len(self.reference_samples) != ring_count:
            raise ValueError("snapshot must carry one slot per ring antenna")
        for xs, xr in zip(self.slot_samples, self.reference_samples):
            if len(xs) != len(xr) or len(xs) < 16:
                raise ValueError("slot and reference sample counts must match and be >= 16")


@dataclass(frozen=True)
class AoAEstimate:
    azimuth: float            # radians, [-pi, pi)
    confidence: float         # pseudospectrum peak / mean
    timestamp: float
    low_confidence: bool = False


def steering_vector(geom: ArrayGeometry, azimuth: float) -> np.ndarray:
    """Far-field ring response for a source at the given azimuth (zero
    elevation): entry i is exp(j k r cos(azimuth - element_azimuth_i))."""
    return np.exp(1j * geom.wavenumber_radius * np.cos(azimuth - geom.element_azimuths))


def align_tdm(snap: IQSnapshot) -> np.ndarray:
    """Collapse a TDM snapshot into one pseudo-coherent array vector.

    Each slot is multiplied element-wise with the conjugated reference
    channel and averaged, so any phase common to a slot (switch jitter,
    oscillator drift) cancels exactly.
    """
    out = np.empty(len(snap.slot_samples), dtype=complex)
    for i, (xs, xr) in enumerate(zip(snap.slot_samples, snap.reference_samples)):
        xr = np.asarray(xr)
        if np.sum(np.abs(xr) ** 2) < 1e-30:
            raise DegenerateSnapshotError(f"zero-energy reference in slot {i}")
        out[i] = np.mean(np.asarray(xs) * np.conj(xr))
    return out


class PhaseModeTransform:
    """Maps ring snapshots onto azimuthal phase modes m = -M..M.

    For a far-field source at azimuth theta the output is ~ sqrt(N) *
    exp(j m theta) per mode, i.e. a virtual uniform linear manifold that
    spatial smoothing can slide over. Construction fails if any requested
    mode is unexcitable (Bessel null) at this electrical radius.
    """

    def __init__(self, geom: ArrayGeometry, mode_order: int):
        if mode_order > (geom.ring_count - 1) // 2:
            raise ValueError("mode_order exceeds what the ring can sample")
        self.geom = geom
        self.mode_order = mode_order
        self.modes = np.arange(-mode_order, mode_order + 1)
        kr = geom.wavenumber_radius
        bessel = jv(self.modes, kr)
        if np.any(np.abs(bessel) < 1e-6):
            bad = self.modes[np.abs(bessel) < 1e-6]
            raise ValueError(f"phase modes {bad.tolist()} unexcitable at kr={kr:.3f}")
        weights = np.exp(1j * np.outer(self.modes, geom.element_azimuths))
        weights /= math.sqrt(geom.ring_count)
        excitation = (1j ** self.modes) * bessel
        self.matrix = weights / excitation[:, None]

    @property
    def output_length(self) -> int:
        return 2 * self.mode_order + 1

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


def smoothed_covariance(history, n_subarrays: int = 3,
                        subarray_length: int | None = None) -> np.ndarray:
    """Sample covariance over a window of beamspace vectors, forward
    spatially smoothed by averaging the principal submatrices.

    With n_subarrays = 1 this degenerates to the plain sample covariance;
    passing subarray_length explicitly allows an equal-aperture ablation
    (e.g. one unaveraged subarray of the smoothed length).
    """
    history = [np.asarray(h) for h in history]
    if not history:
        raise ValueError("need at least one snapshot")
    full = len(history[0])
    sub = full - n_subarrays + 1 if subarray_length is None else int(subarray_length)
    if sub < 2 or sub + n_subarrays - 1 > full:
        raise ValueError("subarray too short for this smoothing factor")
    cov = np.zeros((full, full), dtype=complex)
    for h in history:
        cov += np.outer(h, h.conj())
    cov /= len(history)
    out = np.zeros((sub, sub), dtype=complex)
    for s in range(n_subarrays):
        out += cov[s:s + sub, s:s + sub]
    out /= n_subarrays
    return 0.5 * (out + out.conj().T)


def music_estimate(cov: np.ndarray, n_sources: int = 1,
                   grid_step: float = math.radians(0.5),
                   rank_fraction: float = 0.05,
                   timestamp: float = 0.0) -> AoAEstimate:
    """Subspace bearing estimate on the virtual linear manifold.

    The noise subspace is everything beyond the dominant eigenvalues; the
    signal rank is at least n_sources and grows when secondary eigenvalues
    exceed rank_fraction of the largest (decorrelated multipath shows up
    there after smoothing). The grid argmax is refined by fitting a
    parabola through the peak and its circular neighbors.
    """
    cov = np.asarray(cov)
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance contains non-finite entries")
    dim = cov.shape[0]
    if n_sources >= dim:
        raise ValueError("n_sources must be below the covariance dimension")
    evals, evecs = np.linalg.eigh(cov)
    lam_max = max(float(evals[-1]), 0.0)
    rank = max(n_sources, int(np.sum(evals >= rank_fraction * lam_max))) if lam_max > 0 else n_sources
    rank = min(rank, dim - 1)
    noise = evecs[:, : dim - rank]

    grid = np.arange(-np.pi, np.pi, grid_step)
    manifold = np.exp(1j * np.outer(np.arange(dim), grid))
    power = np.sum(np.abs(noise.conj().T @ manifold) ** 2, axis=0)
    spectrum = 1.0 / np.maximum(power, 1e-300)

    peak = int(np.argmax(spectrum))
    n = len(grid)
    p0, p1, p2 = spectrum[(peak - 1) % n], spectrum[peak], spectrum[(peak + 1) % n]
    curv = p0 - 2.0 * p1 + p2
    offset = 0.0 if curv == 0.0 else 0.5 * (p0 - p2) / curv
    azimuth = float(wrap_angle(grid[peak] + offset * grid_step))
    confidence = float(spectrum[peak] / np.mean(spectrum))
    return AoAEstimate(azimuth=azimuth, confidence=confidence, timestamp=timestamp)


def median_filter3(history) -> float:
    """Circular median of the last (up to) three azimuths.

    With fewer than three entries the most recent raw value passes through.
    """
    history = list(history)
    if not history:
        raise ValueError("empty history")
    if len(history) < 3:
        return float(wrap_angle(history[-1]))
    return circular_median(history[-3:])


class AoaEstimator:
    """Stateful AoA chain at the sensor update rate.

    Holds the sliding covariance window and median-filter history, and
    applies a manifold calibration correction: the beamspace mapping of a
    finite ring leaks neighboring phase modes (Bessel aliasing), which
    biases the spectral peak by up to ~1.4 deg in a known, purely
    geometric pattern. The correction table is computed at construction by
    pushing noiseless steering vectors through the exact chain, exploiting
    the ring's rotational symmetry.
    """

    CAL_STEP_DEG = 0.25

    def __init__(self, cfg: RfConfig = RfConfig(), smoothing: bool | None = None,
                 subarray_length: int | None = None):
        self.cfg = cfg
        self.geom = ArrayGeometry(cfg.ring_count, cfg.carrier_freq_hz)
        self.transform = PhaseModeTransform(self.geom, cfg.mode_order)
        self.n_subarrays = cfg.n_subarrays if (smoothing is None or smoothing) else 1
        self.subarray_length = subarray_length
        self._beam_window: list[np.ndarray] = []
        self._median_history: list[float] = []
        self._period = 2.0 * np.pi / cfg.ring_count
        self._cal_true, self._cal_raw = self._build_calibration()

    def _raw_estimate(self, cov: np.ndarray, timestamp: float) -> AoAEstimate:
        return music_estimate(
            cov,
            n_sources=1,
            grid_step=math.radians(self.cfg.grid_step_deg),
            rank_fraction=self.cfg.rank_fraction,
            timestamp=timestamp,
        )

    def _build_calibration(self):
        """Noiseless single-source bias over one symmetry period."""
        step = math.radians(self.CAL_STEP_DEG)
        true = np.arange(0.0, self._period, step)
        raw = np.empty_like(true)
        for i, theta in enumerate(true):
            b = self.transform.apply(steering_vector(self.geom, theta))
            cov = smoothed_covariance([b], self.n_subarrays, self.subarray_length)
            est = self._raw_estimate(cov, 0.0)
            raw[i] = theta + float(wrap_angle(est.azimuth - theta))
        if np.any(np.diff(raw) <= 0):
            raise RuntimeError("calibration map not monotone; manifold too aliased")
        return true, raw

    def _correct(self, raw_azimuth: float) -> float:
        period = self._period
        k = math.floor(raw_azimuth / period)
        frac = raw_azimuth - k * period
        raw_tab = np.concatenate([self._cal_raw - period, self._cal_raw, self._cal_raw + period])
        true_tab = np.concatenate([self._cal_true - period, self._cal_true, self._cal_true + period])
        corrected = float(np.interp(frac, raw_tab, true_tab))
        return float(wrap_angle(corrected + k * period))

    def reset(self):
        self._beam_window.clear()
        self._median_history.clear()

    def _disambiguate(self, cov: np.ndarray, azimuth: float) -> float:
        """Prefer the stronger propagation path when the spectrum shows a
        competing peak.

        A decorrelated reflection produces its own subspace peak whose
        height (an orthogonality measure) says nothing about amplitude; the
        beacon's direct path is identified by beamformed power on the
        unsmoothed full-length covariance.
        """
        dim = cov.shape[0]
        evals, evecs = np.linalg.eigh(cov)
        lam_max = max(float(evals[-1]), 0.0)
        if lam_max <= 0.0:
            return azimuth
        rank = max(1, int(np.sum(evals >= self.cfg.rank_fraction * lam_max)))
        rank = min(rank, dim - 1)
        if rank < 2:
            return azimuth
        noise = evecs[:, : dim - rank]
        step = math.radians(self.cfg.grid_step_deg)
        grid = np.arange(-np.pi, np.pi, step)
        manifold = np.exp(1j * np.outer(np.arange(dim), grid))
        spectrum = 1.0 / np.maximum(
            np.sum(np.abs(noise.conj().T @ manifold) ** 2, axis=0), 1e-300)
        local_max = (spectrum > np.roll(spectrum, 1)) & (spectrum >= np.roll(spectrum, -1))
        peaks = np.flatnonzero(local_max)
        if len(peaks) < 2:
            return azimuth
        peaks = peaks[np.argsort(spectrum[peaks])[::-1][:2]]
        if spectrum[peaks[1]] < 0.25 * spectrum[peaks[0]]:
            return azimuth
        full = np.zeros((self.transform.output_length,) * 2, dtype=complex)
        for h in self._beam_window:
            full += np.outer(h, h.conj())
        modes = np.arange(self.transform.output_length)
        powers = []
        candidates = []
        for p in peaks:
            theta = self._refine_peak(spectrum, p, grid, step)
            v = np.exp(1j * modes * theta)
            powers.append(float(np.real(v.conj() @ full @ v)))
            candidates.append(theta)
        if powers[1] > 1.3 * powers[0]:
            return candidates[1]
        return float(wrap_angle(candidates[0]))

    @staticmethod
    def _refine_peak(spectrum, peak, grid, step) -> float:
        n = len(grid)
        p0, p1, p2 = spectrum[(peak - 1) % n], spectrum[peak], spectrum[(peak + 1) % n]
        curv = p0 - 2.0 * p1 + p2
        offset = 0.0 if curv == 0.0 else 0.5 * (p0 - p2) / curv
        return float(wrap_angle(grid[peak] + offset * step))

    def process(self, snap: IQSnapshot) -> AoAEstimate:
        """Consume one snapshot, return the filtered bearing estimate."""
        snap.validate(self.geom.ring_count)
        aligned = align_tdm(snap)
        beam = self.transform.apply(aligned)
        self._beam_window.append(beam)
        if len(self._beam_window) > self.cfg.covariance_window:
            self._beam_window.pop(0)
        cov = smoothed_covariance(self._beam_window, self.n_subarrays,
                                  self.subarray_length)
        raw = self._raw_estimate(cov, snap.timestamp)
        raw_azimuth = self._disambiguate(cov, raw.azimuth)
        azimuth = self._correct(raw_azimuth)
        self._median_history.append(azimuth)
        if len(self._median_history) > 3:
            self._median_history.pop(0)
        filtered = median_filter3(self._median_history)
        return AoAEstimate(
            azimuth=filtered,
            confidence=raw.confidence,
            timestamp=snap.timestamp,
            low_confidence=raw.confidence < self.cfg.confidence_threshold,
        )

    def dump_pseudospectrum(self, cov: np.ndarray, path: str):
        """Write (theta_deg, power) CSV rows for offline inspection."""
        dim = cov.shape[0]
        evals, evecs = np.linalg.eigh(cov)
        noise = evecs[:, : dim - 1]
        grid = np.arange(-np.pi, np.pi, math.radians(self.cfg.grid_step_deg))
        manifold = np.exp(1j * np.outer(np.arange(dim), grid))
        power = 1.0 / np.maximum(np.sum(np.abs(noise.conj().T @ manifold) ** 2, axis=0), 1e-300)
        with open(path, "w") as fh:
            fh.write("theta_deg,power\n")
            for theta, p in zip(np.degrees(grid), power):
                fh.write(f"{float(theta)!r},{float(p)!r}\n")
