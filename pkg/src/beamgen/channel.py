"""Synthetic multibeam satellite user-link channel model.

Builds complex feed-to-user gain matrices for an array-fed reflector
payload, applies per-user rain fading, and estimates the nominal channel
(entrywise mean, Frobenius uncertainty radius and an eigendecomposition
cache of the mean Gram matrix) from a calibration ensemble.

Conventions: angles are small-offset coordinates in radians on the
satellite-centred angular plane, positions are (x, y) pairs, all physical
quantities are SI. The channel matrix is num_feeds x num_beams with one
user per beam; column k belongs to the user served in beam k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s
BOLTZMANN = 1.380649e-23  # J/K


class ChannelModelError(ValueError):
    """Inconsistent channel-model input (dimensions, signs, probabilities)."""


def hex_lattice(count: int, spacing: float) -> np.ndarray:
    """Return the first `count` sites of a hexagonal lattice, centre first.

    Sites are enumerated ring by ring; each ring starts at its "west"
    corner and walks counter-clockwise. The enumeration is deterministic,
    so truncating at `count` always yields the same layout.

    Returns an array of shape (count, 2).
    """
    if count < 1:
        raise ChannelModelError("lattice needs at least one site")
    if spacing <= 0:
        raise ChannelModelError("lattice spacing must be positive")
    dirs = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)]
    axial = [(0, 0)]
    ring = 1
    while len(axial) < count:
        q, r = -ring, ring
        for d in dirs:
            for _ in range(ring):
                axial.append((q, r))
                q, r = q + d[0], r + d[1]
        ring += 1
    pts = np.empty((count, 2))
    for i, (q, r) in enumerate(axial[:count]):
        pts[i, 0] = spacing * (q + 0.5 * r)
        pts[i, 1] = spacing * (math.sqrt(3.0) / 2.0) * r
    return pts


@dataclass(frozen=True)
class RfParams:
    """RF constants of the user link; the gain entries are noise-normalized."""

    carrier_freq: float  # Hz
    bandwidth: float  # Hz
    rx_antenna_gain: float  # linear amplitude; squared value is the power gain
    rx_noise_temp: float  # K
    boltzmann: float = BOLTZMANN  # J/K
    fl_scale: float = 1.0  # forward/return frequency rescaling, fixed at 1
    use_phase: bool = False  # apply path-length phase to the gain columns

    def __post_init__(self) -> None:
        for name in ("carrier_freq", "bandwidth", "rx_antenna_gain",
                     "rx_noise_temp", "boltzmann", "fl_scale"):
            if not getattr(self, name) > 0:
                raise ChannelModelError(f"{name} must be strictly positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq


@dataclass(frozen=True)
class BeamGeometry:
    """Feed and beam layout of the payload antenna.

    feed_positions : (N, 2) feed boresights [rad]
    beam_centers   : (K, 2) beam centres [rad], K < N
    beam_radius    : beam disc radius [rad]
    feed_pattern_width : 3 dB half-width of the feed pattern [rad]
    orbit_altitude : satellite altitude used for slant ranges [m]
    """

    feed_positions: np.ndarray
    beam_centers: np.ndarray
    beam_radius: float
    feed_pattern_width: float
    orbit_altitude: float

    def __post_init__(self) -> None:
        feeds = np.asarray(self.feed_positions, dtype=float)
        beams = np.asarray(self.beam_centers, dtype=float)
        if feeds.ndim != 2 or feeds.shape[1] != 2:
            raise ChannelModelError("feed_positions must have shape (N, 2)")
        if beams.ndim != 2 or beams.shape[1] != 2:
            raise ChannelModelError("beam_centers must have shape (K, 2)")
        if beams.shape[0] >= feeds.shape[0]:
            raise ChannelModelError("need fewer beams than feeds (K < N)")
        if not self.beam_radius > 0:
            raise ChannelModelError("beam_radius must be positive")
        if not self.feed_pattern_width > 0:
            raise ChannelModelError("feed_pattern_width must be positive")
        if not self.orbit_altitude > 0:
            raise ChannelModelError("orbit_altitude must be positive")
        object.__setattr__(self, "feed_positions", feeds)
        object.__setattr__(self, "beam_centers", beams)

    @property
    def num_feeds(self) -> int:
        return self.feed_positions.shape[0]

    @property
    def num_beams(self) -> int:
        return self.beam_centers.shape[0]


def make_hex_geometry(num_feeds: int,
                      num_beams: int,
                      beam_spacing: float,
                      beam_radius: float,
                      feed_pattern_width: float,
                      orbit_altitude: float,
                      feed_spacing: float | None = None) -> BeamGeometry:
    """Hexagonal beam lattice with feeds on a finer hexagonal lattice.

    The feed lattice is denser than the beam lattice (multiple feeds per
    beam); by default its spacing is beam_spacing * sqrt(K / N) so the two
    lattices cover a similar footprint.
    """
    if feed_spacing is None:
        feed_spacing = beam_spacing * math.sqrt(num_beams / num_feeds)
    return BeamGeometry(
        feed_positions=hex_lattice(num_feeds, feed_spacing),
        beam_centers=hex_lattice(num_beams, beam_spacing),
        beam_radius=beam_radius,
        feed_pattern_width=feed_pattern_width,
        orbit_altitude=orbit_altitude,
    )


@dataclass(frozen=True)
class FadingParams:
    """Per-beam rain fading: Bernoulli occurrence, lognormal depth in dB.

    mean_db and std_db are the mean and standard deviation of the rain
    attenuation in dB (moment-matched to the underlying lognormal).
    """

    mean_db: float = 2.0
    std_db: float = 1.0
    rain_prob: float = 0.2

    def __post_init__(self) -> None:
        if self.std_db < 0:
            raise ChannelModelError("std_db must be nonnegative")
        if not 0.0 <= self.rain_prob <= 1.0:
            raise ChannelModelError("rain_prob must lie in [0, 1]")
        if self.rain_prob > 0 and not self.mean_db > 0:
            raise ChannelModelError("mean_db must be positive when it can rain")

    def log_params(self) -> tuple[float, float]:
        """(mu, sigma) of ln(attenuation_dB); sigma = 0 means deterministic."""
        if self.std_db == 0.0:
            return math.log(self.mean_db), 0.0
        sigma2 = math.log(1.0 + (self.std_db / self.mean_db) ** 2)
        mu = math.log(self.mean_db) - 0.5 * sigma2
        return mu, math.sqrt(sigma2)


@dataclass(frozen=True)
class UserDrop:
    """One random user placement: K angular positions and slant ranges."""

    positions: np.ndarray  # (K, 2) rad
    distances: np.ndarray  # (K,) m

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        dist = np.asarray(self.distances, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or dist.shape != (pos.shape[0],):
            raise ChannelModelError("positions must be (K, 2) with K distances")
        if np.any(dist <= 0):
            raise ChannelModelError("user distances must be strictly positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "distances", dist)


@dataclass(frozen=True)
class GainMatrix:
    """Feed-to-user gain matrix (num_feeds x num_beams), complex."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim != 2:
            raise ChannelModelError("gain matrix must be 2-D")
        if not np.all(np.isfinite(vals)):
            raise ChannelModelError("gain matrix entries must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class FadingDiag:
    """Diagonal of the per-user fading matrix, amplitude domain."""

    values: np.ndarray  # (K,) strictly positive

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or np.any(vals <= 0):
            raise ChannelModelError("fading diagonal must be 1-D and positive")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class Channel:
    """User-link channel matrix (num_feeds x num_beams)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))


@dataclass(frozen=True)
class NominalChannel:
    """Mean channel with uncertainty radius and eigendecomposition cache.

    eig_vectors / eig_values cache the eigendecomposition of mean @ mean^H
    (eigenvalues sorted descending, eigenvector phases fixed so the
    largest-magnitude entry of each column is real positive).
    """

    mean: np.ndarray  # (N, K)
    alpha: float  # Frobenius uncertainty radius
    eig_vectors: np.ndarray  # (N, N) unitary
    eig_values: np.ndarray  # (N,) nonnegative, descending
    rank: int

    @property
    def num_feeds(self) -> int:
        return self.mean.shape[0]

    @property
    def num_beams(self) -> int:
        return self.mean.shape[1]


@dataclass(frozen=True)
class PerturbationSample:
    """A channel deviation draw and its Frobenius norm."""

    delta: np.ndarray
    norm: float


def build_gain_matrix(geometry: BeamGeometry, drop: UserDrop,
                      rf: RfParams) -> GainMatrix:
    """Evaluate the feed-to-user gains for one user drop.

    Entry (n, k) is G_R * a_kn / (4 pi (d_k / lambda) sqrt(K_B T_R B_W))
    where a_kn is a Gaussian feed pattern of the angle between feed n's
    boresight and user k, equal to 1/2 at the 3 dB half-width. When
    rf.use_phase is set, column k additionally carries the path-length
    phase exp(-2j pi d_k / lambda).
    """
    if drop.positions.shape[0] != geometry.num_beams:
        raise ChannelModelError("drop has the wrong number of users")
    offsets = drop.positions[None, :, :] - geometry.feed_positions[:, None, :]
    theta = np.hypot(offsets[..., 0], offsets[..., 1])  # (N, K)
    a = np.exp(-math.log(2.0) * (theta / geometry.feed_pattern_width) ** 2)
    noise = math.sqrt(rf.boltzmann * rf.rx_noise_temp * rf.bandwidth)
    denom = 4.0 * math.pi * (drop.distances / rf.wavelength) * noise
    values = (rf.rx_antenna_gain * a / denom[None, :]).astype(complex)
    if rf.use_phase:
        values = values * np.exp(-2j * math.pi * drop.distances / rf.wavelength)[None, :]
    return GainMatrix(values=values, normalized=False)


def normalize_gain(gain: GainMatrix, variances: np.ndarray) -> GainMatrix:
    """Divide each entry by its ensemble standard deviation.

    `variances` holds the per-entry variance over the generating ensemble.
    Normalizing an already-normalized matrix is a no-op.
    """
    if gain.normalized:
        return gain
    var = np.asarray(variances, dtype=float)
    if var.shape != gain.values.shape:
        raise ChannelModelError("variance stats do not match the gain shape")
    if np.any(var <= 0):
        raise ChannelModelError("zero-variance entry; cannot normalize")
    return GainMatrix(values=gain.values / np.sqrt(var), normalized=True)


def sample_fading(num_beams: int, fading: FadingParams,
                  rng: np.random.Generator) -> FadingDiag:
    """Draw the per-user fading diagonal (amplitude domain).

    Each entry is 1 (clear sky) with probability 1 - rain_prob; otherwise
    10^(-A/20) with the attenuation A in dB drawn lognormally.
    """
    raining = rng.random(num_beams) < fading.rain_prob
    values = np.ones(num_beams)
    n_rain = int(np.count_nonzero(raining))
    if n_rain:
        mu, sigma = fading.log_params()
        if sigma == 0.0:
            atten_db = np.full(n_rain, fading.mean_db)
        else:
            atten_db = rng.lognormal(mu, sigma, size=n_rain)
        values[raining] = 10.0 ** (-atten_db / 20.0)
    return FadingDiag(values=values)


def assemble_channel(gain: GainMatrix, fading: FadingDiag) -> Channel:
    """Form the channel by scaling gain column k with fading entry k."""
    if not gain.normalized:
        raise ChannelModelError("assemble_channel expects a normalized gain matrix")
    if fading.values.shape[0] != gain.values.shape[1]:
        raise ChannelModelError("fading diagonal does not match the beam count")
    return Channel(values=gain.values * fading.values[None, :])


def sample_user_drop(geometry: BeamGeometry,
                     rng: np.random.Generator) -> UserDrop:
    """Place one user uniformly inside each beam disc.

    Slant ranges follow the boresight geometry: altitude / cos(offset from
    nadir).
    """
    k = geometry.num_beams
    radii = geometry.beam_radius * np.sqrt(rng.random(k))
    angles = rng.uniform(0.0, 2.0 * math.pi, size=k)
    positions = geometry.beam_centers + np.stack(
        [radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    off_nadir = np.hypot(positions[:, 0], positions[:, 1])
    distances = geometry.orbit_altitude / np.cos(off_nadir)
    return UserDrop(positions=positions, distances=distances)


def fix_column_phases(u: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    out = np.array(u, dtype=complex)
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        pivot = out[i, j]
        mag = abs(pivot)
        if mag > 0:
            out[:, j] *= pivot.conjugate() / mag
    return out


def hermitian_eig_descending(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian PSD matrix, descending order.

    Returns (eigenvalues, eigenvectors) with tiny negative eigenvalues
    clipped to zero and deterministic column phases.
    """
    zh = 0.5 * (z + z.conj().T)
    vals, vecs = np.linalg.eigh(zh)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    top = max(vals[0], 0.0)
    if vals[-1] < -1e-10 * max(top, 1.0):
        raise ChannelModelError("matrix is not positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    return vals, fix_column_phases(vecs)


def estimate_nominal(ensemble: list[Channel],
                     alpha_mode: str = "max",
                     quantile: float = 0.9) -> NominalChannel:
    """Estimate the nominal channel from a calibration ensemble.

    The mean is entrywise; the uncertainty radius is the maximum (or the
    requested quantile) of the Frobenius deviations from the mean.
    """
    if not ensemble:
        raise ChannelModelError("calibration ensemble is empty")
    stack = np.stack([ch.values for ch in ensemble])
    mean = stack.mean(axis=0)
    devs = np.linalg.norm(stack - mean[None, :, :], axis=(1, 2))
    if alpha_mode == "max":
        alpha = float(devs.max())
    elif alpha_mode == "quantile":
        if not 0.0 < quantile <= 1.0:
            raise ChannelModelError("quantile must lie in (0, 1]")
        alpha = float(np.quantile(devs, quantile))
    else:
        raise ChannelModelError(f"unknown alpha_mode {alpha_mode!r}")
    vals, vecs = hermitian_eig_descending(mean @ mean.conj().T)
    k = mean.shape[1]
    tol = vals[0] * 1e-12
    rank = int(min(k, np.count_nonzero(vals > tol)))
    return NominalChannel(mean=mean, alpha=alpha, eig_vectors=vecs,
                          eig_values=vals, rank=rank)


def sample_delta_ball(shape: tuple[int, int], alpha: float,
                      rng: np.random.Generator) -> PerturbationSample:
    """Draw a complex matrix uniformly from the Frobenius ball of radius alpha."""
    if alpha < 0:
        raise ChannelModelError("ball radius must be nonnegative")
    dim = 2 * shape[0] * shape[1]
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    radius = alpha * rng.random() ** (1.0 / dim)
    w = radius * v
    half = shape[0] * shape[1]
    delta = (w[:half] + 1j * w[half:]).reshape(shape)
    return PerturbationSample(delta=delta, norm=float(np.linalg.norm(delta)))
