"""Fixed beam-generation matrix designs for the payload.

All designs produce a K x N matrix B with orthonormal rows (B B^H = I_K),
mapping the N feed signals to the K feeder-link signals. Four designs are
provided:

* reference: geographic weighting of feeds per beam, then row
  orthonormalization;
* adaptive: top-K left singular vectors of a concrete channel draw
  (the channel-matched optimum, not realizable with a fixed payload);
* robust: top-K eigenvectors of the nominal Gram matrix mean @ mean^H,
  which minimizes a worst-case surrogate of the sum MSE over a Frobenius
  uncertainty ball and is the same for both link directions;
* perturbation_aware: the robust design computed on eigenvectors corrected
  to first order for an estimated Gram-matrix perturbation.

The worst-case surrogate subtracts a robustness margin from the nominal
eigenvalues and clips at zero; the margin is 2 * alpha * (largest singular
value of the mean channel). When the margin would wipe out any of the
top-K eigenvalues, alpha is bisected down until the clipped spectrum stays
strictly positive on the top-K block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .channel import NominalChannel, BeamGeometry, fix_column_phases

ORTHONORMALITY_TOL = 1e-10
# relative eigen-gap below which the first-order correction is rejected
EIGEN_GAP_RTOL = 1e-8

DESIGN_KINDS = ("reference", "adaptive", "robust", "perturbation_aware")


class DesignError(ValueError):
    """Base class for beam-design failures."""


class RankDeficiencyError(DesignError):
    """The channel or nominal mean does not carry K independent directions."""


class InfeasibleAlphaError(DesignError):
    """No uncertainty radius keeps the clipped surrogate spectrum positive."""


class DegenerateGeometryError(DesignError):
    """Two beams map to (numerically) identical feed-weight rows."""


class EigenGapError(DesignError):
    """Eigenvalues too close for a stable first-order eigenvector correction."""


@dataclass(frozen=True)
class BeamMatrix:
    """K x N beam-generation matrix with orthonormal rows."""

    values: np.ndarray
    design_kind: str

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim != 2 or vals.shape[0] >= vals.shape[1]:
            raise DesignError("beam matrix must be K x N with K < N")
        if self.design_kind not in DESIGN_KINDS:
            raise DesignError(f"unknown design kind {self.design_kind!r}")
        object.__setattr__(self, "values", vals)

    @property
    def num_beams(self) -> int:
        return self.values.shape[0]

    @property
    def num_feeds(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RobustSurrogate:
    """Clipped worst-case replacement of the channel Gram matrix.

    z_breve is Hermitian PSD; epsilon_h = 2 * alpha_used * (largest
    singular value of the nominal mean); alpha_clamped records whether the
    requested radius had to be reduced for feasibility.
    """

    z_breve: np.ndarray
    epsilon_h: float
    alpha_used: float
    alpha_clamped: bool


@dataclass(frozen=True)
class EigPerturbation:
    """First-order eigenvector correction of the nominal Gram matrix.

    delta_u is N x r; r_matrix holds the in-subspace mixing coefficients;
    d_weights carries the reciprocal eigenvalue gaps 1/(lambda_f -
    lambda_g) with a zero diagonal.
    """

    delta_u: np.ndarray
    r_matrix: np.ndarray
    d_weights: np.ndarray


def check_orthonormal(b: BeamMatrix | np.ndarray) -> float:
    """Max-norm deviation of B B^H from the identity."""
    values = b.values if isinstance(b, BeamMatrix) else np.asarray(b)
    gram = values @ values.conj().T
    return float(np.max(np.abs(gram - np.eye(values.shape[0]))))


def orthonormalize_rows(m: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Sequential projection-and-normalize of the rows of m.

    Raises DegenerateGeometryError when a row is numerically inside the
    span of the previous ones (residual below rtol times its norm).
    """
    out = np.array(m, dtype=complex)
    for i in range(out.shape[0]):
        original = np.linalg.norm(out[i])
        for j in range(i):
            out[i] -= (out[j].conj() @ out[i]) * out[j]
        # second pass for numerical orthogonality
        for j in range(i):
            out[i] -= (out[j].conj() @ out[i]) * out[j]
        residual = np.linalg.norm(out[i])
        if original == 0.0 or residual < rtol * original:
            raise DegenerateGeometryError(
                f"row {i} is linearly dependent on the previous rows")
        out[i] /= residual
    return out


def design_reference(geometry: BeamGeometry) -> BeamMatrix:
    """Geographic baseline: per-beam Gaussian feed weights, orthonormalized.

    Row k weights feed n by a Gaussian of the angular distance between
    beam k's centre and feed n's boresight (same width as the feed
    pattern), then rows are orthonormalized in beam order.
    """
    offsets = geometry.beam_centers[:, None, :] - geometry.feed_positions[None, :, :]
    theta = np.hypot(offsets[..., 0], offsets[..., 1])  # (K, N)
    weights = np.exp(-np.log(2.0) * (theta / geometry.feed_pattern_width) ** 2)
    rows = orthonormalize_rows(weights.astype(complex))
    return BeamMatrix(values=rows, design_kind="reference")


def design_adaptive(channel_values: np.ndarray) -> BeamMatrix:
    """Channel-matched design: conjugate-transposed top-K left singular vectors.

    Requires the N x K channel to have full column rank; achieves the
    on-ground sum MSE exactly, but needs a payload update per channel
    realization.
    """
    h = np.asarray(channel_values, dtype=complex)
    n, k = h.shape
    u, s, _ = np.linalg.svd(h, full_matrices=False)
    tol = max(n, k) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if s.size < k or np.any(s <= tol):
        raise RankDeficiencyError("channel has fewer than K usable directions")
    return BeamMatrix(values=fix_column_phases(u).conj().T, design_kind="adaptive")


def robustness_margin(nominal: NominalChannel) -> float:
    """Spectral margin 2 * alpha * (largest singular value of the mean)."""
    return 2.0 * nominal.alpha * float(np.sqrt(nominal.eig_values[0]))


def _top_k_feasible(eig_values: np.ndarray, k: int, alpha: float,
                    sigma_max: float) -> bool:
    return bool(eig_values[k - 1] - 2.0 * alpha * sigma_max > 0.0)


def robust_surrogate(nominal: NominalChannel) -> RobustSurrogate:
    """Worst-case surrogate Gram matrix with feasibility clamping.

    Subtracts the robustness margin from the cached eigenvalues and clips
    negatives at zero. If that would zero out any of the top-K
    eigenvalues, the radius is bisected down until the top-K block stays
    strictly positive and the clamped radius is reported.
    """
    k = nominal.num_beams
    vals = nominal.eig_values
    sigma_max = float(np.sqrt(vals[0]))
    if sigma_max == 0.0:
        raise InfeasibleAlphaError("nominal mean is zero; no feasible radius")
    if vals[k - 1] <= 0.0:
        raise RankDeficiencyError("nominal Gram matrix has rank below K")
    alpha = float(nominal.alpha)
    clamped = False
    if alpha > 0.0 and not _top_k_feasible(vals, k, alpha, sigma_max):
        lo, hi = 0.0, alpha
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _top_k_feasible(vals, k, mid, sigma_max):
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * alpha:
                break
        alpha = lo
        clamped = True
    eps_h = 2.0 * alpha * sigma_max
    clipped = np.clip(vals - eps_h, 0.0, None)
    u = nominal.eig_vectors
    z = (u * clipped[None, :]) @ u.conj().T
    z = 0.5 * (z + z.conj().T)
    return RobustSurrogate(z_breve=z, epsilon_h=eps_h, alpha_used=alpha,
                           alpha_clamped=clamped)


def design_robust(nominal: NominalChannel) -> BeamMatrix:
    """Worst-case design: conjugate-transposed top-K nominal eigenvectors.

    Minimizes the surrogate objective for every positive link SNR and
    every positive forward power, and does not depend on the uncertainty
    radius.
    """
    k = nominal.num_beams
    if nominal.eig_values[k - 1] <= 0.0 or nominal.rank < k:
        raise RankDeficiencyError("nominal Gram matrix has rank below K")
    b = nominal.eig_vectors[:, :k].conj().T
    return BeamMatrix(values=b, design_kind="robust")


def eig_perturb_first_order(nominal: NominalChannel,
                            delta_z: np.ndarray) -> EigPerturbation:
    """First-order correction of the top-r eigenvectors of the nominal Gram.

    For a Hermitian perturbation delta_z of mean @ mean^H, the correction
    mixes the signal-space eigenvectors through reciprocal eigenvalue gaps
    and adds the null-space leakage scaled by the inverse eigenvalues. The
    top-r eigenvalues must be simple; the error of the corrected
    eigenvectors is quadratic in the perturbation size.
    """
    r = nominal.rank
    if r < 1:
        raise RankDeficiencyError("nominal Gram matrix has rank zero")
    dz = np.asarray(delta_z, dtype=complex)
    n = nominal.num_feeds
    if dz.shape != (n, n):
        raise DesignError("perturbation must be N x N")
    lam = nominal.eig_values[:r]
    off = ~np.eye(r, dtype=bool)
    diff = lam[None, :] - lam[:, None]  # entry (g, f) = lambda_f - lambda_g
    if r > 1 and np.min(np.abs(diff[off])) < EIGEN_GAP_RTOL * nominal.eig_values[0]:
        raise EigenGapError("top eigenvalues are too close for a stable correction")
    u_s = nominal.eig_vectors[:, :r]
    u_n = nominal.eig_vectors[:, r:]
    d_weights = np.zeros((r, r))
    d_weights[off] = 1.0 / diff[off]
    # same reciprocal gaps on the symmetrized sandwich: the eigenvalue-sum
    # factor it introduces must be divided out to stay first-order exact
    sq_diff = lam[None, :] ** 2 - lam[:, None] ** 2
    w = np.zeros((r, r))
    w[off] = 1.0 / sq_diff[off]
    c = u_s.conj().T @ dz @ u_s
    sandwich = c * lam[None, :] + lam[:, None] * c.conj().T
    r_matrix = w * sandwich
    leakage = u_n @ (u_n.conj().T @ dz @ u_s) / lam[None, :]
    delta_u = u_s @ r_matrix + leakage
    return EigPerturbation(delta_u=delta_u, r_matrix=r_matrix,
                           d_weights=d_weights)


def empirical_gram_perturbation(nominal: NominalChannel,
                                ensemble: list | np.ndarray,
                                epsilon_h: float) -> np.ndarray:
    """Estimate the Gram-matrix perturbation from a channel ensemble.

    Averages mean @ delta^H + delta @ mean^H + delta @ delta^H over the
    ensemble deviations, keeps the Hermitian part, and rescales the result
    to Frobenius norm epsilon_h.
    """
    mean = nominal.mean
    acc = np.zeros((nominal.num_feeds, nominal.num_feeds), dtype=complex)
    count = 0
    for ch in ensemble:
        values = ch.values if hasattr(ch, "values") else np.asarray(ch)
        delta = values - mean
        acc += mean @ delta.conj().T + delta @ mean.conj().T + delta @ delta.conj().T
        count += 1
    if count == 0:
        raise DesignError("empirical perturbation needs a nonempty ensemble")
    acc /= count
    acc = 0.5 * (acc + acc.conj().T)
    norm = float(np.linalg.norm(acc))
    if norm == 0.0 or epsilon_h == 0.0:
        return np.zeros_like(acc)
    return acc * (epsilon_h / norm)


def design_perturbation_aware(nominal: NominalChannel,
                              dz_mode: str = "empirical",
                              ensemble: list | np.ndarray | None = None) -> BeamMatrix:
    """Robust design on first-order-corrected eigenvectors.

    dz_mode selects the Gram perturbation surrogate: "empirical" estimates
    it from a calibration ensemble (required argument), "literal" uses a
    scaled identity, whose correction vanishes identically, reproducing
    the plain robust design. Degenerate nominal spectra fall back to the
    robust design with a warning.
    """
    surrogate = robust_surrogate(nominal)
    k = nominal.num_beams
    if dz_mode == "literal":
        dz = surrogate.epsilon_h * np.eye(nominal.num_feeds)
    elif dz_mode == "empirical":
        if ensemble is None:
            raise DesignError("empirical mode needs a calibration ensemble")
        dz = empirical_gram_perturbation(nominal, ensemble, surrogate.epsilon_h)
    else:
        raise DesignError(f"unknown dz_mode {dz_mode!r}")
    try:
        pert = eig_perturb_first_order(nominal, dz)
    except EigenGapError:
        warnings.warn("degenerate nominal spectrum; falling back to the "
                      "plain robust design", RuntimeWarning, stacklevel=2)
        return BeamMatrix(values=design_robust(nominal).values,
                          design_kind="perturbation_aware")
    u_hat = nominal.eig_vectors[:, :nominal.rank] + pert.delta_u
    if u_hat.shape[1] < k:
        raise RankDeficiencyError("corrected eigenbasis has rank below K")
    rows = orthonormalize_rows(u_hat[:, :k].conj().T)
    return BeamMatrix(values=rows, design_kind="perturbation_aware")


def save_beam_matrix(path, b: BeamMatrix, alpha: float = 0.0,
                     epsilon_h: float = 0.0,
                     alpha_clamped: bool = False) -> None:
    """Write a beam matrix file: metadata header plus re,im rows.

    Values are printed with 17 significant digits so that reloading
    reproduces the exact binary floats.
    """
    k, n = b.values.shape
    lines = [
        "# beamgen matrix v1",
        f"kind={b.design_kind}",
        f"N={n}",
        f"K={k}",
        f"alpha={alpha:.17g}",
        f"epsilon_h={epsilon_h:.17g}",
        f"alpha_clamped={'true' if alpha_clamped else 'false'}",
    ]
    for row in b.values:
        parts = []
        for z in row:
            parts.append(f"{z.real:.17g}")
            parts.append(f"{z.imag:.17g}")
        lines.append(",".join(parts))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_beam_matrix(path) -> tuple[BeamMatrix, dict]:
    """Read a beam matrix file written by save_beam_matrix."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise DesignError("missing beam matrix header")
    meta: dict = {}
    body_start = 1
    for i, line in enumerate(lines[1:], start=1):
        if "=" not in line:
            body_start = i
            break
        key, _, value = line.partition("=")
        meta[key] = value
        body_start = i + 1
    n = int(meta["N"])
    k = int(meta["K"])
    rows = []
    for line in lines[body_start:body_start + k]:
        nums = [float(tok) for tok in line.split(",")]
        if len(nums) != 2 * n:
            raise DesignError("row length does not match the declared N")
        arr = np.asarray(nums)
        rows.append(arr[0::2] + 1j * arr[1::2])
    if len(rows) != k:
        raise DesignError("row count does not match the declared K")
    meta["alpha"] = float(meta["alpha"])
    meta["epsilon_h"] = float(meta["epsilon_h"])
    meta["alpha_clamped"] = meta["alpha_clamped"] == "true"
    return BeamMatrix(values=np.stack(rows), design_kind=meta["kind"]), meta
