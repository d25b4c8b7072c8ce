"""Gateway-side linear processing for both link directions.

Return link: linear MMSE detection of the K user signals from the K
beam-domain observations; the per-user mean square errors are the diagonal
of (I + beta H^H B^H B H)^-1 and the post-detection SINR of user i is
1/MSE_ii - 1.

Forward link: regularized zero-forcing precoding with ridge K/P_FL and a
scaling chosen so the precoder consumes exactly the power budget; per-user
SINR follows from the effective end-to-end matrix with unit-variance
noise.

The on-ground baselines apply the same processing to the raw N feed
signals (no beam generation), which upper-bounds the fixed-payload
designs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import BeamMatrix

# B B^H must be the identity up to this tolerance for the MSE algebra to hold
ORTHONORMAL_INPUT_TOL = 1e-8
COND_LIMIT = 1e12


class LinkProcessingError(ValueError):
    """Invalid inputs or numerically singular link-processing systems."""


@dataclass(frozen=True)
class ReturnLinkParams:
    """Per-user EIRP (linear, after noise normalization)."""

    beta: float

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise LinkProcessingError("beta must be strictly positive")


@dataclass(frozen=True)
class ForwardLinkParams:
    """Total forward transmit power (linear)."""

    p_fl: float

    def __post_init__(self) -> None:
        if not self.p_fl > 0:
            raise LinkProcessingError("p_fl must be strictly positive")


@dataclass(frozen=True)
class Detector:
    """Return-link detector; rows map the K observations to estimates."""

    w: np.ndarray  # K x K, applied as w @ y


@dataclass(frozen=True)
class Precoder:
    """Forward-link precoder with its power-normalization factor."""

    t: np.ndarray  # K x K
    rho: float

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise LinkProcessingError("rho must be strictly positive")


@dataclass(frozen=True)
class LinkResult:
    """Per-user SINR and MSE for one channel draw and one design."""

    sinr: np.ndarray  # (K,) linear
    mse_diag: np.ndarray  # (K,) in (0, 1]
    smse: float
    direction: str  # "return" | "forward"

    def __post_init__(self) -> None:
        if self.direction not in ("return", "forward"):
            raise LinkProcessingError(f"unknown direction {self.direction!r}")


def _beam_values(b: BeamMatrix | np.ndarray) -> np.ndarray:
    values = b.values if isinstance(b, BeamMatrix) else np.asarray(b, dtype=complex)
    gram = values @ values.conj().T
    if np.max(np.abs(gram - np.eye(values.shape[0]))) > ORTHONORMAL_INPUT_TOL:
        raise LinkProcessingError("beam matrix rows are not orthonormal")
    return values


def _solve(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a @ x = rhs with a conditioning guard."""
    if np.linalg.cond(a) > COND_LIMIT:
        raise LinkProcessingError("system is numerically singular")
    return np.linalg.solve(a, rhs)


def lmmse_detector(b: BeamMatrix | np.ndarray, channel_values: np.ndarray,
                   rl: ReturnLinkParams) -> Detector:
    """Linear MMSE detector (I + beta H^H B^H B H)^-1 H^H B^H.

    The filter is the Wiener solution up to the positive scalar sqrt(beta),
    which leaves all SINRs unchanged.
    """
    bv = _beam_values(b)
    h = np.asarray(channel_values, dtype=complex)
    bh = bv @ h  # K x K
    k = bh.shape[1]
    gram = np.eye(k) + rl.beta * (bh.conj().T @ bh)
    w = _solve(gram, bh.conj().T)
    return Detector(w=w)


def _mse_to_result(mse: np.ndarray, direction: str,
                   sinr: np.ndarray | None = None) -> LinkResult:
    diag = np.real(np.diagonal(mse)).copy()
    if sinr is None:
        sinr = 1.0 / diag - 1.0
    return LinkResult(sinr=np.maximum(sinr, 0.0), mse_diag=diag,
                      smse=float(diag.sum()), direction=direction)


def return_mse(b: BeamMatrix | np.ndarray, channel_values: np.ndarray,
               rl: ReturnLinkParams) -> LinkResult:
    """Return-link MSE matrix (I + beta H^H B^H B H)^-1 and derived SINRs."""
    bv = _beam_values(b)
    h = np.asarray(channel_values, dtype=complex)
    bh = bv @ h
    k = bh.shape[1]
    mse = _solve(np.eye(k) + rl.beta * (bh.conj().T @ bh), np.eye(k))
    return _mse_to_result(mse, "return")


def rzf_precoder(b: BeamMatrix | np.ndarray, channel_values: np.ndarray,
                 fl: ForwardLinkParams) -> Precoder:
    """Regularized channel inversion scaled to consume exactly p_fl.

    The unnormalized precoder is conj(B H) (K/p_fl I + (B H)^T conj(B H))^-1;
    rho is chosen so trace(T T^H) equals the power budget.
    """
    bv = _beam_values(b)
    h = np.asarray(channel_values, dtype=complex)
    a = bv @ h  # K x K effective channel
    k = a.shape[1]
    ridge = (k / fl.p_fl) * np.eye(k)
    t0 = a.conj() @ _solve(ridge + a.T @ a.conj(), np.eye(k))
    power = float(np.real(np.trace(t0 @ t0.conj().T)))
    if power <= 0.0:
        raise LinkProcessingError("zero channel; precoder scaling undefined")
    rho = fl.p_fl / power
    return Precoder(t=np.sqrt(rho) * t0, rho=rho)


def sinr_forward(b: BeamMatrix | np.ndarray, channel_values: np.ndarray,
                 precoder: Precoder) -> np.ndarray:
    """Per-user forward SINR from the end-to-end matrix F = H^T B^T T.

    User i receives F_ii on the diagonal; off-diagonal row entries are
    interference and the noise power is one.
    """
    bv = _beam_values(b)
    h = np.asarray(channel_values, dtype=complex)
    f = h.T @ bv.T @ precoder.t
    return _sinr_from_effective(f)


def _sinr_from_effective(f: np.ndarray) -> np.ndarray:
    power = np.abs(f) ** 2
    signal = np.diagonal(power)
    interference = power.sum(axis=1) - signal
    return signal / (interference + 1.0)


def forward_mse(b: BeamMatrix | np.ndarray, channel_values: np.ndarray,
                fl: ForwardLinkParams) -> LinkResult:
    """Forward-link MSE and SINR under regularized zero-forcing.

    The per-user MSEs are the diagonal of the full forward MSE matrix;
    their sum is cross-checked against the reduced trace formula
    (K/p_fl) trace((H^H B^H B H + K/p_fl I)^-1), which coincides for
    orthonormal B. SINRs come from the power-normalized precoder.
    """
    bv = _beam_values(b)
    h = np.asarray(channel_values, dtype=complex)
    a = bv @ h
    k = a.shape[1]
    c = k / fl.p_fl
    gram = a.T @ a.conj()  # H^T B^T conj(B) conj(H)
    inv2 = _solve(gram + c * np.eye(k), np.eye(k))
    inv2 = inv2 @ inv2
    # full MSE matrix; the inner product of beam factors collapses for
    # orthonormal rows, leaving the same Gram matrix in both parentheses
    quad = h.T @ bv.T @ bv.conj() @ bv.T @ bv.conj() @ h.conj()
    mse = c * ((quad + c * np.eye(k)) @ inv2)
    reduced = c * float(np.real(np.trace(
        _solve(a.conj().T @ a + c * np.eye(k), np.eye(k)))))
    smse = float(np.real(np.trace(mse)))
    if abs(smse - reduced) > 1e-9 * max(1.0, abs(reduced)):
        raise LinkProcessingError(
            "forward MSE cross-check failed; beam matrix likely not orthonormal")
    precoder = rzf_precoder(bv, h, fl)
    sinr = _sinr_from_effective(h.T @ bv.T @ precoder.t)
    return _mse_to_result(mse, "forward", sinr=sinr)


def onground_return(channel_values: np.ndarray,
                    rl: ReturnLinkParams) -> LinkResult:
    """Return-link baseline without beam processing: MMSE on all N feeds."""
    h = np.asarray(channel_values, dtype=complex)
    k = h.shape[1]
    mse = _solve(np.eye(k) + rl.beta * (h.conj().T @ h), np.eye(k))
    return _mse_to_result(mse, "return")


def return_mse_mismatched(b: BeamMatrix | np.ndarray, nominal_values: np.ndarray,
                          channel_values: np.ndarray,
                          rl: ReturnLinkParams) -> LinkResult:
    """Return link with the detector matched to the nominal channel only.

    The gateway filters with the MMSE detector of `nominal_values` while
    the actual channel is `channel_values`; residual interference and the
    filtered noise floor set the per-user SINR. Coincides with return_mse
    when the two channels agree.
    """
    bv = _beam_values(b)
    h_nom = np.asarray(nominal_values, dtype=complex)
    h = np.asarray(channel_values, dtype=complex)
    bh_nom = bv @ h_nom
    k = bh_nom.shape[1]
    beta = rl.beta
    w = np.sqrt(beta) * _solve(np.eye(k) + beta * (bh_nom.conj().T @ bh_nom),
                               bh_nom.conj().T)
    f = np.sqrt(beta) * (w @ (bv @ h))
    noise_cov = w @ w.conj().T
    err = np.eye(k) - f
    mse = err @ err.conj().T + noise_cov
    power = np.abs(f) ** 2
    signal = np.diagonal(power)
    interference = power.sum(axis=1) - signal
    sinr = signal / (interference + np.real(np.diagonal(noise_cov)))
    return _mse_to_result(mse, "return", sinr=sinr)


def forward_mse_mismatched(b: BeamMatrix | np.ndarray, nominal_values: np.ndarray,
                           channel_values: np.ndarray,
                           fl: ForwardLinkParams) -> LinkResult:
    """Forward link with the precoder matched to the nominal channel only."""
    bv = _beam_values(b)
    h_nom = np.asarray(nominal_values, dtype=complex)
    h = np.asarray(channel_values, dtype=complex)
    precoder = rzf_precoder(bv, h_nom, fl)
    f = h.T @ bv.T @ precoder.t
    k = f.shape[0]
    f_tilde = f / np.sqrt(precoder.rho)
    err = np.eye(k) - f_tilde
    mse = err @ err.conj().T + np.eye(k) / precoder.rho
    return _mse_to_result(mse, "forward", sinr=_sinr_from_effective(f))


def onground_return_mismatched(nominal_values: np.ndarray,
                               channel_values: np.ndarray,
                               rl: ReturnLinkParams) -> LinkResult:
    """On-ground return baseline with the nominal-matched N-feed detector."""
    h_nom = np.asarray(nominal_values, dtype=complex)
    h = np.asarray(channel_values, dtype=complex)
    k = h_nom.shape[1]
    beta = rl.beta
    w = np.sqrt(beta) * _solve(np.eye(k) + beta * (h_nom.conj().T @ h_nom),
                               h_nom.conj().T)
    f = np.sqrt(beta) * (w @ h)
    noise_cov = w @ w.conj().T
    err = np.eye(k) - f
    mse = err @ err.conj().T + noise_cov
    power = np.abs(f) ** 2
    signal = np.diagonal(power)
    interference = power.sum(axis=1) - signal
    sinr = signal / (interference + np.real(np.diagonal(noise_cov)))
    return _mse_to_result(mse, "return", sinr=sinr)


def onground_forward_mismatched(nominal_values: np.ndarray,
                                channel_values: np.ndarray,
                                fl: ForwardLinkParams) -> LinkResult:
    """On-ground forward baseline with the nominal-matched N-feed precoder."""
    h_nom = np.asarray(nominal_values, dtype=complex)
    h = np.asarray(channel_values, dtype=complex)
    t, rho = onground_forward_precoder(h_nom, fl)
    f = h.T @ t
    k = f.shape[0]
    f_tilde = f / np.sqrt(rho)
    err = np.eye(k) - f_tilde
    mse = err @ err.conj().T + np.eye(k) / rho
    return _mse_to_result(mse, "forward", sinr=_sinr_from_effective(f))


def onground_forward_precoder(channel_values: np.ndarray,
                              fl: ForwardLinkParams) -> tuple[np.ndarray, float]:
    """Power-normalized on-ground forward precoder (N x K) and its rho."""
    h = np.asarray(channel_values, dtype=complex)
    k = h.shape[1]
    c = k / fl.p_fl
    t0 = h.conj() @ _solve(c * np.eye(k) + h.T @ h.conj(), np.eye(k))
    power = float(np.real(np.trace(t0 @ t0.conj().T)))
    if power <= 0.0:
        raise LinkProcessingError("zero channel; precoder scaling undefined")
    rho = fl.p_fl / power
    return np.sqrt(rho) * t0, rho


def onground_forward(channel_values: np.ndarray,
                     fl: ForwardLinkParams) -> LinkResult:
    """Forward-link baseline: regularized inversion over all N feeds."""
    h = np.asarray(channel_values, dtype=complex)
    k = h.shape[1]
    c = k / fl.p_fl
    t, _ = onground_forward_precoder(h, fl)
    sinr = _sinr_from_effective(h.T @ t)
    mse = c * _solve(h.T @ h.conj() + c * np.eye(k), np.eye(k))
    return _mse_to_result(mse, "forward", sinr=sinr)
