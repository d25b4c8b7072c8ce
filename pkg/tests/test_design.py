import math
import warnings

import numpy as np
import pytest

from beamgen.channel import (BeamGeometry, NominalChannel,
                             hermitian_eig_descending, make_hex_geometry,
                             sample_delta_ball)
from beamgen.design import (BeamMatrix, DegenerateGeometryError, EigenGapError,
                            InfeasibleAlphaError, RankDeficiencyError,
                            check_orthonormal, design_adaptive,
                            design_perturbation_aware, design_reference,
                            design_robust, eig_perturb_first_order,
                            empirical_gram_perturbation, load_beam_matrix,
                            orthonormalize_rows, robust_surrogate,
                            robustness_margin, save_beam_matrix)
from beamgen.validate import (make_nominal, random_orthonormal_rows,
                              surrogate_trace, forward_surrogate_trace)
from conftest import random_complex


def nominal_from_mean(mean: np.ndarray, alpha: float) -> NominalChannel:
    vals, vecs = hermitian_eig_descending(mean @ mean.conj().T)
    k = mean.shape[1]
    rank = int(min(k, np.count_nonzero(vals > vals[0] * 1e-12)))
    return NominalChannel(mean=mean, alpha=alpha, eig_vectors=vecs,
                          eig_values=vals, rank=rank)


def well_separated_nominal(rng, n, k, alpha=0.05):
    """Random nominal whose Gram spectrum has comfortable gaps."""
    u, _, vh = np.linalg.svd(random_complex((n, k), rng), full_matrices=False)
    sing = np.sqrt(np.array([10.0 * 0.6 ** i for i in range(k)]))
    return nominal_from_mean((u * sing[None, :]) @ vh, alpha)


class TestDesignReference:
    def test_delta_weights_select_feeds(self):
        # feeds on the beam centres with a vanishing width: pure selection
        centers = np.array([[0.0, 0.0], [0.01, 0.0]])
        feeds = np.vstack([centers, [[0.0, 0.01], [0.01, 0.01]]])
        geometry = BeamGeometry(feed_positions=feeds, beam_centers=centers,
                                beam_radius=0.004, feed_pattern_width=1e-7,
                                orbit_altitude=35786e3)
        b = design_reference(geometry)
        expected = np.zeros((2, 4))
        expected[0, 0] = expected[1, 1] = 1.0
        assert np.allclose(b.values, expected, atol=1e-12)

    def test_rows_orthonormal(self, desk_geometry):
        b = design_reference(desk_geometry)
        assert check_orthonormal(b) <= 1e-10
        assert b.design_kind == "reference"

    def test_span_preserved(self, small_geometry):
        offsets = (small_geometry.beam_centers[:, None, :]
                   - small_geometry.feed_positions[None, :, :])
        theta = np.hypot(offsets[..., 0], offsets[..., 1])
        weights = np.exp(-np.log(2.0)
                         * (theta / small_geometry.feed_pattern_width) ** 2)
        b = design_reference(small_geometry)
        q, _ = np.linalg.qr(weights.conj().T.astype(complex))
        p_raw = q @ q.conj().T
        p_b = b.values.conj().T @ b.values
        assert np.max(np.abs(p_raw - p_b)) <= 1e-10

    def test_degenerate_geometry_rejected(self):
        centers = np.array([[0.0, 0.0], [0.0, 0.0]])  # identical beams
        feeds = np.array([[0.0, 0.0], [0.01, 0.0], [0.0, 0.01]])
        geometry = BeamGeometry(feed_positions=feeds, beam_centers=centers,
                                beam_radius=0.004, feed_pattern_width=0.008,
                                orbit_altitude=35786e3)
        with pytest.raises(DegenerateGeometryError):
            design_reference(geometry)


class TestDesignAdaptive:
    def test_scaled_basis_columns(self, rng):
        h = np.zeros((5, 3), dtype=complex)
        h[0, 0] = 3.0
        h[1, 1] = 2.0
        h[2, 2] = 0.7
        b = design_adaptive(h)
        expected = np.zeros((3, 5))
        expected[0, 0] = expected[1, 1] = expected[2, 2] = 1.0
        assert np.allclose(np.abs(b.values), expected, atol=1e-12)
        assert check_orthonormal(b) <= 1e-10

    def test_achieves_onground_trace(self, rng):
        for _ in range(20):
            h = random_complex((6, 3), rng)
            beta = float(rng.uniform(0.2, 5.0))
            b = design_adaptive(h).values
            lhs = np.trace(np.linalg.inv(
                np.eye(3) + beta * h.conj().T @ b.conj().T @ b @ h)).real
            rhs = np.trace(np.linalg.inv(np.eye(3) + beta * h.conj().T @ h)).real
            assert abs(lhs - rhs) <= 1e-9

    def test_beats_random_candidates(self, rng):
        h = random_complex((6, 3), rng)
        beta = 1.7
        gram = h @ h.conj().T
        best = surrogate_trace(design_adaptive(h).values, gram, beta)
        for _ in range(500):
            b = random_orthonormal_rows(3, 6, rng)
            assert surrogate_trace(b, gram, beta) >= best - 1e-12

    def test_rank_deficiency_rejected(self, rng):
        h = random_complex((5, 3), rng)
        h[:, 2] = h[:, 0]  # collinear columns
        h = h - h  # zero matrix is rank deficient too
        with pytest.raises(RankDeficiencyError):
            design_adaptive(h)


class TestRobustnessMargin:
    def test_identity_embedding(self):
        mean = np.zeros((4, 2), dtype=complex)
        mean[0, 0] = mean[1, 1] = 1.0
        nominal = nominal_from_mean(mean, alpha=0.1)
        assert robustness_margin(nominal) == pytest.approx(0.2, rel=1e-12)

    def test_zero_alpha(self, rng):
        nominal = nominal_from_mean(random_complex((4, 2), rng), alpha=0.0)
        assert robustness_margin(nominal) == 0.0

    def test_matches_independent_svd(self, rng):
        for _ in range(20):
            mean = random_complex((6, 3), rng)
            alpha = float(rng.uniform(0.0, 2.0))
            nominal = nominal_from_mean(mean, alpha)
            expected = 2.0 * alpha * np.linalg.svd(mean, compute_uv=False)[0]
            assert robustness_margin(nominal) == pytest.approx(expected, abs=1e-10)


class TestRobustSurrogate:
    def test_zero_alpha_reproduces_gram(self, rng):
        mean = random_complex((5, 3), rng)
        nominal = nominal_from_mean(mean, alpha=0.0)
        surr = robust_surrogate(nominal)
        gram = mean @ mean.conj().T
        assert np.max(np.abs(surr.z_breve - gram)) <= 1e-9 * np.linalg.norm(gram)
        assert not surr.alpha_clamped
        assert surr.epsilon_h == 0.0

    def test_clamp_triggered(self):
        # spectrum {4, 1}: margin 2 would zero the second eigenvalue
        mean = np.zeros((4, 2), dtype=complex)
        mean[0, 0] = 2.0
        mean[1, 1] = 1.0
        nominal = nominal_from_mean(mean, alpha=0.5)  # eps = 2*0.5*2 = 2
        surr = robust_surrogate(nominal)
        assert surr.alpha_clamped
        assert surr.alpha_used < 0.5
        assert nominal.eig_values[1] - surr.epsilon_h > 0.0

    def test_unclamped_when_feasible(self):
        mean = np.zeros((4, 2), dtype=complex)
        mean[0, 0] = 2.0
        mean[1, 1] = 1.0
        nominal = nominal_from_mean(mean, alpha=0.1)
        surr = robust_surrogate(nominal)
        assert not surr.alpha_clamped
        assert surr.alpha_used == 0.1
        assert surr.epsilon_h == pytest.approx(0.4, rel=1e-12)

    def test_zero_mean_rejected(self):
        nominal = nominal_from_mean(np.zeros((4, 2), dtype=complex), alpha=0.1)
        with pytest.raises((InfeasibleAlphaError, RankDeficiencyError)):
            robust_surrogate(nominal)

    def test_surrogate_psd_hermitian(self, rng):
        for frac in (0.2, 0.9, 3.0):
            nominal = make_nominal(rng, 8, 4, alpha_frac=frac)
            surr = robust_surrogate(nominal)
            z = surr.z_breve
            assert np.max(np.abs(z - z.conj().T)) <= 1e-12
            assert np.linalg.eigvalsh(z).min() >= -1e-12

    def test_bound_over_sampled_ball(self, rng):
        nominal = make_nominal(rng, 6, 3, alpha_frac=0.8)
        surr = robust_surrogate(nominal)
        b = random_orthonormal_rows(3, 6, rng)
        beta = 1.3
        bound = surrogate_trace(b, surr.z_breve, beta)
        for _ in range(1000):
            delta = sample_delta_ball((6, 3), surr.alpha_used, rng).delta
            h = nominal.mean + delta
            actual = surrogate_trace(b, h @ h.conj().T, beta)
            assert actual <= bound + 1e-9


class TestDesignRobust:
    def test_diagonal_mean(self):
        mean = np.zeros((4, 2), dtype=complex)
        mean[0, 0] = 2.0
        mean[1, 1] = 1.0
        b = design_robust(nominal_from_mean(mean, alpha=0.1))
        expected = np.zeros((2, 4))
        expected[0, 0] = expected[1, 1] = 1.0
        assert np.allclose(np.abs(b.values), expected, atol=1e-12)

    def test_alpha_independent(self, rng):
        mean = random_complex((6, 3), rng)
        b1 = design_robust(nominal_from_mean(mean, alpha=0.05))
        b2 = design_robust(nominal_from_mean(mean, alpha=1.5))
        assert np.array_equal(b1.values, b2.values)

    def test_minimizes_surrogate(self, rng):
        nominal = make_nominal(rng, 6, 3, alpha_frac=0.5)
        surr = robust_surrogate(nominal)
        b_star = design_robust(nominal).values
        beta = 2.2
        best = surrogate_trace(b_star, surr.z_breve, beta)
        for _ in range(500):
            b = random_orthonormal_rows(3, 6, rng)
            assert surrogate_trace(b, surr.z_breve, beta) >= best - 1e-12

    def test_forward_return_same_argmin(self, rng):
        nominal = make_nominal(rng, 6, 3, alpha_frac=0.5)
        surr = robust_surrogate(nominal)
        b_star = design_robust(nominal).values
        for p_fl in (0.3, 3.0, 30.0):
            best = forward_surrogate_trace(b_star, surr.z_breve, 3, p_fl)
            for _ in range(100):
                b = random_orthonormal_rows(3, 6, rng)
                assert forward_surrogate_trace(b, surr.z_breve, 3, p_fl) \
                    >= best - 1e-12


class TestEigPerturbation:
    def test_scaled_identity_gives_zero(self, rng):
        nominal = well_separated_nominal(rng, 6, 3)
        pert = eig_perturb_first_order(nominal, 0.7 * np.eye(6))
        assert np.max(np.abs(pert.delta_u)) <= 1e-12

    def test_zero_perturbation(self, rng):
        nominal = well_separated_nominal(rng, 6, 3)
        pert = eig_perturb_first_order(nominal, np.zeros((6, 6)))
        assert np.all(pert.delta_u == 0.0)

    def test_d_weights_antisymmetric(self, rng):
        nominal = well_separated_nominal(rng, 6, 3)
        dz = random_complex((6, 6), rng)
        dz = 0.5 * (dz + dz.conj().T)
        pert = eig_perturb_first_order(nominal, dz)
        d = pert.d_weights
        assert np.all(np.diagonal(d) == 0.0)
        assert np.allclose(d, -d.T, rtol=1e-12)
        lam = nominal.eig_values[:nominal.rank]
        for g in range(len(lam)):
            for f in range(len(lam)):
                if f != g:
                    assert d[g, f] == pytest.approx(1.0 / (lam[f] - lam[g]),
                                                    rel=1e-12)

    @staticmethod
    def _aligned_error(nominal, dz, t):
        gram = nominal.mean @ nominal.mean.conj().T
        vals, vecs = np.linalg.eigh(gram + t * dz)
        order = np.argsort(-vals)
        vecs = vecs[:, order]
        pert = eig_perturb_first_order(nominal, dz)
        approx = nominal.eig_vectors[:, :nominal.rank] + t * pert.delta_u
        err = 0.0
        for j in range(nominal.rank):
            exact = vecs[:, j]
            ph = np.vdot(exact, approx[:, j])
            exact = exact * (ph / abs(ph))
            err = max(err, float(np.linalg.norm(exact - approx[:, j])))
        return err

    def test_quadratic_error_decay(self, rng):
        ratios = []
        for _ in range(10):
            nominal = well_separated_nominal(rng, 6, 3)
            dz = random_complex((6, 6), rng)
            dz = 0.5 * (dz + dz.conj().T)
            dz *= nominal.eig_values[0] / np.linalg.norm(dz)
            t = 1e-4
            e1 = self._aligned_error(nominal, dz, t)
            e2 = self._aligned_error(nominal, dz, t / 2.0)
            ratios.append(e1 / e2)
        assert all(3.0 <= r <= 5.0 for r in ratios)

    def test_gap_failure_raises(self, rng):
        u, _, vh = np.linalg.svd(random_complex((6, 3), rng), full_matrices=False)
        sing = np.sqrt(np.array([4.0, 2.0, 2.0 * (1.0 + 1e-12)]))
        nominal = nominal_from_mean((u * sing[None, :]) @ vh, alpha=0.01)
        dz = np.eye(6) * 0.1 + 0.01 * np.diag(np.arange(6.0))
        with pytest.raises(EigenGapError):
            eig_perturb_first_order(nominal, dz)


class TestDesignPerturbationAware:
    def test_literal_mode_reproduces_robust(self, rng):
        nominal = well_separated_nominal(rng, 6, 3, alpha=0.05)
        b_pa = design_perturbation_aware(nominal, "literal")
        b_rob = design_robust(nominal)
        assert np.max(np.abs(b_pa.values - b_rob.values)) <= 1e-12
        assert b_pa.design_kind == "perturbation_aware"

    def test_zero_alpha_empirical(self, rng):
        nominal = well_separated_nominal(rng, 6, 3, alpha=0.0)
        ensemble = [nominal.mean + 0.1 * random_complex((6, 3), rng)
                    for _ in range(10)]
        b_pa = design_perturbation_aware(nominal, "empirical", ensemble)
        assert np.max(np.abs(b_pa.values - design_robust(nominal).values)) <= 1e-12

    def test_two_channel_ensemble_monotone_angle(self, rng):
        from beamgen.channel import Channel, estimate_nominal
        base = random_complex((6, 3), rng)
        delta0 = random_complex((6, 3), rng)
        delta0 /= np.linalg.norm(delta0)
        angles = []
        for mag in (0.05, 0.15, 0.45):
            ensemble = [Channel(base + mag * delta0), Channel(base - mag * delta0)]
            nominal = estimate_nominal(ensemble)
            b_pa = design_perturbation_aware(nominal, "empirical", ensemble)
            assert check_orthonormal(b_pa) <= 1e-10
            b_rob = design_robust(nominal)
            p_pa = b_pa.values.conj().T @ b_pa.values
            p_rob = b_rob.values.conj().T @ b_rob.values
            angles.append(float(np.linalg.norm(p_pa - p_rob, 2)))
        assert angles[0] < angles[1] < angles[2]

    def test_degenerate_falls_back_with_warning(self, rng):
        u, _, vh = np.linalg.svd(random_complex((6, 3), rng), full_matrices=False)
        sing = np.sqrt(np.array([4.0, 2.0, 2.0 * (1.0 + 1e-12)]))
        nominal = nominal_from_mean((u * sing[None, :]) @ vh, alpha=0.001)
        ensemble = [nominal.mean + 0.01 * random_complex((6, 3), rng)
                    for _ in range(5)]
        with pytest.warns(RuntimeWarning):
            b_pa = design_perturbation_aware(nominal, "empirical", ensemble)
        assert np.array_equal(b_pa.values, design_robust(nominal).values)
        assert b_pa.design_kind == "perturbation_aware"

    def test_empirical_rescaled_to_margin(self, rng):
        nominal = well_separated_nominal(rng, 6, 3, alpha=0.05)
        surr = robust_surrogate(nominal)
        ensemble = [nominal.mean + 0.2 * random_complex((6, 3), rng)
                    for _ in range(20)]
        dz = empirical_gram_perturbation(nominal, ensemble, surr.epsilon_h)
        assert np.linalg.norm(dz) == pytest.approx(surr.epsilon_h, rel=1e-12)
        assert np.max(np.abs(dz - dz.conj().T)) <= 1e-12


class TestCheckOrthonormal:
    def test_selection_rows(self):
        b = np.zeros((2, 4), dtype=complex)
        b[0, 0] = b[1, 1] = 1.0
        assert check_orthonormal(b) == 0.0

    def test_scaled_by_two(self):
        b = np.zeros((2, 4), dtype=complex)
        b[0, 0] = b[1, 1] = 1.0
        assert check_orthonormal(2.0 * b) == pytest.approx(3.0, rel=1e-15)

    def test_all_designs_small_residual(self, rng, desk_geometry):
        from beamgen.channel import Channel, estimate_nominal
        for _ in range(10):
            channels = [Channel(random_complex((16, 8), rng)) for _ in range(12)]
            nominal = estimate_nominal(channels)
            designs = [
                design_reference(desk_geometry),
                design_adaptive(nominal.mean),
                design_robust(nominal),
                design_perturbation_aware(nominal, "empirical", channels),
            ]
            for b in designs:
                assert check_orthonormal(b) <= 1e-10


class TestOrthonormalizeRows:
    def test_two_pass_orthogonality(self, rng):
        m = random_complex((6, 12), rng)
        out = orthonormalize_rows(m)
        assert np.max(np.abs(out @ out.conj().T - np.eye(6))) <= 1e-12

    def test_dependent_rows_rejected(self, rng):
        m = random_complex((3, 6), rng)
        m[2] = 0.5 * m[0] - 1.5 * m[1]
        with pytest.raises(DegenerateGeometryError):
            orthonormalize_rows(m)


class TestSerialization:
    def test_round_trip_exact(self, tmp_path, rng):
        nominal = make_nominal(rng, 6, 3, alpha_frac=0.4)
        b = design_robust(nominal)
        surr = robust_surrogate(nominal)
        path = tmp_path / "beam.txt"
        save_beam_matrix(path, b, alpha=surr.alpha_used,
                         epsilon_h=surr.epsilon_h,
                         alpha_clamped=surr.alpha_clamped)
        loaded, meta = load_beam_matrix(path)
        assert np.array_equal(loaded.values, b.values)
        assert loaded.design_kind == "robust"
        assert meta["alpha"] == surr.alpha_used
        assert meta["epsilon_h"] == surr.epsilon_h
        assert meta["alpha_clamped"] == surr.alpha_clamped
        assert meta["N"] == "6" or int(meta["N"]) == 6

    def test_header_written(self, tmp_path, rng):
        nominal = make_nominal(rng, 6, 3, alpha_frac=0.4)
        b = design_robust(nominal)
        path = tmp_path / "beam.txt"
        save_beam_matrix(path, b)
        text = path.read_text()
        assert text.startswith("# beamgen matrix v1")
        assert "kind=robust" in text
        assert "N=6" in text and "K=3" in text


class TestAlgebraicProperties:
    def test_trace_inverse_identity(self, rng):
        for _ in range(100):
            size = int(rng.integers(2, 17))
            a = random_complex((size, size), rng)
            lhs = np.trace(np.linalg.inv(np.eye(size) + a @ a.conj().T)).real
            rhs = np.trace(np.linalg.inv(np.eye(size) + a.conj().T @ a)).real
            assert abs(lhs - rhs) <= 1e-9

    def test_majorization_and_schur(self, rng):
        from beamgen.validate import is_majorized
        for _ in range(200):
            n = int(rng.integers(3, 10))
            k = int(rng.integers(2, n))
            m = random_orthonormal_rows(k, n, rng)
            d = rng.uniform(0.0, 5.0, size=n)
            mdm = (m * d[None, :]) @ m.conj().T
            diag = np.real(np.diagonal(mdm))
            lam = np.linalg.eigvalsh(0.5 * (mdm + mdm.conj().T))
            assert is_majorized(diag, lam, tol=1e-10)
            lhs = np.sum(1.0 / (1.0 + diag))
            rhs = np.sum(1.0 / (1.0 + np.clip(lam, 0.0, None)))
            assert lhs >= rhs - 1e-10

    def test_surrogate_never_raises_spectrum(self, rng):
        for frac in (0.1, 0.6, 1.4):
            nominal = make_nominal(rng, 8, 4, alpha_frac=frac)
            surr = robust_surrogate(nominal)
            clipped = np.clip(nominal.eig_values - surr.epsilon_h, 0.0, None)
            assert np.all(clipped <= nominal.eig_values + 1e-12)
