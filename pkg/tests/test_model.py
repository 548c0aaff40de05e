import numpy as np
import numpy.testing as npt
import pytest
import scipy.integrate
import scipy.stats

from rtbm.errors import InvalidModel, RankDeficient, UnsupportedDimension
from rtbm.model import Phase, RtbmModel

from conftest import random_valid_model


def mixture_log_pdf(m, v, eps=1e-12):
    """Independent path: law-of-total-probability sum over the hidden ellipsoid."""
    hp = m.hidden_params(eps)
    terms = [
        m.log_pdf_conditional(v, h) + m.log_pmf_hidden(h)
        for h in hp.points.astype(float)
    ]
    return float(np.logaddexp.reduce(terms))


class TestValidate:
    def test_schur_complement_positive(self):
        m = RtbmModel([[1.0]], [[2.0]], [[1.0]], [0.0], [0.0])
        margins = m.validate()
        # S = 2 - 1*1*1 = 1
        npt.assert_allclose(margins["s"], 1.0)
        assert margins["t"] > 0 and margins["q"] > 0

    def test_schur_boundary_rejected(self):
        m = RtbmModel([[1.0]], [[1.0]], [[1.0]], [0.0], [0.0])
        with pytest.raises(InvalidModel, match="schur"):
            m.validate()

    def test_asymmetric_t_rejected(self):
        m = RtbmModel([[1.0, 0.3], [0.0, 1.0]], [[1.0]], [[0.0], [0.0]], [0.0, 0.0], [0.0])
        with pytest.raises(InvalidModel, match="symmetric"):
            m.validate()

    def test_shape_mismatch_rejected_at_construction(self):
        with pytest.raises(InvalidModel):
            RtbmModel([[1.0]], [[1.0]], [[1.0, 2.0]], [0.0], [0.0, 0.0])

    def test_every_violation_listed(self):
        m = RtbmModel([[-1.0]], [[-2.0]], [[0.0]], [0.0], [0.0])
        with pytest.raises(InvalidModel) as err:
            m.validate()
        assert len(err.value.violations) == 2


class TestLogPdfVisible:
    def test_reduces_to_standard_normal_when_uncoupled(self):
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.7])
        npt.assert_allclose(
            m.log_pdf_visible([0.0]), np.log(1.0 / np.sqrt(2 * np.pi)), atol=1e-10
        )

    def test_normalization_by_quadrature(self, test_model_1d):
        xs = np.linspace(-10.0, 10.0, 10_000)
        pdf = np.exp(test_model_1d.log_pdf_visible(xs.reshape(-1, 1)))
        npt.assert_allclose(scipy.integrate.trapezoid(pdf, xs), 1.0, atol=1e-6)

    def test_equals_mixture_form(self, test_model_1d):
        for v in (-2.5, -0.4, 0.9, 3.1):
            direct = test_model_1d.log_pdf_visible([v])
            npt.assert_allclose(direct, mixture_log_pdf(test_model_1d, [v]), rtol=1e-10)

    def test_mixture_identity_random_models(self):
        rng = np.random.default_rng(0)
        for _ in range(8):
            m = random_valid_model(rng)
            scale = np.sqrt(np.diag(np.linalg.inv(m.t)))
            mean = m.conditional_mean(np.zeros(m.nh))
            for _ in range(6):
                v = mean + rng.uniform(-3, 3, m.nv) * scale
                a = m.log_pdf_visible(v)
                b = mixture_log_pdf(m, v)
                assert abs(a - b) <= 1e-8 * max(1.0, abs(a))

    def test_finite_for_extreme_arguments(self, test_model_1d):
        for v in (-80.0, 80.0):
            assert np.isfinite(test_model_1d.log_pdf_visible([v]))

    def test_phase_two_rejected(self):
        m = RtbmModel([[1.0]], [[2.0]], [[1.0]], [0.0], [0.0], phase=Phase.II)
        with pytest.raises(InvalidModel, match="phase"):
            m.log_pdf_visible([0.0])


class TestLogPmfHidden:
    def test_scalar_values_against_brute_force(self):
        # omega_h = 2, b_h = 0: masses e^{-n^2} / sum e^{-n^2}
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.0])
        n = np.arange(-10, 11)
        norm = np.sum(np.exp(-(n**2.0)))
        npt.assert_allclose(m.log_pmf_hidden([0]), np.log(1.0 / norm), atol=1e-9)
        npt.assert_allclose(m.log_pmf_hidden([1]), -1.0 - np.log(norm), atol=1e-9)
        npt.assert_allclose(m.log_pmf_hidden([0]), -0.572468, atol=1e-5)

    def test_symmetry_at_zero_bias(self):
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.0])
        for h in (1, 2, 3):
            assert m.log_pmf_hidden([h]) == m.log_pmf_hidden([-h])

    def test_mass_sums_to_one_over_ellipsoid(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            m = random_valid_model(rng)
            hp = m.hidden_params()
            total = np.sum(np.exp(m.log_pmf_hidden(hp.points.astype(float))))
            assert 1.0 - 1e-8 <= total <= 1.0


class TestConditional:
    def test_mean_direct_substitution(self):
        m = RtbmModel([[1.0]], [[2.0]], [[1.0]], [0.0], [0.0])
        npt.assert_allclose(m.conditional_mean([3.0]), [-3.0])

    def test_mean_constant_when_uncoupled(self):
        m = RtbmModel([[2.0]], [[2.0]], [[0.0]], [1.0], [0.0])
        for h in (-2.0, 0.0, 5.0):
            npt.assert_allclose(m.conditional_mean([h]), [-0.5])

    def test_mean_linearity(self):
        rng = np.random.default_rng(2)
        m = random_valid_model(rng, nv=2, nh=2)
        h1, h2 = np.array([1.0, -2.0]), np.array([3.0, 1.0])
        base = m.conditional_mean(np.zeros(2))
        lhs = m.conditional_mean(h1 + h2) - base
        rhs = (m.conditional_mean(h1) - base) + (m.conditional_mean(h2) - base)
        npt.assert_allclose(lhs, rhs, atol=1e-12)

    def test_peak_log_density(self):
        rng = np.random.default_rng(3)
        m = random_valid_model(rng, nv=2, nh=1)
        h = np.array([1.0])
        peak = m.log_pdf_conditional(m.conditional_mean(h), h)
        expected = -0.5 * 2 * np.log(2 * np.pi) + 0.5 * np.linalg.slogdet(m.t)[1]
        npt.assert_allclose(peak, expected, rtol=1e-12)

    def test_standard_normal_case(self):
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.0])
        npt.assert_allclose(
            m.log_pdf_conditional([1.0], [0.0]),
            scipy.stats.norm.logpdf(1.0),
            rtol=1e-12,
        )

    def test_bayes_posterior_normalizes(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            m = random_valid_model(rng, nv=1, nh=2)
            v = rng.normal(size=1)
            hp = m.hidden_params()
            log_post = [
                m.log_pdf_conditional(v, h) + m.log_pmf_hidden(h) - m.log_pdf_visible(v)
                for h in hp.points.astype(float)
            ]
            npt.assert_allclose(np.sum(np.exp(log_post)), 1.0, atol=1e-8)


class TestCharacteristicFunctions:
    def test_visible_at_zero_is_exactly_one(self):
        rng = np.random.default_rng(5)
        m = random_valid_model(rng, nv=2, nh=2)
        assert m.characteristic_visible(np.zeros(2)) == 1.0 + 0.0j

    def test_visible_gaussian_when_uncoupled(self):
        m = RtbmModel([[2.0]], [[2.0]], [[0.0]], [1.0], [0.3])
        for r in (-1.2, 0.4, 2.0):
            expected = np.exp(-1j * r * 0.5 - 0.25 * r * r)
            npt.assert_allclose(m.characteristic_visible([r]), expected, atol=1e-12)

    def test_visible_matches_quadrature(self, test_model_1d):
        xs = np.linspace(-12.0, 12.0, 24_001)
        pdf = np.exp(test_model_1d.log_pdf_visible(xs.reshape(-1, 1)))
        for r in (0.5, 1.5, 3.0):
            quad = scipy.integrate.trapezoid(np.exp(1j * r * xs) * pdf, xs)
            npt.assert_allclose(
                test_model_1d.characteristic_visible([r]), quad, atol=1e-4
            )

    def test_hidden_at_zero_is_exactly_one(self):
        rng = np.random.default_rng(6)
        m = random_valid_model(rng, nv=1, nh=3)
        assert m.characteristic_hidden(np.zeros(3)) == 1.0 + 0.0j

    def test_hidden_gradient_gives_mean(self):
        rng = np.random.default_rng(7)
        m = random_valid_model(rng, nv=2, nh=2)
        mean = m.hidden_mean()
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (m.characteristic_hidden(e) - m.characteristic_hidden(-e)) / (2 * h)
            npt.assert_allclose(fd, 1j * mean[i], atol=1e-6)

    def test_hidden_real_and_even_for_symmetric_model(self):
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.0])
        for r in (0.3, 1.1):
            phi = m.characteristic_hidden([r])
            npt.assert_allclose(phi.imag, 0.0, atol=1e-12)
            npt.assert_allclose(phi, m.characteristic_hidden([-r]), atol=1e-12)


class TestHiddenMoments:
    def test_mean_zero_at_zero_bias(self):
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.0])
        npt.assert_allclose(m.hidden_mean(), [0.0], atol=1e-12)

    def test_scalar_mean_brute_force(self):
        # omega_h = 2, b_h = 0.5: sum n e^{-n^2 - n/2} / sum e^{-n^2 - n/2}
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.5])
        n = np.arange(-10, 11)
        w = np.exp(-(n**2.0) - 0.5 * n)
        npt.assert_allclose(m.hidden_mean()[0], np.sum(n * w) / np.sum(w), atol=1e-10)

    def test_scalar_covariance_brute_force(self):
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.0])
        n = np.arange(-10, 11)
        w = np.exp(-(n**2.0))
        expected = np.sum(n**2 * w) / np.sum(w)
        npt.assert_allclose(m.hidden_covariance()[0, 0], expected, atol=1e-10)
        npt.assert_allclose(m.hidden_covariance()[0, 0], 0.49897907, atol=1e-7)

    def test_moments_match_direct_lattice_sums(self):
        rng = np.random.default_rng(8)
        for _ in range(6):
            m = random_valid_model(rng)
            hp = m.hidden_params()
            pts = hp.points.astype(float)
            masses = np.exp(m.log_pmf_hidden(pts))
            masses = masses / masses.sum()
            mean_direct = masses @ pts
            cov_direct = (pts - mean_direct).T * masses @ (pts - mean_direct)
            npt.assert_allclose(m.hidden_mean(), mean_direct, atol=1e-10)
            npt.assert_allclose(m.hidden_covariance(), cov_direct, atol=1e-10)

    def test_covariance_psd(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            m = random_valid_model(rng)
            eig = np.linalg.eigvalsh(m.hidden_covariance())
            assert np.min(eig) >= -1e-10

    def test_diagonal_omega_gives_diagonal_covariance(self):
        m = RtbmModel(np.eye(2), np.diag([2.0, 3.0]), np.zeros((2, 2)), np.zeros(2), np.zeros(2))
        cov = m.hidden_covariance()
        npt.assert_allclose(cov[0, 1], 0.0, atol=1e-12)


class TestAffineTransform:
    def test_identity_is_noop(self):
        rng = np.random.default_rng(10)
        m = random_valid_model(rng, nv=2, nh=2)
        out = m.affine_transform(np.eye(2), np.zeros(2))
        for f in ("t", "q", "w", "bv", "bh"):
            npt.assert_allclose(getattr(out, f), getattr(m, f), atol=1e-10)

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        m = random_valid_model(rng, nv=2, nh=2)
        a = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        b = rng.normal(size=2)
        back = m.affine_transform(a, b).affine_transform(
            np.linalg.inv(a), -np.linalg.solve(a, b)
        )
        for f in ("t", "q", "w", "bv", "bh"):
            npt.assert_allclose(getattr(back, f), getattr(m, f), atol=1e-10)

    def test_change_of_variables_identity(self):
        rng = np.random.default_rng(12)
        m = random_valid_model(rng, nv=2, nh=2)
        theta_rot = np.pi / 4
        a = 2.0 * np.array(
            [[np.cos(theta_rot), -np.sin(theta_rot)], [np.sin(theta_rot), np.cos(theta_rot)]]
        )
        b = np.array([1.0, 2.0])
        out = m.affine_transform(a, b)
        vs = rng.normal(size=(40, 2))
        lhs = out.log_pdf_visible(vs @ a.T + b)
        rhs = m.log_pdf_visible(vs) - np.log(abs(np.linalg.det(a)))
        npt.assert_allclose(lhs, rhs, atol=1e-10)

    def test_hidden_sector_invariant(self):
        rng = np.random.default_rng(13)
        m = random_valid_model(rng, nv=2, nh=3)
        a = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        b = rng.normal(size=2)
        out = m.affine_transform(a, b)
        hp, hp_out = m.hidden_params(), out.hidden_params()
        npt.assert_allclose(hp.omega, hp_out.omega, atol=1e-10)
        npt.assert_allclose(hp.bias, hp_out.bias, atol=1e-10)
        npt.assert_allclose(m.hidden_mean(), out.hidden_mean(), atol=1e-10)

    def test_rank_deficient_rejected(self):
        rng = np.random.default_rng(14)
        m = random_valid_model(rng, nv=2, nh=1)
        with pytest.raises(RankDeficient):
            m.affine_transform(np.array([[1.0, 0.0], [2.0, 0.0]]), np.zeros(2))

    def test_dimension_raising_failure_surfaces(self):
        # A tall full-column-rank map makes the transformed precision
        # singular; the failure must surface as InvalidModel, not silently.
        rng = np.random.default_rng(15)
        m = random_valid_model(rng, nv=1, nh=1)
        with pytest.raises(InvalidModel):
            m.affine_transform(np.array([[1.0], [1.0]]), np.zeros(2))


class TestCdfVisible1d:
    def test_symmetric_gaussian_midpoint(self):
        m = RtbmModel([[1.0]], [[2.0]], [[0.0]], [0.0], [0.0])
        npt.assert_allclose(m.cdf_visible_1d(0.0), 0.5, atol=1e-10)

    def test_upper_limit(self, test_model_1d):
        hp = test_model_1d.hidden_params()
        mus = test_model_1d.conditional_mean(hp.points.astype(float))[:, 0]
        far = float(np.max(mus) + 12.0)
        npt.assert_allclose(test_model_1d.cdf_visible_1d(far), 1.0, atol=1e-8)
        assert test_model_1d.cdf_visible_1d(float(np.min(mus) - 12.0)) <= 1e-8

    def test_monotone(self, test_model_1d):
        xs = np.linspace(-8, 8, 200)
        cdf = test_model_1d.cdf_visible_1d(xs)
        assert np.all(np.diff(cdf) >= 0)

    def test_derivative_matches_density(self, test_model_1d):
        rng = np.random.default_rng(16)
        h = 1e-5
        for x in rng.uniform(-4, 4, 50):
            fd = (test_model_1d.cdf_visible_1d(x + h) - test_model_1d.cdf_visible_1d(x - h)) / (2 * h)
            pdf = np.exp(test_model_1d.log_pdf_visible([x]))
            assert abs(fd - pdf) < 1e-5

    def test_multivariate_rejected(self):
        rng = np.random.default_rng(17)
        m = random_valid_model(rng, nv=2, nh=1)
        with pytest.raises(UnsupportedDimension):
            m.cdf_visible_1d(0.0)


class TestSerialization:
    def test_dict_round_trip(self):
        rng = np.random.default_rng(18)
        m = random_valid_model(rng, nv=2, nh=2)
        m2 = RtbmModel.from_dict(m.to_dict())
        for f in ("t", "q", "w", "bv", "bh"):
            npt.assert_array_equal(getattr(m, f), getattr(m2, f))
        assert m.fingerprint() == m2.fingerprint()

    def test_fingerprint_sensitive_to_parameters(self):
        rng = np.random.default_rng(19)
        m = random_valid_model(rng, nv=1, nh=1)
        bumped = RtbmModel(m.t, m.q, m.w, m.bv + 1e-12, m.bh)
        assert m.fingerprint() != bumped.fingerprint()

    def test_parameters_immutable(self):
        rng = np.random.default_rng(20)
        m = random_valid_model(rng, nv=1, nh=1)
        with pytest.raises(ValueError):
            m.t[0, 0] = 5.0
