from dataclasses import replace

import numpy as np
import pytest

from gxgscreen.design import build_design, vecp
from gxgscreen.errors import ConfigError, InsufficientSampleError, SingularDesignError
from gxgscreen.lowrank import (
    FitOptions, _newton_rank1, covariance_matrix, cv_lambda_ell, estimate_cov, estimate_sigma2, fit_lowrank,
    fit_rank1, fit_rank2k, objective_gradient, penalized_loglik,
)
from gxgscreen.theta import LowRankTheta, effective_dim, jacobian_delta, working_jacobian

from conftest import genotypes


def random_theta(rng, p, rank):
    if rank == 1:
        return LowRankTheta.rank1(rng.normal(), rng.normal(size=p), rng.normal(size=p), rng.choice([-1, 1]))
    k = rank // 2
    return LowRankTheta.rank2k(rng.normal(), rng.normal(size=p), rng.normal(size=(p, k)), rng.normal(size=(p, k)))


# ----------------------------------------------------------- parameterisation


def test_effective_dim():
    assert effective_dim(10, 1) == 21
    assert effective_dim(10, 2) == 1 + 10 + 19
    assert effective_dim(50, 4) == 1 + 50 + (200 - 8 + 2)


def test_rank1_eta_and_beta(rng):
    th = LowRankTheta.rank1(0.5, rng.normal(size=6), rng.normal(size=6), -1)
    np.testing.assert_allclose(th.eta(), -np.outer(th.alpha, th.alpha))
    np.testing.assert_allclose(th.beta()[7:], vecp(th.eta() - np.diag(np.diag(th.eta()))))
    assert th.n_params == 13


@pytest.mark.parametrize("k", [1, 2, 3])
def test_rank2k_induced_rank(rng, k):
    th = random_theta(rng, 9, 2 * k)
    s = np.linalg.svd(th.eta(), compute_uv=False)
    assert np.sum(s > 1e-10 * s[0]) <= 2 * k
    assert th.n_params == 1 + 9 + 18 * k


def test_delta_zero_alpha():
    th = LowRankTheta.rank1(1.0, np.ones(4), np.zeros(4), 1)
    D = jacobian_delta(th)
    assert np.all(D[5:] == 0)
    np.testing.assert_array_equal(D[:5, :5], np.eye(5))


def test_delta_hand_example():
    th = LowRankTheta.rank1(0.0, np.zeros(3), [1.0, 2.0, 3.0], 1)
    D = jacobian_delta(th)
    np.testing.assert_array_equal(D[4, 4:], [2.0, 1.0, 0.0])  # pair (2,1) is the first vecp row


@pytest.mark.parametrize("rank", [1, 2, 4])
def test_delta_finite_differences(rng, rank):
    h = 1e-6
    for _ in range(20):
        th = random_theta(rng, 6, rank)
        v = th.to_vector()
        fd = np.empty((th.beta().size, v.size))
        for i in range(v.size):
            e = np.zeros_like(v)
            e[i] = h
            fd[:, i] = (th.with_vector(v + e).beta() - th.with_vector(v - e).beta()) / (2 * h)
        D = jacobian_delta(th)
        assert np.linalg.norm(D - fd) <= 1e-6 * np.linalg.norm(fd)


@pytest.mark.parametrize("rank", [1, 2])
def test_working_jacobian_is_x_delta(rng, rank):
    G = genotypes(rng, 25, 7)
    th = random_theta(rng, 7, rank)
    X = build_design(G).X
    np.testing.assert_allclose(working_jacobian(th, G), X @ jacobian_delta(th), atol=1e-10)
    np.testing.assert_allclose(th.predict(G), X @ th.beta(), atol=1e-10)


def test_theta_dict_round_trip(rng):
    for rank in (1, 2, 4):
        th = random_theta(rng, 5, rank)
        back = LowRankTheta.from_dict(th.to_dict())
        np.testing.assert_array_equal(back.beta(), th.beta())


# ---------------------------------------------------------------- objective


def test_loglik_zero_theta(rng):
    G, Y = genotypes(rng, 30, 4), rng.normal(size=30)
    th = LowRankTheta.rank1(0.0, np.zeros(4), np.zeros(4), 1)
    assert penalized_loglik(th, Y, G, 3.0) == pytest.approx(-0.5 * Y @ Y, rel=1e-14)


def test_loglik_unpenalised_is_half_rss(rng):
    G, Y = genotypes(rng, 30, 4), rng.normal(size=30)
    th = random_theta(rng, 4, 1)
    X = build_design(G).X
    rss = np.sum((Y - X @ th.beta()) ** 2)
    assert penalized_loglik(th, Y, G, 0.0) == pytest.approx(-0.5 * rss, rel=1e-12)


@pytest.mark.parametrize("rank", [1, 2])
def test_loglik_penalty_linear(rng, rank):
    G, Y = genotypes(rng, 30, 4), rng.normal(size=30)
    th = random_theta(rng, 4, rank)
    diff = penalized_loglik(th, Y, G, 10.0) - penalized_loglik(th, Y, G, 0.0)
    assert diff == pytest.approx(-5.0 * np.sum(th.to_vector() ** 2), rel=1e-12)


def test_sign_symmetry(rng):
    G, Y = genotypes(rng, 40, 5), rng.normal(size=40)
    th = random_theta(rng, 5, 1)
    flipped = LowRankTheta.rank1(th.gamma, th.xi, -th.alpha, th.u)
    assert penalized_loglik(th, Y, G, 2.0) == pytest.approx(penalized_loglik(flipped, Y, G, 2.0), rel=1e-13)


# -------------------------------------------------------------------- rank 1


def test_null_model_fit():
    rng = np.random.default_rng(5)
    G = genotypes(rng, 500, 5)
    Y = 2.0 + rng.normal(size=500)
    fit = fit_rank1(Y, G, 0.01)
    assert abs(fit.beta[0] - 2.0) <= 3 * fit.se_beta[0]
    # sampling scale of each coefficient is about 0.1 here
    assert np.linalg.norm(fit.theta.xi) < 0.5
    assert np.linalg.norm(fit.theta.eta() - np.diag(np.diag(fit.theta.eta()))) < 0.5


def test_sign_unidentified_with_two_loci():
    # with two loci, u a1 a2 can take either sign under either u, so the two
    # branches reach the same optimum and u carries no information
    rng = np.random.default_rng(7)
    G = genotypes(rng, 500, 2)
    Y = -G[:, 0] * G[:, 1] + rng.normal(size=500)
    start = rng.normal(size=2) / np.sqrt(2)
    fits = [_newton_rank1(Y, G, 1.0, LowRankTheta.rank1(Y.mean(), np.zeros(2), start, u), FitOptions())
            for u in (1, -1)]
    assert fits[0][1] == pytest.approx(fits[1][1], rel=1e-10)
    np.testing.assert_allclose(fits[0][0].beta(), fits[1][0].beta(), atol=1e-7)


@pytest.mark.slow
def test_negative_sign_recovered():
    # three loci make the sign identifiable: eta_12 eta_13 eta_23 = u^3 (a1 a2 a3)^2
    picks = []
    a = np.array([1.0, 1.0, 1.0, 0, 0])
    for rep in range(100):
        rng = np.random.default_rng(1000 + rep)
        G = genotypes(rng, 500, 5)
        Y = LowRankTheta.rank1(0.0, np.zeros(5), a, -1).predict(G) + rng.normal(size=500)
        picks.append(fit_rank1(Y, G, 1.0, FitOptions(seed=rep)).theta.u)
    assert np.mean(np.array(picks) == -1) >= 0.95


def test_huge_penalty_shrinks_everything(rng):
    G = genotypes(rng, 80, 4)
    Y = 3 + G[:, 0] * G[:, 1] + rng.normal(size=80)
    fit = fit_rank1(Y, G, 1e8)
    assert np.max(np.abs(fit.theta.to_vector())) < 1e-3
    assert np.max(np.abs(fit.beta)) < 1e-3


def test_newton_fixed_point(rng):
    G = genotypes(rng, 200, 6)
    Y = 1 + G[:, 0] - 0.5 * G[:, 2] * G[:, 3] + rng.normal(size=200)
    fit = fit_rank1(Y, G, 2.0)
    assert fit.converged
    g = objective_gradient(fit.theta, Y, G, 2.0)
    assert np.max(np.abs(g)) <= 1e-8
    assert fit.final_penalized_loglik == pytest.approx(penalized_loglik(fit.theta, Y, G, 2.0), rel=1e-12)


@pytest.mark.parametrize("hessian", ["auto", "gauss-newton"])
def test_both_hessians_reach_same_objective(rng, hessian):
    G = genotypes(rng, 150, 5)
    Y = G[:, 0] * G[:, 1] + 0.5 * G[:, 1] * G[:, 2] + rng.normal(size=150)
    ref = fit_rank1(Y, G, 1.0)
    fit = fit_rank1(Y, G, 1.0, FitOptions(hessian=hessian, max_iter=5000))
    assert fit.final_penalized_loglik == pytest.approx(ref.final_penalized_loglik, rel=1e-7)


def test_p1_is_ridge(rng):
    g = genotypes(rng, 50, 1)
    Y = 0.7 + 1.3 * g[:, 0] + rng.normal(size=50)
    lam = 0.8
    fit = fit_rank1(Y, g, lam)
    X = np.hstack([np.ones((50, 1)), g])
    ridge = np.linalg.solve(X.T @ X + lam * np.eye(2), X.T @ Y)
    np.testing.assert_allclose(fit.beta, ridge, atol=1e-8)


def test_insufficient_sample():
    rng = np.random.default_rng(0)
    G = genotypes(rng, 21, 10)
    with pytest.raises(InsufficientSampleError):
        fit_rank1(rng.normal(size=21), G, 1.0)


def test_singular_at_zero_penalty():
    G = np.ones((40, 3))  # constant loci duplicate the intercept
    with pytest.raises(SingularDesignError, match="lambda_ell > 0"):
        fit_rank1(np.arange(40.0), G, 0.0)


def test_bad_rank_and_lambda(rng):
    G, Y = genotypes(rng, 40, 3), rng.normal(size=40)
    with pytest.raises(ConfigError):
        fit_lowrank(Y, G, 3, 1.0)
    with pytest.raises(ConfigError):
        fit_lowrank(Y, G, 1, -1.0)


# ------------------------------------------------------------------- rank 2k


def test_als_trace_monotone(rng):
    G = genotypes(rng, 80, 8)
    Y = G[:, 0] * G[:, 1] - G[:, 2] * G[:, 3] + rng.normal(size=80)
    fit = fit_rank2k(Y, G, 0.5, k=2)
    assert np.all(np.diff(fit.trace) >= -1e-10)
    assert fit.final_penalized_loglik == pytest.approx(fit.trace[-1])


@pytest.mark.slow
def test_rank2_truth_recovered():
    errs = []
    for rep in range(50):
        rng = np.random.default_rng(2000 + rep)
        p = 10
        a = np.zeros(p)
        b = np.zeros(p)
        a[:3] = [1.0, 0.8, -0.6]
        b[2:5] = [0.7, 1.0, 0.5]
        eta = np.outer(a, b) + np.outer(b, a)
        G = genotypes(rng, 800, p)
        X = build_design(G).X
        beta = np.concatenate([[0.0], np.zeros(p), vecp(eta - np.diag(np.diag(eta)))])
        Y = X @ beta + rng.normal(size=800)
        fit = fit_rank2k(Y, G, 1.0, k=1, options=FitOptions(seed=rep))
        # diagonal of eta never enters the model, so compare off-diagonal parts
        off = ~np.eye(p, dtype=bool)
        errs.append(np.linalg.norm((fit.theta.eta() - eta)[off]) / np.linalg.norm(eta[off]))
    assert np.median(errs) <= 0.2


# ------------------------------------------------------------------------ CV


def test_cv_singleton_and_empty(rng):
    G, Y = genotypes(rng, 30, 3), rng.normal(size=30)
    assert cv_lambda_ell(Y, G, 1, [4.2]) == 4.2
    with pytest.raises(ConfigError):
        cv_lambda_ell(Y, G, 1, [])


def test_cv_deterministic(rng):
    G, Y = genotypes(rng, 60, 4), rng.normal(size=60)
    grid = [0.1, 1.0, 10.0, 100.0]
    assert cv_lambda_ell(Y, G, 1, grid, seed=3) == cv_lambda_ell(Y, G, 1, grid, seed=3)


@pytest.mark.slow
def test_cv_prefers_heavy_penalty_on_noise():
    picks = []
    for rep in range(50):
        rng = np.random.default_rng(3000 + rep)
        G = genotypes(rng, 100, 5)
        Y = rng.normal(size=100)
        picks.append(cv_lambda_ell(Y, G, 1, [0.01, 100.0], seed=rep))
    assert np.mean(np.array(picks) == 100.0) >= 0.9


# ----------------------------------------------------------------- inference


def test_sigma2_divisor(rng):
    G = genotypes(rng, 100, 10)
    Y = rng.normal(size=100)
    fit = fit_rank1(Y, G, 1.0)
    assert fit.d_r == 21
    rss = np.sum((Y - build_design(G).X @ fit.beta) ** 2)
    assert estimate_sigma2(fit, Y, G) == pytest.approx(rss / 79, rel=1e-12)
    assert fit.sigma2 == pytest.approx(rss / 79, rel=1e-12)


def test_sigma2_perfect_fit(rng):
    G = genotypes(rng, 60, 4)
    th = LowRankTheta.rank1(1.0, [0.5, 0, 0, -0.2], [1.0, 0.5, 0, 0], 1)
    Y = th.predict(G)
    fit = replace(fit_rank1(Y, G, 1.0), theta=th)
    assert estimate_sigma2(fit, Y, G) == 0.0


def test_zero_sigma_zero_se(rng):
    G = genotypes(rng, 60, 4)
    th = random_theta(rng, 4, 1)
    assert np.all(estimate_cov(th, G, 1.0, 0.0) == 0)


def test_se_at_zero_alpha_is_ridge_formula():
    # a penalty above the largest residual curvature makes alpha = 0 a local
    # minimum; the alpha directions then drop out of the pseudo-inverse
    rng = np.random.default_rng(11)
    G = genotypes(rng, 600, 2)
    Y = 1.0 + 0.5 * G[:, 0] - 0.3 * G[:, 1] + rng.normal(size=600)
    lam = 50.0
    fit = fit_rank1(Y, G, lam)
    assert np.max(np.abs(fit.theta.alpha)) < 1e-8
    X = np.hstack([np.ones((600, 1)), G])
    se = np.sqrt(fit.sigma2 * np.diag(np.linalg.inv(X.T @ X + lam * np.eye(3))))
    np.testing.assert_allclose(fit.se_beta[:3], se, rtol=1e-6)
    assert np.all(fit.se_beta[3:] < 1e-12)


def test_se_matches_lse_for_main_effects():
    # n large enough that a penalty forcing alpha = 0 is small next to X^T X
    rng = np.random.default_rng(12)
    n = 40_000
    G = genotypes(rng, n, 2)
    Y = 1.0 + 0.5 * G[:, 0] - 0.3 * G[:, 1] + rng.normal(size=n)
    fit = fit_rank1(Y, G, 1000.0)
    assert np.max(np.abs(fit.theta.alpha)) < 1e-8
    X = np.hstack([np.ones((n, 1)), G])
    b, *_ = np.linalg.lstsq(X, Y, rcond=None)
    s2 = np.sum((Y - X @ b) ** 2) / (n - 3)
    se_lse = np.sqrt(np.diag(np.linalg.inv(X.T @ X)) * s2)
    np.testing.assert_allclose(fit.se_beta[:3], se_lse, rtol=0.10)


@pytest.mark.parametrize("rank", [1, 2])
def test_covariance_psd(rng, rank):
    G = genotypes(rng, 120, 6)
    Y = G[:, 0] * G[:, 1] + rng.normal(size=120)
    fit = fit_lowrank(Y, G, rank, 1.0)
    S = covariance_matrix(fit.theta, G, 1.0, fit.sigma2)
    ev = np.linalg.eigvalsh(S)
    assert ev.min() >= -1e-8 * ev.max()
    np.testing.assert_allclose(np.sqrt(np.diag(S) / 120), fit.se_beta, rtol=1e-8, atol=1e-14)
    assert np.all(fit.se_beta >= 0) and fit.sigma2 >= 0


@pytest.mark.slow
def test_sigma2_consistent():
    ok = 0
    alpha = np.array([1.0, -0.8, 0.6, 0.5, -0.4, 0.3, 0.7, -0.5, 0.4, 0.6])
    for rep in range(200):
        rng = np.random.default_rng(4000 + rep)
        G = genotypes(rng, 2000, 10)
        th = LowRankTheta.rank1(0.5, np.zeros(10), alpha, 1)
        Y = th.predict(G) + rng.normal(size=2000)
        ok += 0.9 <= fit_rank1(Y, G, 1.0).sigma2 <= 1.1
    assert ok / 200 >= 0.9


def test_fit_result_json(rng):
    import json
    G, Y = genotypes(rng, 40, 3), rng.normal(size=40)
    d = json.loads(json.dumps(fit_rank1(Y, G, 1.0).to_dict()))
    assert set(d["beta"]) == {"(Intercept)", "g1", "g2", "g3", "g1:g2", "g1:g3", "g2:g3"}
    assert d["d_r"] == 7 and d["theta"]["form"] == "rank1"
