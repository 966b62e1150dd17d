from dataclasses import replace

import numpy as np
import pytest

from gxgscreen.design import TermIndex
from gxgscreen.errors import ConfigError, InsufficientSampleError
from gxgscreen.lowrank import cv_lambda_ell, fit_rank1
from gxgscreen.screen import ScreenConfig, SelectionModel, lr_screen, slr_screen

from conftest import genotypes


@pytest.fixture(scope="module")
def small_fit():
    rng = np.random.default_rng(21)
    G = genotypes(rng, 200, 6)
    Y = 1 + G[:, 0] * G[:, 1] + 0.5 * G[:, 1] * G[:, 2] + rng.normal(size=200)
    return fit_rank1(Y, G, 1.0)


def test_lr_infinite_threshold_keeps_intercept(small_fit):
    sel = lr_screen(small_fit, 1e300)
    assert sel.labels == ["(Intercept)"]


def test_lr_tiny_threshold_keeps_nonzero(small_fit):
    sel = lr_screen(small_fit, 1e-300)
    stat = np.abs(small_fit.beta / small_fit.se_beta)
    expected = {t for t, s in zip(small_fit.terms, stat) if s > 0} | {TermIndex.intercept()}
    assert set(sel.terms) == expected


def test_lr_threshold_rule(small_fit):
    sel = lr_screen(small_fit, 1.96)
    stat = np.abs(small_fit.beta / small_fit.se_beta)
    for t, s in zip(small_fit.terms, stat):
        assert (t in sel) == (s > 1.96 or t.is_intercept)
    np.testing.assert_allclose(np.abs(sel.t_stats), [stat[small_fit.terms.index(t)] for t in sel.terms])


def test_lr_zero_se_cases(small_fit):
    beta = small_fit.beta.copy()
    se = small_fit.se_beta.copy()
    beta[2], se[2] = 0.0, 0.0
    beta[3], se[3] = 0.4, 0.0
    fit = replace(small_fit, beta=beta, se_beta=se)
    sel = lr_screen(fit, 1.96)
    assert fit.terms[2] not in sel
    assert fit.terms[3] in sel


def test_lr_top_k(small_fit):
    sel = lr_screen(small_fit, top_k=3)
    assert len(sel.effects) == 3
    stat = np.abs(small_fit.beta / small_fit.se_beta)
    stat[0] = -1
    best = {small_fit.terms[i] for i in np.argsort(-stat)[:3]}
    assert sel.effects == best


def test_selection_model_canonical_order_and_io():
    terms = (TermIndex.interaction(2, 1), TermIndex.intercept(), TermIndex.main(3))
    sel = SelectionModel(terms, np.array([0.5, 1.0, -2.0]), "LR", t_stats=np.array([3.0, 1.0, -4.0]))
    assert sel.labels == ["(Intercept)", "g3", "g1:g2"]
    np.testing.assert_array_equal(sel.estimates, [1.0, -2.0, 0.5])
    back = SelectionModel.from_dict(sel.to_dict())
    assert back.labels == sel.labels
    np.testing.assert_array_equal(back.t_stats, sel.t_stats)
    assert sel.to_csv().splitlines() == ["term,estimate", "(Intercept),1.0", "g3,-2.0", "g1:g2,0.5"]
    with pytest.raises(ValueError):
        SelectionModel((TermIndex.main(1), TermIndex.main(1)), np.zeros(2), "LR")


def test_screen_config_validation():
    with pytest.raises(ConfigError):
        ScreenConfig(alpha_ell=0)
    with pytest.raises(ConfigError):
        ScreenConfig(rank=3)
    with pytest.raises(ConfigError):
        ScreenConfig(lambda_s_grid=())


def test_slr_requires_enough_samples():
    rng = np.random.default_rng(0)
    with pytest.raises(InsufficientSampleError):
        slr_screen(rng.normal(size=30), genotypes(rng, 30, 20))


def test_slr_subset_of_lr_and_loci_relabelled():
    rng = np.random.default_rng(22)
    G = genotypes(rng, 200, 12)
    Y = G[:, 7] * G[:, 9] + rng.normal(size=200)
    loci = [2, 5, 8, 10, 11]
    sel = slr_screen(Y, G, ScreenConfig(lambda_ell_grid=(1.0,)), loci=loci)
    assert set(sel.terms) <= set(sel.parent.terms)
    assert all(j in loci for j in sel.loci)
    assert TermIndex.interaction(8, 10) in sel


def test_slr_relabelling_invariance():
    rng = np.random.default_rng(23)
    p = 8
    G = genotypes(rng, 300, p)
    Y = 1.2 * G[:, 1] * G[:, 4] - 0.8 * G[:, 4] * G[:, 6] + 0.5 * G[:, 1] * G[:, 6] + rng.normal(size=300)
    cfg = ScreenConfig(lambda_ell_grid=(1.0,), lambda_s_grid=(20.0,))
    base = slr_screen(Y, G, cfg)
    perm = rng.permutation(p)  # new column i holds old locus perm[i] + 1
    moved = slr_screen(Y, G[:, perm], cfg)
    back = moved.relabel([int(j) + 1 for j in perm])
    assert set(back.terms) == set(base.terms)


@pytest.mark.slow
def test_lr_keeps_strong_pair():
    hits = 0
    for rep in range(100):
        rng = np.random.default_rng(5000 + rep)
        G = genotypes(rng, 400, 50)
        Y = G[:, 10] * G[:, 20] + rng.normal(size=400)
        lam = cv_lambda_ell(Y, G, 1, seed=rep)
        sel = lr_screen(fit_rank1(Y, G, lam), 1.96)
        hits += TermIndex.interaction(11, 21) in sel
    assert hits >= 90


@pytest.mark.slow
def test_slr_null():
    small = 0
    for rep in range(50):
        rng = np.random.default_rng(6000 + rep)
        G = genotypes(rng, 400, 50)
        sel = slr_screen(rng.normal(size=400), G, ScreenConfig(seed=rep))
        small += len(sel.effects) <= 2
        assert set(sel.terms) <= set(sel.parent.terms)
    assert small >= 45


@pytest.mark.slow
def test_slr_finds_top_pair():
    hits = 0
    w = [(4, 5, 1.0), (9, 10, 0.8), (14, 15, 0.6), (19, 20, 0.4), (24, 25, 0.2)]
    for rep in range(50):
        rng = np.random.default_rng(7000 + rep)
        G = genotypes(rng, 400, 50)
        Y = sum(c * G[:, j] * G[:, k] for j, k, c in w) + rng.normal(size=400)
        sel = slr_screen(Y, G, ScreenConfig(seed=rep))
        hits += TermIndex.interaction(5, 6) in sel
        assert set(sel.terms) <= set(sel.parent.terms)
    assert hits >= 45
