import math

import numpy as np
import pytest

from catchain.bounds import bstar_from_b
from catchain.kernels import memory_state, table_kernel
from catchain.models import (
    BinaryInfiniteOrderSpec,
    ObservationDrivenBinarySpec,
    model_to_kernel,
)
from catchain.prob import SeededRng, tv_distance
from catchain.simulate import (
    AR1Covariates,
    FiniteStateMarkovCovariates,
    HorizonError,
    IIDCovariates,
    UnsupportedCovariateError,
    coupled_ladder_mc,
    covariate_coupling_coeffs,
    exact_marginal_law,
    glued_coupling,
    kernel_distance_profile,
    path_to_csv,
    sample_covariates,
    sample_forward,
)


# -- covariate models -----------------------------------------------------------


def test_iid_constant_and_zero_rho_paths():
    x = sample_covariates(IIDCovariates(kind="const", mean=0.0), 50, SeededRng(1))
    assert np.all(x == 0.0)
    x0 = sample_covariates(AR1Covariates(rho=0.0, sd=1.0), 20000, SeededRng(2))
    lag1 = np.corrcoef(x0[:-1, 0], x0[1:, 0])[0, 1]
    assert abs(lag1) < 0.03


def test_ar1_stationary_autocorrelation():
    model = AR1Covariates(rho=0.8, sd=1.0)
    x = sample_covariates(model, 100_000, SeededRng(3))[:, 0]
    lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert lag1 == pytest.approx(0.8, abs=0.05)
    assert x.std() == pytest.approx(model.stationary_sd, rel=0.05)


def test_finite_markov_invariant_start():
    model = FiniteStateMarkovCovariates(
        transition=((0.9, 0.1), (0.2, 0.8)), emission=((0.0,), (1.0,))
    )
    pi = model.invariant()
    np.testing.assert_allclose(pi, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)
    s = model.sample_states(60_000, SeededRng(4))
    assert s.mean() == pytest.approx(pi[1], abs=0.02)


# -- forward sampling --------------------------------------------------------------


def test_sample_forward_memoryless_kernel_needs_no_burnin():
    k = model_to_kernel(BinaryInfiniteOrderSpec(a=[0.0], gamma=[0.6]))
    x = sample_covariates(IIDCovariates(), 64, SeededRng(5))
    path = sample_forward(k, x, 64, 1e-9, SeededRng(6))
    assert path.burnin_used == 0
    assert path.stationarity_gap_bound == 0.0
    assert path.y.size == 64


def test_sample_forward_burnin_matches_geometric_formula():
    k = model_to_kernel(ObservationDrivenBinarySpec(alpha=[0.4], beta=[0.5], gamma=[0.3]))
    window, eps = 10, 1e-3
    x = np.zeros((window + 256, 1))
    path = sample_forward(k, x, window, eps, SeededRng(7))
    bs = bstar_from_b(k.b, 300).values
    sums = np.array([bs[n : n + window].sum() for n in range(260)])
    oracle = int(np.argmax(sums <= eps))
    assert path.burnin_used == oracle
    assert path.stationarity_gap_bound <= eps


def test_sample_forward_horizon_error_when_budget_too_small():
    k = model_to_kernel(ObservationDrivenBinarySpec(alpha=[0.4], beta=[0.5], gamma=[0.3]))
    with pytest.raises(HorizonError):
        sample_forward(k, np.zeros((12, 1)), 10, 1e-9, SeededRng(8))


def test_sample_forward_two_initializations_tv_within_relaxation_bound():
    # memoryless-in-x binary kernel, exact laws vs empirical marginals
    table = np.array([[0.8, 0.2], [0.35, 0.65]])
    kern = table_kernel(table)
    reps = 40_000
    x = np.zeros((6, 1))
    gen = SeededRng(9).generator()
    counts = np.zeros((2, 6))
    for init in (0, 1):
        tab_cum = table.cumsum(axis=1)
        state = np.full(reps, init)
        for t in range(6):
            u = gen.random(reps)
            y = (tab_cum[state] < u[:, None]).sum(axis=1)
            counts[init, t] = y.mean()
            state = y
    bs = bstar_from_b(kern.b, 6).values
    for t in range(6):
        emp_tv = abs(counts[0, t] - counts[1, t])
        mc_err = 4.0 * math.sqrt(0.25 / reps) * 2
        assert emp_tv <= bs[t] + mc_err


def test_sample_forward_eps_refinement_certificates_compose():
    k = model_to_kernel(ObservationDrivenBinarySpec(alpha=[0.4], beta=[0.5], gamma=[0.3]))
    x = np.zeros((400, 1))
    loose = sample_forward(k, x, 20, 1e-2, SeededRng(10))
    tight = sample_forward(k, x, 20, 1e-4, SeededRng(10))
    assert loose.stationarity_gap_bound + tight.stationarity_gap_bound <= 1.1e-2


# -- glued coupling ------------------------------------------------------------------


def test_glued_coupling_identical_setup_gives_identical_paths():
    spec = ObservationDrivenBinarySpec(alpha=[0.4], beta=[0.5], gamma=[0.3])
    k = model_to_kernel(spec, max_lag_x=6)
    x = SeededRng(11).generator().normal(size=(8, 1))
    pair = glued_coupling(k, k, x, x, [0, 1, 0], [0, 1, 0], 8, SeededRng(12))
    assert not pair.mismatch.any()
    np.testing.assert_array_equal(pair.y1, pair.y2)


def test_glued_coupling_mismatch_rate_within_bound():
    table = np.array([[0.75, 0.25], [0.3, 0.7], [0.6, 0.4], [0.45, 0.55]])
    kern = table_kernel(table)
    length, reps = 6, 30_000
    y1, y2 = coupled_ladder_mc(table, table, 0, 3, 2, 2, length, reps, SeededRng(13))
    bs = bstar_from_b(kern.b, length).values
    mism = (y1 != y2).mean(axis=1)
    for t in range(1, length + 1):
        se = math.sqrt(max(mism[t - 1] * (1 - mism[t - 1]), 1e-9) / reps)
        assert mism[t - 1] <= bs[t - 1] + 4 * se


def test_single_draw_glued_coupling_matches_ladder_statistics():
    table = np.array([[0.75, 0.25], [0.3, 0.7], [0.6, 0.4], [0.45, 0.55]])
    kern = table_kernel(table)
    x = np.zeros((5, 1))
    hits = 0
    n_draws = 800
    for i in range(n_draws):
        pair = glued_coupling(kern, kern, x, x, [0, 0], [1, 1], 5, SeededRng(14, i))
        hits += int(pair.mismatch[4])
    bs = bstar_from_b(kern.b, 5).values
    rate = hits / n_draws
    assert rate <= bs[4] + 4 * math.sqrt(max(rate * (1 - rate), 1e-9) / n_draws)


def test_kernel_distance_profile_exact_sup():
    t_a = np.array([[0.8, 0.2], [0.4, 0.6]])
    t_b = np.array([[0.7, 0.3], [0.4, 0.6]])
    prof = kernel_distance_profile(table_kernel(t_a), table_kernel(t_b), np.zeros((4, 1)), np.zeros((4, 1)), 4)
    np.testing.assert_allclose(prof[1:], 0.1)


# -- exact laws ------------------------------------------------------------------------


def test_exact_marginal_law_memoryless_kernel_returns_kernel_row():
    k = model_to_kernel(BinaryInfiniteOrderSpec(a=[0.0], gamma=[0.5]), max_lag_y=1)
    law = exact_marginal_law(k, np.array([[0.4], [0.8]]), [0], 2)
    from scipy.special import expit

    np.testing.assert_allclose(law, [1 - expit(0.4), expit(0.4)], atol=1e-12)


def test_exact_marginal_law_converges_to_invariant_vector():
    table = np.array([[0.9, 0.1], [0.3, 0.7]])
    kern = table_kernel(table)
    law = exact_marginal_law(kern, np.zeros((200, 1)), [0], 200)
    evals, evecs = np.linalg.eig(table.T)
    pi = np.real(evecs[:, np.argmin(np.abs(evals - 1))])
    pi = np.abs(pi) / np.abs(pi).sum()
    np.testing.assert_allclose(law, pi, atol=1e-12)


def test_exact_marginal_tv_below_bstar_memory_two():
    gen = SeededRng(15).generator()
    raw = gen.dirichlet(np.ones(2), size=4)
    table = 0.7 * raw + 0.3 / 2
    kern = table_kernel(table)
    bs = bstar_from_b(kern.b, 10).values
    x = np.zeros((10, 1))
    law_a = exact_marginal_law(kern, x, list(memory_state(0, 2, 2)), 10)
    law_b = exact_marginal_law(kern, x, list(memory_state(3, 2, 2)), 10)
    assert tv_distance(law_a, law_b) <= bs[9] + 1e-12


# -- covariate coupling coefficients ------------------------------------------------------


def test_coupling_coeffs_iid_vanish_after_time_zero():
    seq = covariate_coupling_coeffs(IIDCovariates(), 6)
    assert np.all(seq.values[1:] == 0.0)


def test_coupling_coeffs_ar1_closed_form_and_monte_carlo():
    model = AR1Covariates(rho=0.5, sd=1.0)
    seq = covariate_coupling_coeffs(model, 6)
    sigma = model.stationary_sd
    expected0 = 2.0 * sigma / math.sqrt(math.pi)
    assert seq.values[0] == pytest.approx(expected0, rel=1e-12)
    assert seq.values[3] == pytest.approx(expected0 * 0.125, rel=1e-12)
    gen = SeededRng(16).generator()
    x0 = sigma * gen.normal(size=200_000)
    x0p = sigma * gen.normal(size=200_000)
    t = 3
    mc = np.abs(0.5**t * (x0 - x0p)).mean()
    assert mc == pytest.approx(seq.values[t], rel=0.02)


def test_coupling_coeffs_ar1_discrete_metric_unsupported():
    with pytest.raises(UnsupportedCovariateError):
        covariate_coupling_coeffs(AR1Covariates(rho=0.5), 4, metric="discrete")


def test_coupling_coeffs_two_state_meeting_time():
    model = FiniteStateMarkovCovariates(
        transition=((0.9, 0.1), (0.1, 0.9)), emission=((0.0,), (1.0,))
    )
    seq = covariate_coupling_coeffs(model, 12, metric="discrete")
    # independent-until-meeting: off-diagonal mass shrinks by the meeting
    # probability 2 * 0.9 * 0.1 each step
    decay = 1.0 - 2 * 0.9 * 0.1
    np.testing.assert_allclose(seq.values[1:], 0.5 * decay ** np.arange(1, 13), rtol=1e-12)
    # Monte Carlo cross-check at t = 4
    gen = SeededRng(17).generator()
    reps = 100_000
    s1 = (gen.random(reps) < 0.5).astype(int)
    s2 = (gen.random(reps) < 0.5).astype(int)
    P = np.array([[0.9, 0.1], [0.1, 0.9]])
    for _ in range(4):
        stay1 = gen.random(reps) < P[s1, s1]
        nxt1 = np.where(stay1, s1, 1 - s1)
        together = s1 == s2
        stay2 = gen.random(reps) < P[s2, s2]
        nxt2 = np.where(together, nxt1, np.where(stay2, s2, 1 - s2))
        s1, s2 = nxt1, nxt2
    mc = float((s1 != s2).mean())
    assert mc == pytest.approx(seq.values[4], abs=4 * math.sqrt(0.25 / reps))


# -- CSV export ---------------------------------------------------------------------------


def test_path_csv_header_and_length():
    k = model_to_kernel(ObservationDrivenBinarySpec(alpha=[0.4], beta=[0.5], gamma=[0.3]))
    x = sample_covariates(IIDCovariates(), 120, SeededRng(18))
    path = sample_forward(k, x, 30, 1e-2, SeededRng(19))
    text = path_to_csv(path)
    lines = text.splitlines()
    assert lines[0] == "t,y,x_1,lambda_1"
    assert len(lines) == 31
