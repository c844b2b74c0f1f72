import itertools
import math

import numpy as np
import numpy.testing as npt
import pytest

from models import Partition, SymmetricTensor
from schemas.configs import CertifyOptions
from schemas.model_params import ModelParams
from services.certifier import (Certifier, bernstein_tail_check, bernstein_threshold, certificate, compute_lambda,
                                delta, dual_witness_check, estimate_probabilities, expected_delta, lemma1_check,
                                noise_tensor, projected_fiber_average, projected_noise_linf, theorem_threshold,
                                threshold_terms)
from services.partition_solver import exhaustive_search, exactness
from services.planted_model import agreement_tensor, generate_instance
from services.tensor_core import entrywise_l1, entrywise_linf, scale
from tests.helpers import random_partition
from utils.errors import ParameterError
from utils.helpers import make_rng

FAST = CertifyOptions(restarts=16, heuristic_restarts=32, oracle_grid=5)


def test_zero_noise_certificate():
    params = ModelParams(n=6, m=3, r=2, k=3, p=1.0, q=0.0)
    for seed in range(3):
        instance = generate_instance(params, seed)
        assert entrywise_linf(noise_tensor(instance)) == 0.0
        report = certificate(instance, FAST)
        assert report.lam == 0.0
        assert report.margin == pytest.approx(0.5)
        assert report.passes
        assert report.failed_checks() == []


def test_noise_entries_in_bernoulli_range(small_instance):
    noise = noise_tensor(small_instance)
    assert noise.values.min() >= -0.9 - 1e-12
    assert noise.values.max() <= 1.0


def test_constant_lambda_formula():
    params = ModelParams(n=8, m=3, r=2, k=4, p=0.9, q=0.1)
    instance = generate_instance(params, 1)
    lam = compute_lambda(instance, mode='constant', c=1.0, options=FAST)
    assert lam == pytest.approx(3.0 * math.sqrt(0.9 * 0.9 * 3 * 8 * math.log(3)))


def test_measured_lambda_dominates_power_iteration(small_instance):
    from services.spectral_nuclear import power_iteration
    lam = compute_lambda(small_instance, options=FAST)
    lower = power_iteration(noise_tensor(small_instance), restarts=16).value
    assert lam >= 3.0 * lower - 1e-12
    with pytest.raises(ParameterError):
        compute_lambda(small_instance, mode='guess', options=FAST)


def test_dual_witness_checks():
    for assignment in ([0, 0, 1, 1, -1], [0, 1, 2, 0, 1, 2], [0]):
        truth = Partition(assignment)
        m = 3
        params = ModelParams(n=truth.n, m=m, r=truth.r, k=truth.k, p=0.9, q=0.1)
        instance = generate_instance(params, 0)
        checks = dual_witness_check(instance, options=FAST)
        assert [c.name for c in checks] == ['witness_in_span', 'witness_unit_norm', 'witness_attains_nuclear']
        assert all(c.passed for c in checks), checks


def test_perturbed_witness_fails(small_instance):
    k = small_instance.params.k
    values = scale(small_instance.agreement, k ** -1.5).values.copy()
    values[0, 0, 0] += 0.1
    checks = dual_witness_check(small_instance, witness=SymmetricTensor(values), options=FAST)
    assert not checks[0].passed


def test_projected_noise_zero():
    instance = generate_instance(ModelParams(n=6, m=3, r=2, k=3, p=1.0, q=0.0), 0)
    projected = projected_noise_linf(instance, 0.0)
    assert projected.exact == 0.0
    assert projected.bound == 0.0


def test_projected_noise_within_symmetric_bound():
    for seed in range(20):
        params = ModelParams(n=7, m=3, r=2, k=3, p=0.7, q=0.3)
        instance = generate_instance(params, seed)
        projected = projected_noise_linf(instance, 1.0)
        assert projected.within_bound
        assert projected.exact <= projected.bound + 1e-9


def test_fiber_average_matches_loop(small_instance):
    noise = noise_tensor(small_instance)
    truth = small_instance.truth
    k, m = truth.k, 3
    abar = projected_fiber_average(truth, noise)
    for i in range(truth.n):
        members = truth.neighborhood(i)
        for i2, i3 in itertools.product(members, repeat=2):
            expected = sum(noise.values[i, j2, j3] for j2 in members for j3 in members) / k ** (m - 1)
            assert abar.values[i, i2, i3] == pytest.approx(expected, abs=1e-12)


def test_fiber_average_zero_on_unclustered():
    params = ModelParams(n=7, m=3, r=2, k=3, p=0.7, q=0.3)
    instance = generate_instance(params, 2)
    lonely = instance.truth.unassigned()[0]
    abar = projected_fiber_average(instance.truth, noise_tensor(instance))
    npt.assert_array_equal(abar.values[:, lonely, :], 0.0)


def test_bernstein_threshold_formula():
    params = ModelParams(n=8, m=3, r=2, k=4, p=0.5, q=0.3)
    log_n = math.log(8)
    expected = math.sqrt(2 * 4 * 16 * 0.5 * 0.7 * log_n) + 2 / 3 * 4 * log_n
    assert bernstein_threshold(params) == pytest.approx(expected)


def test_bernstein_zero_noise_and_minimum_trials():
    params = ModelParams(n=4, m=3, r=2, k=2, p=1.0, q=0.0)
    report = bernstein_tail_check(params, 1000, seed=1)
    assert report.frequency == 0.0
    assert report.samples == 4000
    with pytest.raises(ParameterError):
        bernstein_tail_check(params, 999)


@pytest.mark.slow
def test_bernstein_tail_frequency():
    params = ModelParams(n=8, m=3, r=2, k=4, p=0.5, q=0.3)
    report = bernstein_tail_check(params, 10_000, seed=5)
    assert report.bound == 8 ** -4
    assert report.within_bound


def test_threshold_examples():
    terms = threshold_terms(n=4, m=2, k=2, p=1.0, q=0.0, c=1.0)
    assert terms.lhs == pytest.approx(1.0 / math.sqrt(32 * math.log(2)))
    assert terms.rhs == pytest.approx(math.sqrt(2.0))
    assert terms.predicate == (terms.lhs >= terms.rhs and terms.side_condition)

    flat = threshold_terms(n=8, m=3, k=4, p=0.4, q=0.4, c=1.0)
    assert flat.lhs == 0.0 and flat.ratio == 0.0 and not flat.predicate
    with pytest.raises(ParameterError):
        threshold_terms(n=8, m=3, k=4, p=0.5, q=0.4, c=0.0)

    params = ModelParams(n=16, m=3, r=2, k=8, p=0.9, q=0.1)
    assert theorem_threshold(params, 0.01).ratio == pytest.approx(threshold_terms(16, 3, 8, 0.9, 0.1, 0.01).ratio)


def test_threshold_monotone_in_k():
    previous = False
    for k in range(1, 40):
        predicate = threshold_terms(n=40, m=3, k=k, p=0.9, q=0.1, c=0.05).predicate
        assert predicate or not previous
        previous = predicate


def test_delta_and_mean_identity():
    rng = make_rng(8)
    params = ModelParams(n=7, m=3, r=2, k=3, p=0.8, q=0.3)
    instance = generate_instance(params, 4)
    assert delta(instance.adjacency, instance.agreement, instance.agreement) == 0.0
    for _ in range(20):
        other = random_partition(rng, 7, 2, 3)
        y = agreement_tensor(other, 3)
        difference = entrywise_l1(SymmetricTensor(instance.agreement.values - y.values))
        assert expected_delta(instance, y) == pytest.approx(0.5 * (0.8 - 0.3) * difference, abs=1e-9)


def test_certified_instance_has_positive_delta():
    params = ModelParams(n=6, m=3, r=2, k=3, p=1.0, q=0.0)
    instance = generate_instance(params, 12)
    assert Certifier(FAST).certify(instance).passes
    rng = make_rng(1)
    for _ in range(100):
        other = random_partition(rng, 6, 2, 3)
        if exactness(other, instance.truth):
            continue
        assert delta(instance.adjacency, instance.agreement, agreement_tensor(other, 3)) > 0


def test_estimation_mode():
    params = ModelParams(n=6, m=3, r=2, k=3, p=1.0, q=0.0)
    instance = generate_instance(params, 3)
    assert estimate_probabilities(instance.adjacency, instance.truth) == (1.0, 0.0)
    report = Certifier(FAST).audit(instance.adjacency, instance.truth)
    assert report.passes
    flat = SymmetricTensor(np.ones((6, 6, 6)))
    with pytest.raises(ParameterError):
        Certifier(FAST).audit(flat, instance.truth)


def test_batch_follows_seed_order(small_params):
    certifier = Certifier(FAST)
    seeds = [5, 1, 9]
    serial = certifier.certify_batch(small_params, seeds)
    threaded = certifier.certify_batch(small_params, seeds, threads=3)
    assert [r.seed for r in threaded] == seeds
    assert [r.margin for r in threaded] == [r.margin for r in serial]


def test_report_fields_are_finite(small_instance):
    report = Certifier(FAST).certify(small_instance)
    for value in (report.lam, report.z_spectral_bound, report.lemma1_rhs, report.linf_projected, report.margin):
        assert math.isfinite(value)
    assert report.spectral_method == 'heuristic'
    z_ok = report.z_spectral_bound <= 2 / 6 + 1e-9
    witness_ok = not any(name.startswith('witness_') for name in report.failed_checks())
    assert report.passes == (report.margin >= 0 and z_ok and witness_ok)


def test_small_instances_use_the_oracle():
    params = ModelParams(n=4, m=3, r=2, k=2, p=0.8, q=0.2)
    report = Certifier(FAST).certify(generate_instance(params, 0))
    assert report.spectral_method == 'oracle'


def test_lemma1_zero_noise():
    report = lemma1_check(ModelParams(n=6, m=3, r=2, k=3, p=1.0, q=0.0), trials=3, c=1.0, options=FAST)
    assert report.norms == [0.0, 0.0, 0.0]
    assert report.pass_fraction == 1.0
    assert report.empirical_c == 0.0
    with pytest.raises(ParameterError):
        lemma1_check(ModelParams(n=6, m=3, r=2, k=3, p=1.0, q=0.0), trials=0, c=1.0)


@pytest.mark.slow
def test_lemma1_calibration():
    params = ModelParams(n=8, m=3, r=2, k=4, p=0.5, q=0.4)
    first = lemma1_check(params, trials=100, c=3.0, seed=1)
    second = lemma1_check(params, trials=100, c=3.0, seed=2)
    assert math.isfinite(first.empirical_c)
    assert first.pass_fraction == 1.0
    assert abs(first.empirical_c - second.empirical_c) <= 0.2 * first.empirical_c


@pytest.mark.slow
@pytest.mark.parametrize('params,seeds,minimum', [
    (ModelParams(n=12, m=3, r=2, k=6, p=0.999, q=0.001), 150, 100),
    (ModelParams(n=16, m=2, r=2, k=8, p=0.99, q=0.01), 40, 1),
])
def test_certificate_agrees_with_exhaustive_search(params, seeds, minimum):
    certifier = Certifier()
    certified = 0
    for seed in range(seeds):
        instance = generate_instance(params, seed)
        report = certifier.certify(instance)
        assert report.lam > 0
        if report.passes:
            certified += 1
            found = exhaustive_search(instance.adjacency, params.r, params.k)
            assert exactness(found.partition, instance.truth), seed
    assert certified >= minimum


@pytest.mark.slow
def test_below_threshold_control():
    params = ModelParams(n=12, m=3, r=2, k=6, p=0.55, q=0.45)
    certifier = Certifier()
    passed = sum(certifier.certify(generate_instance(params, seed)).passes for seed in range(100))
    assert passed <= 5


@pytest.mark.slow
def test_pass_rate_monotone_in_p():
    certifier = Certifier()
    rates = []
    for p in (0.95, 0.99, 0.999):
        params = ModelParams(n=12, m=3, r=2, k=6, p=p, q=0.001)
        rates.append(sum(certifier.certify(generate_instance(params, seed)).passes for seed in range(100)) / 100)
    for low, high in zip(rates, rates[1:]):
        slack = 3 * math.sqrt(max(low * (1 - low), high * (1 - high), 0.0025) / 100)
        assert high >= low - slack
    assert rates[-1] > 0
