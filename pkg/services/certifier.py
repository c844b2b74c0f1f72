"""Numerical verification of the exact-partitioning optimality argument.

For a sampled instance with ground truth Y*, the certificate computes

    lambda   scale of the noise A - E[A] = lambda Z,
    ||Z||    must not exceed 2 / (m (m - 1)),
    W0       = k^{-m/2} Y*, the dual witness for ||Y*||_*,
    L        = ||Q_{Y*}(lambda Z)||_inf, evaluated exactly,
    margin   = (p - q) / 2 - lambda k^{-m/2} - L.

A non-negative margin with the norm condition and the witness checks means
<A, Y* - Y> > 0 for every feasible Y != Y*, so Y* is the unique optimum of the
relaxation on that sample. The spectral upper bound behind ||Z|| is heuristic
(restarts x safety factor) unless the oracle is used; reports say which.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models import (CertificateReport, Lemma1Report, ModelInstance, Partition, ProjectedNoise, SubCheck,
                    SymmetricTensor, TailReport, ThresholdReport)
from schemas.configs import CertifyOptions
from schemas.model_params import DiagonalPolicy, ModelParams, validated
from services.planted_model import agreement_tensor, expectation_tensor, generate_instance, instance_from_data
from services.projections import apply_modes, agreement_projector, q_component, q_symmetric_expansion
from services.spectral_nuclear import power_iteration, spectral_oracle
from services.tensor_core import entrywise_linf, inner_product, scale, subtract
from utils.errors import ParameterError
from utils.helpers import derive_seed, diagonal_mask

logger = logging.getLogger(__name__)

IDEMPOTENCE_TOL = 1e-9
INNER_TOL = 1e-8
NORM_TOL = 1e-9


def noise_tensor(instance: ModelInstance) -> SymmetricTensor:
    """A - E[A]"""
    return subtract(instance.adjacency, expectation_tensor(instance.params, instance.truth))


def lemma1_scale(params: ModelParams) -> float:
    """sqrt(p (1 - q) m n log m), the concentration rate without its constant"""
    p, q, m, n = params.p, params.q, params.m, params.n
    return math.sqrt(p * (1.0 - q) * m * n * math.log(m))


def _spectral_estimate(tensor: SymmetricTensor, options: CertifyOptions, restarts: int):
    """Best spectral value found and the method used; the oracle joins in for small n"""
    estimate = power_iteration(tensor, restarts=restarts, max_iters=options.max_iters, tol=options.tol,
                               seed=options.seed)
    if tensor.dim <= options.oracle_max_n:
        oracle = spectral_oracle(tensor, restarts=options.restarts, grid=options.oracle_grid, seed=options.seed)
        return max(estimate.value, oracle.value), 'oracle'
    return estimate.value, 'heuristic'


def compute_lambda(instance: ModelInstance, mode: str = 'measured', c: float = 1.0,
                   options: Optional[CertifyOptions] = None, noise: Optional[SymmetricTensor] = None) -> float:
    """lambda for the split A - E[A] = lambda Z.

    measured: (m (m - 1) / 2) x safety x (spectral estimate of A - E[A]), so
              that ||Z|| <= 2 / (m (m - 1)) up to the spectral heuristic.
    constant: (m (m - 1) / 2) x C sqrt(p (1 - q) m n log m).
    """
    return _lambda_details(instance, mode, c, options or CertifyOptions(), noise)[0]


def _lambda_details(instance: ModelInstance, mode: str, c: float, options: CertifyOptions,
                    noise: Optional[SymmetricTensor]) -> Tuple[float, float, float, str]:
    """(lambda, spectral estimate of the noise, heuristic upper bound, method)"""
    m = instance.params.m
    half = m * (m - 1) / 2.0
    noise = noise if noise is not None else noise_tensor(instance)
    estimate, method = _spectral_estimate(noise, options, options.heuristic_restarts)
    upper = options.safety * estimate
    if mode == 'measured':
        lam = half * upper
    elif mode == 'constant':
        lam = half * c * lemma1_scale(instance.params)
    else:
        raise ParameterError(f"Unknown lambda mode '{mode}'")
    if lam == 0.0:
        logger.info("Noise tensor is zero: lambda = 0")
    return lam, estimate, upper, method


def lemma1_check(params: ModelParams, trials: int, c: float, seed: int = 0,
                 options: Optional[CertifyOptions] = None) -> Lemma1Report:
    """Fraction of sampled instances with ||A - E[A]|| <= C sqrt(p (1 - q) m n log m).

    Also reports the empirical C, max ||A - E[A]|| / sqrt(p (1 - q) m n log m).
    """
    if trials < 1:
        raise ParameterError(f"trials must be at least 1, got {trials}")
    options = options or CertifyOptions()
    rate = lemma1_scale(params)
    norms = []
    for trial in range(trials):
        instance = generate_instance(params, derive_seed(seed, trial))
        norms.append(power_iteration(noise_tensor(instance), restarts=options.restarts,
                                     max_iters=options.max_iters, tol=options.tol,
                                     seed=options.seed).value)
    bound = c * rate
    passed = sum(1 for value in norms if value <= bound)
    largest = max(norms)
    empirical = largest / rate if rate > 0 else (0.0 if largest == 0 else math.inf)
    logger.info(f"Concentration check on {params.describe()}: {passed}/{trials} within C={c}, empirical C={empirical:.4g}")
    return Lemma1Report(c=c, trials=trials, norms=norms, rhs_unit=rate, bound=bound,
                        pass_fraction=passed / trials, empirical_c=empirical)


def dual_witness_check(instance: ModelInstance, witness: Optional[SymmetricTensor] = None,
                       options: Optional[CertifyOptions] = None) -> List[SubCheck]:
    """Check W0 = Q^0(W0), ||W0|| = 1 and <W0, Y*> = r k^{m/2} for W0 = k^{-m/2} Y*"""
    options = options or CertifyOptions()
    params = instance.params
    k, r, m = params.k, params.r, params.m
    y_star = instance.agreement
    w0 = witness if witness is not None else scale(y_star, k ** (-m / 2.0))

    projected = q_component(y_star, w0, 0)
    drift = float(np.abs(projected.values - w0.values).max())
    spectral = power_iteration(w0, restarts=options.restarts, max_iters=options.max_iters, tol=options.tol,
                               seed=options.seed).value
    target = r * k ** (m / 2.0)
    pairing = inner_product(w0, y_star)

    return [
        SubCheck('witness_in_span', drift <= IDEMPOTENCE_TOL, drift, IDEMPOTENCE_TOL,
                 'max |Q0(W0) - W0|'),
        SubCheck('witness_unit_norm', abs(spectral - 1.0) <= options.witness_tol, spectral, 1.0,
                 'spectral norm of W0'),
        SubCheck('witness_attains_nuclear', abs(pairing - target) <= INNER_TOL * max(1.0, target), pairing, target,
                 '<W0, Y*> against r k^{m/2}'),
    ]


def projected_fiber_average(partition: Partition, noise: SymmetricTensor) -> SymmetricTensor:
    """Abar = I x P x ... x P applied to lambda Z (= A - E[A]).

    Entry (i, i2..im) is k^{-(m-1)} times the sum of the noise over j_l in the
    cluster of i_l, and 0 if some i_l (l >= 2) is unclustered.
    """
    p = agreement_projector(partition).matrix
    m = noise.order
    return SymmetricTensor(apply_modes(noise.values, [None] + [p] * (m - 1)), symmetric=False, verify=False)


def projected_noise_linf(instance: ModelInstance, lam: float,
                         noise: Optional[SymmetricTensor] = None) -> ProjectedNoise:
    """||Q_{Y*}(lambda Z)||_inf exactly, and the symmetric bound (2m - 1) ||Abar||_inf"""
    if lam < 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    noise = noise if noise is not None else noise_tensor(instance)
    m = instance.params.m
    exact = entrywise_linf(q_symmetric_expansion(instance.truth, noise))
    abar = entrywise_linf(projected_fiber_average(instance.truth, noise))
    return ProjectedNoise(exact=exact, abar_linf=abar, bound=(2 * m - 1) * abar)


def bernstein_threshold(params: ModelParams) -> float:
    """sqrt(2 (m+1) k^{m-1} p (1-q) log n) + (2/3) (m+1) log n"""
    n, m, k, p, q = params.n, params.m, params.k, params.p, params.q
    log_n = math.log(n)
    return math.sqrt(2 * (m + 1) * k ** (m - 1) * p * (1 - q) * log_n) + 2.0 / 3.0 * (m + 1) * log_n


def neighborhood_sums(instance: ModelInstance, noise: Optional[SymmetricTensor] = None) -> np.ndarray:
    """For each clustered vertex i, the sum of lambda Z(i, j2..jm) over j2..jm in N(i)"""
    noise = noise if noise is not None else noise_tensor(instance)
    sums = []
    for i in range(instance.params.n):
        members = instance.truth.neighborhood(i)
        if not members:
            continue
        block = noise.values[(i,) + np.ix_(*[list(members)] * (instance.params.m - 1))]
        sums.append(float(block.sum()))
    return np.array(sums)


def bernstein_tail_check(params: ModelParams, trials: int, seed: int = 0) -> TailReport:
    """Monte Carlo frequency of {fiber sum over N(i) >= threshold} against n^{-(m+1)}"""
    if trials < 1000:
        raise ParameterError(f"Tail frequencies need at least 1000 trials, got {trials}")
    threshold = bernstein_threshold(params)
    bound = params.n ** (-(params.m + 1))
    exceed = 0
    samples = 0
    max_sum = -math.inf
    for trial in range(trials):
        sums = neighborhood_sums(generate_instance(params, derive_seed(seed, trial)))
        exceed += int(np.count_nonzero(sums >= threshold))
        samples += sums.size
        max_sum = max(max_sum, float(sums.max()))
    frequency = exceed / samples
    sigma = math.sqrt(bound * (1 - bound) / samples)
    logger.info(f"Tail check on {params.describe()}: {exceed}/{samples} above {threshold:.4g}, bound {bound:.3g}")
    return TailReport(threshold=threshold, frequency=frequency, bound=bound, samples=samples,
                      exceedances=exceed, sigma=sigma, max_sum=max_sum)


def threshold_terms(n: int, m: int, k: int, p: float, q: float, c: float) -> ThresholdReport:
    """lhs = (p - q) / (C sqrt(p (1 - q) m^5 log m)), rhs = sqrt(n / k^{m-1}),
    side condition (m^3 log m) p (1 - q) k^{m-1} >= 1"""
    if c <= 0:
        raise ParameterError(f"C must be positive, got {c}")
    rhs = math.sqrt(n / k ** (m - 1))
    spread = p * (1 - q)
    if p <= q or spread <= 0:
        lhs = 0.0
    else:
        lhs = (p - q) / (c * math.sqrt(spread * m ** 5 * math.log(m)))
    side = (m ** 3 * math.log(m)) * spread * k ** (m - 1) >= 1.0
    return ThresholdReport(lhs=lhs, rhs=rhs, ratio=lhs / rhs, side_condition=side,
                           predicate=bool(lhs > 0 and lhs >= rhs and side))


def theorem_threshold(params: ModelParams, c: float) -> ThresholdReport:
    return threshold_terms(params.n, params.m, params.k, params.p, params.q, c)


def critical_constant(n: int, m: int, k: int, p: float, q: float) -> float:
    """Largest C for which the threshold predicate holds (0 if it never does)"""
    terms = threshold_terms(n, m, k, p, q, 1.0)
    if not terms.side_condition or terms.lhs <= 0:
        return 0.0
    return terms.lhs / terms.rhs


def delta(a: SymmetricTensor, y_star: SymmetricTensor, y: SymmetricTensor) -> float:
    """<A, Y* - Y>"""
    return inner_product(a, subtract(y_star, y))


def expected_delta(instance: ModelInstance, y: SymmetricTensor) -> float:
    """<E[A], Y* - Y>"""
    return delta(expectation_tensor(instance.params, instance.truth), instance.agreement, y)


def estimate_probabilities(adjacency: SymmetricTensor, partition: Partition,
                           policy: DiagonalPolicy = DiagonalPolicy.BERNOULLI) -> Tuple[float, float]:
    """(p_hat, q_hat): edge frequencies on and off the agreement support of a candidate partition.

    Under the zeroed policy repeated-index entries are left out.
    """
    inside = agreement_tensor(partition, adjacency.order).flat > 0.5
    usable = np.ones_like(inside)
    if policy == DiagonalPolicy.ZEROED:
        usable = ~diagonal_mask(adjacency.dim, adjacency.order)
    values = adjacency.flat
    within = values[inside & usable]
    across = values[~inside & usable]
    p_hat = float(within.mean()) if within.size else 0.0
    q_hat = float(across.mean()) if across.size else 0.0
    return p_hat, q_hat


class Certifier:
    """Builds certificate reports for sampled or supplied instances"""

    def __init__(self, options: Optional[CertifyOptions] = None):
        self.options = options or CertifyOptions()

    def certify(self, instance: ModelInstance) -> CertificateReport:
        """Run every step of the argument and collect verdicts"""
        params = instance.params
        logger.info(f"Certifying {params.describe()} (seed {instance.seed})")
        noise = noise_tensor(instance)
        checks: List[SubCheck] = []

        lam, estimate, upper, method = self._lambda(instance, noise)
        z_bound = self._check_norm(params, lam, upper, checks)
        checks.extend(dual_witness_check(instance, options=self.options))
        projected = self._check_projection(instance, lam, noise, checks)

        margin = 0.5 * (params.p - params.q) - lam * params.k ** (-params.m / 2.0) - projected.exact
        checks.append(SubCheck('margin', margin >= 0.0, margin, 0.0,
                               '(p-q)/2 - lambda k^{-m/2} - ||Q(lambda Z)||_inf'))

        witness_ok = all(c.passed for c in checks if c.name.startswith('witness_'))
        norm_ok = z_bound <= 2.0 / (params.m * (params.m - 1)) + NORM_TOL
        report = CertificateReport(
            lam=lam,
            z_spectral_bound=z_bound,
            lemma1_rhs=self.options.constant_c * lemma1_scale(params),
            linf_projected=projected.exact,
            margin=margin,
            passes=bool(margin >= 0.0 and norm_ok and witness_ok),
            spectral_method=method,
            sub_checks=checks,
            lambda_mode=self.options.lambda_mode,
            noise_spectral=estimate,
            noise_spectral_upper=upper,
            abar_linf=projected.abar_linf,
            projected_bound=projected.bound,
            seed=instance.seed,
        )
        if report.passes:
            logger.info(f"Certificate passed with margin {margin:.6g}")
        else:
            logger.info(f"Certificate failed: {', '.join(report.failed_checks())}")
        return report

    def _lambda(self, instance: ModelInstance, noise: SymmetricTensor):
        return _lambda_details(instance, self.options.lambda_mode, self.options.constant_c, self.options, noise)

    def _check_norm(self, params: ModelParams, lam: float, upper: float, checks: List[SubCheck]) -> float:
        """||Z|| <= 2 / (m (m - 1)), using the heuristic upper bound of ||A - E[A]||"""
        limit = 2.0 / (params.m * (params.m - 1))
        z_bound = 0.0 if lam == 0.0 else upper / lam
        if lam == 0.0 and upper > 0.0:
            z_bound = math.inf
        checks.append(SubCheck('z_spectral', z_bound <= limit + NORM_TOL, z_bound, limit,
                               'lambda = 0 (zero noise)' if lam == 0.0 else '||Z|| estimate'))
        return z_bound

    def _check_projection(self, instance: ModelInstance, lam: float, noise: SymmetricTensor,
                          checks: List[SubCheck]) -> ProjectedNoise:
        projected = projected_noise_linf(instance, lam, noise)
        checks.append(SubCheck('projected_bound', projected.within_bound, projected.exact, projected.bound,
                               '||Q(lambda Z)||_inf <= (2m-1) ||Abar||_inf'))
        return projected

    def audit(self, adjacency: SymmetricTensor, partition: Partition,
              policy: DiagonalPolicy = DiagonalPolicy.BERNOULLI) -> CertificateReport:
        """Certificate for a candidate partition with p and q estimated from the data"""
        p_hat, q_hat = estimate_probabilities(adjacency, partition, policy)
        if p_hat <= q_hat:
            raise ParameterError(f"Estimated gap is not positive (p_hat={p_hat:.4g}, q_hat={q_hat:.4g})")
        params = validated(ModelParams, dict(n=adjacency.dim, m=adjacency.order, r=partition.r, k=partition.k,
                                             p=p_hat, q=q_hat, diagonal_policy=policy))
        logger.info(f"Auditing partition with estimated p={p_hat:.4g}, q={q_hat:.4g}")
        return self.certify(instance_from_data(params, partition, adjacency))

    def certify_batch(self, params: ModelParams, seeds: Sequence[int], threads: int = 1) -> List[CertificateReport]:
        """Generate and certify one instance per seed; reports follow seed order"""
        def run(seed: int) -> CertificateReport:
            return self.certify(generate_instance(params, seed))

        if threads <= 1:
            return [run(seed) for seed in seeds]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, seeds))


def certificate(instance: ModelInstance, options: Optional[CertifyOptions] = None) -> CertificateReport:
    return Certifier(options).certify(instance)
