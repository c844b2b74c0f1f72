"""Sampling of hypergraphs from planted models M(n, m, r, k, p, q).

Every unordered index multiset gets one uniform draw from a counter-based
generator; the draw for multiset t is the t-th number of the stream, where
multisets are ranked in combinations-with-replacement order. The adjacency
tensor copies that draw to every permutation of the multiset, so it is
symmetric by construction and reproducible independent of iteration order.
"""
import logging
from typing import Optional

import numpy as np

from models import ModelInstance, Partition, SymmetricTensor
from schemas.model_params import DiagonalPolicy, ModelParams, validated
from services.tensor_core import add, ones_tensor, outer_power, scale
from utils.errors import DimensionError, InvariantError, ParameterError
from utils.helpers import derive_seed, diagonal_mask, make_rng, multiset_ranks

logger = logging.getLogger(__name__)

PRESETS = ('hyperclique', 'densest', 'hsbm')


def sample_partition(params: ModelParams, seed: int) -> Partition:
    """Choose r*k of the n vertices uniformly and split them into r labelled clusters of size k"""
    rng = make_rng(seed)
    order = rng.permutation(params.n)
    assignment = np.full(params.n, -1, dtype=np.int64)
    for label in range(params.r):
        assignment[order[label * params.k:(label + 1) * params.k]] = label
    return Partition(assignment, r=params.r)


def agreement_tensor(truth: Partition, m: int) -> SymmetricTensor:
    """Y* = sum_i y^(i)^{(x)m}; an entry is 1 iff all m indices share a cluster"""
    values = np.zeros((truth.n,) * m)
    for y in truth.membership_vectors():
        values += outer_power(y, m).values
    if values.max() > 1.0:
        raise InvariantError("Cluster memberships overlap: agreement tensor is not 0/1")
    return SymmetricTensor(values, verify=False)


def _check_truth(params: ModelParams, truth: Partition) -> None:
    if truth.n != params.n:
        raise DimensionError(f"Partition has {truth.n} vertices, model has n={params.n}")


def sample_adjacency(params: ModelParams, truth: Partition, seed: int) -> SymmetricTensor:
    """Bernoulli(p) inside clusters, Bernoulli(q) elsewhere, one draw per index multiset.

    Tuples touching an unclustered vertex count as "elsewhere" and use q.
    Under the zeroed policy every entry with a repeated index is 0.
    """
    _check_truth(params, truth)
    n, m = params.n, params.m
    ranks, count = multiset_ranks(n, m)
    draws = make_rng(seed).random(count)

    agreement = agreement_tensor(truth, m).flat
    probability = np.where(agreement > 0.5, params.p, params.q)
    values = (draws[ranks] < probability).astype(np.float64)
    if params.diagonal_policy == DiagonalPolicy.ZEROED:
        values[diagonal_mask(n, m)] = 0.0
    return SymmetricTensor(values.reshape((n,) * m), verify=False)


def expectation_tensor(params: ModelParams, truth: Partition) -> SymmetricTensor:
    """E[A] = q 1^{(x)m} + (p - q) Y*, with repeated-index entries 0 under the zeroed policy"""
    _check_truth(params, truth)
    mean = add(scale(ones_tensor(params.n, params.m), params.q),
               scale(agreement_tensor(truth, params.m), params.p - params.q))
    if params.diagonal_policy == DiagonalPolicy.ZEROED:
        values = mean.values.copy().reshape(-1)
        values[diagonal_mask(params.n, params.m)] = 0.0
        return SymmetricTensor(values.reshape(mean.shape), verify=False)
    return mean


def preset(name: str, n: Optional[int] = None, m: int = 3, r: Optional[int] = None, k: int = 4,
           p: Optional[float] = None, q: float = 0.1,
           diagonal_policy: DiagonalPolicy = DiagonalPolicy.BERNOULLI) -> ModelParams:
    """Parameters of a classical model.

    hyperclique: p = 1 and 0 < q < 1.
    densest:     r = 1 and 0 < q < p < 1.
    hsbm:        n = r*k, r >= 2 and 0 < q < p < 1.
    Unset sizes default to r = 2 (1 for densest) and n = r*k.
    """
    name = name.lower()
    if name == 'hyperclique':
        if p is not None and p != 1.0:
            raise ParameterError(f"hyperclique requires p = 1, got p={p}")
        p = 1.0
        r = 2 if r is None else r
        if not 0.0 < q < 1.0:
            raise ParameterError(f"hyperclique requires 0 < q < 1, got q={q}")
    elif name == 'densest':
        if r is not None and r != 1:
            raise ParameterError(f"densest requires r = 1, got r={r}")
        r = 1
        p = 0.9 if p is None else p
        if not 0.0 < q < p < 1.0:
            raise ParameterError(f"densest requires 0 < q < p < 1, got p={p}, q={q}")
    elif name == 'hsbm':
        r = 2 if r is None else r
        if r < 2:
            raise ParameterError(f"hsbm requires r >= 2, got r={r}")
        if n is not None and n != r * k:
            raise ParameterError(f"hsbm requires n = r*k = {r * k}, got n={n}")
        p = 0.9 if p is None else p
        if not 0.0 < q < p < 1.0:
            raise ParameterError(f"hsbm requires 0 < q < p < 1, got p={p}, q={q}")
    else:
        raise ParameterError(f"Unknown preset '{name}', expected one of {', '.join(PRESETS)}")

    n = r * k if n is None else n
    return validated(ModelParams, dict(n=n, m=m, r=r, k=k, p=p, q=q, diagonal_policy=diagonal_policy))


def generate_instance(params: ModelParams, seed: int) -> ModelInstance:
    """Sample the planted partition and the adjacency tensor from one seed"""
    logger.debug(f"Sampling {params.describe()} with seed {seed}")
    truth = sample_partition(params, derive_seed(seed, 0))
    adjacency = sample_adjacency(params, truth, derive_seed(seed, 1))
    return ModelInstance(
        params=params,
        truth=truth,
        adjacency=adjacency,
        agreement=agreement_tensor(truth, params.m),
        seed=seed,
    )


def instance_from_data(params: ModelParams, truth: Partition, adjacency: SymmetricTensor,
                       seed: int = -1) -> ModelInstance:
    """Wrap externally supplied data (e.g. files) as an instance"""
    _check_truth(params, truth)
    if adjacency.dim != params.n or adjacency.order != params.m:
        raise DimensionError(f"Adjacency has order {adjacency.order} and dim {adjacency.dim}, "
                             f"model has m={params.m} and n={params.n}")
    return ModelInstance(params=params, truth=truth, adjacency=adjacency,
                         agreement=agreement_tensor(truth, params.m), seed=seed)
