from flask import Blueprint, request, jsonify
from functools import wraps
import json
import logging
import traceback

import numpy as np
from pydantic import ValidationError

from models import Partition, SymmetricTensor
from schemas.requests import CertifyRequest, GenerateRequest, NormsRequest, SolveRequest, ThresholdRequest
from services.certifier import Certifier, critical_constant, threshold_terms
from services.partition_solver import PartitionSolver
from services.planted_model import generate_instance, instance_from_data, preset
from services.spectral_nuclear import power_iteration, spectral_oracle
from services.tensor_core import entrywise_l1, entrywise_linf
from utils.errors import BudgetExceededError, ParameterError
from utils.validators import is_symmetric_array

logger = logging.getLogger(__name__)

api_bp = Blueprint('api', __name__)

# n^m cap for tensors sent or generated over HTTP
MAX_ENTRIES = 200_000


def _error(message: str, status_code: int, details=None):
    body = {'error': message, 'status_code': status_code}
    if details is not None:
        body['details'] = details
    return jsonify(body), status_code


def json_endpoint(schema):
    """Validate the JSON body with `schema` and map library errors to responses"""
    def decorator(view):
        @wraps(view)
        def wrapper():
            request_data = request.get_json(silent=True)
            if request_data is None:
                return _error('JSON request body required', 400)
            try:
                payload = schema(**request_data)
            except ValidationError as e:
                return _error('Invalid request data', 400, json.loads(e.json(include_url=False)))
            try:
                body = view(payload)
            except BudgetExceededError as e:
                return _error('Computation budget exceeded', 422, str(e))
            except ValueError as e:
                # ParameterError, DimensionError and ragged arrays
                return _error('Invalid request data', 400, str(e))
            except Exception as e:
                logger.error(f"Unexpected error in {view.__name__}: {str(e)}")
                logger.error(traceback.format_exc())
                return _error('Internal server error', 500,
                              'An unexpected error occurred while processing your request')
            body['status_code'] = 200
            return jsonify(body), 200
        return wrapper
    return decorator


def _tensor(payload) -> SymmetricTensor:
    values = np.array(payload.values, dtype=np.float64)
    if values.size > MAX_ENTRIES:
        raise ParameterError(f"Tensor has {values.size} entries, the API accepts at most {MAX_ENTRIES}")
    if values.ndim < 2:
        raise ParameterError("Tensor must have order at least 2")
    return SymmetricTensor(values, symmetric=is_symmetric_array(values), verify=False)


def _check_size(params) -> None:
    if params.n ** params.m > MAX_ENTRIES:
        raise ParameterError(f"n^m = {params.n ** params.m} exceeds the API limit of {MAX_ENTRIES}")


@api_bp.route('/health', methods=['GET'])
def health_check():
    """Health check endpoint"""
    return jsonify({
        'status': 'healthy',
        'message': 'hyperplant API is running',
        'status_code': 200
    }), 200


@api_bp.route('/generate', methods=['POST'])
@json_endpoint(GenerateRequest)
def generate(payload: GenerateRequest):
    """Sample an instance from params or a preset"""
    if payload.params is None and payload.preset is None:
        raise ParameterError("params or preset is required")
    params = payload.params or preset(payload.preset)
    _check_size(params)
    instance = generate_instance(params, payload.seed)
    logger.info(f"Generated {params.describe()} with seed {payload.seed}")
    body = {
        'params': params.model_dump(mode='json'),
        'seed': payload.seed,
        'partition': instance.truth.assignment.tolist(),
        'edges': int(instance.adjacency.values.sum()),
    }
    if payload.include_tensor:
        body['tensor'] = instance.adjacency.values.tolist()
    return body


@api_bp.route('/norms', methods=['POST'])
@json_endpoint(NormsRequest)
def norms(payload: NormsRequest):
    a = _tensor(payload.tensor)
    estimate = power_iteration(a, restarts=payload.restarts, seed=payload.seed)
    body = {
        'order': a.order,
        'dim': a.dim,
        'symmetric': a.symmetric,
        'l1': entrywise_l1(a),
        'linf': entrywise_linf(a),
        'spectral': estimate.value,
        'witness': estimate.witness.tolist(),
        'converged_restarts': estimate.converged_restarts,
    }
    if payload.oracle:
        body['spectral_oracle'] = spectral_oracle(a, seed=payload.seed).value
    return body


@api_bp.route('/certify', methods=['POST'])
@json_endpoint(CertifyRequest)
def certify(payload: CertifyRequest):
    """Certificate for a sampled instance (params + seed) or a supplied tensor and partition"""
    certifier = Certifier(payload.options)
    if payload.tensor is not None:
        if payload.partition is None:
            raise ParameterError("partition is required with a tensor")
        a = _tensor(payload.tensor)
        truth = Partition(np.array(payload.partition))
        if payload.audit:
            return certifier.audit(a, truth).to_dict()
        if payload.params is None:
            raise ParameterError("params are required unless audit is set")
        return certifier.certify(instance_from_data(payload.params, truth, a)).to_dict()
    if payload.params is None or payload.seed is None:
        raise ParameterError("params and seed are required without a tensor")
    _check_size(payload.params)
    return certifier.certify(generate_instance(payload.params, payload.seed)).to_dict()


@api_bp.route('/solve', methods=['POST'])
@json_endpoint(SolveRequest)
def solve(payload: SolveRequest):
    solver = PartitionSolver(payload.config)
    truth = Partition(np.array(payload.truth)) if payload.truth is not None else None
    if payload.tensor is not None:
        a = _tensor(payload.tensor)
        r = payload.r or (truth.r if truth else None)
        k = payload.k or (truth.k if truth else None)
        if r is None or k is None:
            raise ParameterError("r and k (or truth) are required with a tensor")
    else:
        if payload.params is None or payload.seed is None:
            raise ParameterError("params and seed are required without a tensor")
        _check_size(payload.params)
        instance = generate_instance(payload.params, payload.seed)
        a, r, k = instance.adjacency, payload.params.r, payload.params.k
        truth = truth or instance.truth
    return solver.solve(a, r, k, truth=truth).to_dict()


@api_bp.route('/threshold', methods=['POST'])
@json_endpoint(ThresholdRequest)
def threshold(payload: ThresholdRequest):
    terms = threshold_terms(payload.n, payload.m, payload.k, payload.p, payload.q, payload.c)
    return {
        'lhs': terms.lhs,
        'rhs': terms.rhs,
        'ratio': terms.ratio,
        'side_condition': terms.side_condition,
        'predicate': terms.predicate,
        'critical_c': critical_constant(payload.n, payload.m, payload.k, payload.p, payload.q),
    }


@api_bp.errorhandler(404)
def api_not_found(error):
    return jsonify({
        'error': 'API endpoint not found',
        'status_code': 404
    }), 404


@api_bp.errorhandler(405)
def method_not_allowed(error):
    return jsonify({
        'error': 'Method not allowed',
        'status_code': 405
    }), 405
