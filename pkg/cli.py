"""Command-line interface.

Option precedence: explicit flags, then the --config YAML file, then
environment settings, then built-in defaults.
"""
import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Set

import numpy as np

from config import Settings, load_config_file
from models import CertificateReport, SolveResult
from schemas.configs import CertifyOptions, ExperimentGrid, SolverConfig
from schemas.model_params import DiagonalPolicy, ModelParams, validated
from services.certifier import Certifier, critical_constant, threshold_terms
from services.experiment_runner import run_grid
from services.partition_solver import PartitionSolver
from services.phase_analyzer import format_table, phase_report
from services.planted_model import PRESETS, generate_instance, instance_from_data, preset
from services.spectral_nuclear import (nuclear_bounds, nuclear_lower_from_witness, nuclear_upper_from_decomposition,
                                       power_iteration, spectral_oracle)
from services.tensor_core import entrywise_l1, entrywise_linf
from utils.errors import HyperplantError, ParameterError
from utils.helpers import format_float
from utils.tensor_io import (partition_sidecar, read_decomposition, read_partition, read_tensor, write_partition,
                             write_tensor)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


class _Options:
    """add_argument wrapper whose defaults come from the config file first"""

    def __init__(self, parser: argparse.ArgumentParser, defaults: Dict[str, Any], known: Set[str]):
        self.parser = parser
        self.defaults = defaults
        self.known = known

    def add(self, *flags, default=None, **kwargs):
        dest = kwargs.get('dest') or flags[0].lstrip('-').replace('-', '_')
        self.known.add(dest)
        if not flags[0].startswith('-'):
            self.parser.add_argument(*flags, **kwargs)
            return
        self.parser.add_argument(*flags, default=self.defaults.get(dest, default), **kwargs)


def _model_flags(options: _Options, lists: bool = False):
    nargs = {'nargs': '+'} if lists else {}
    options.add('--n', type=int, help='number of vertices (default r*k)', **nargs)
    options.add('--m', type=int, help='tensor order', **nargs)
    options.add('--r', type=int, help='number of clusters', **nargs)
    options.add('--k', type=int, help='cluster size', **nargs)
    options.add('--p', type=float, help='edge probability inside clusters', **nargs)
    options.add('--q', type=float, help='edge probability elsewhere', **nargs)
    options.add('--diagonal-policy', choices=[policy.value for policy in DiagonalPolicy],
                default=DiagonalPolicy.BERNOULLI.value, help='treatment of repeated-index entries')


def _certify_flags(options: _Options):
    options.add('--lambda-mode', choices=['measured', 'constant'], default='measured')
    options.add('--safety', type=float, default=1.25, help='spectral upper-bound safety factor (>= 1)')
    options.add('--constant-C', dest='constant_c', type=float, default=1.0, help='C of the constant lambda mode')
    options.add('--spectral-restarts', type=int, default=64)


def _solver_flags(options: _Options):
    options.add('--method', choices=['exhaustive', 'local-search', 'conditional-gradient'], default='local-search')
    options.add('--restarts', type=int, default=16)
    options.add('--max-iters', type=int, default=500)
    options.add('--budget', type=int, default=1_000_000, help='largest partition count exhaustive search accepts')


def build_parser(settings: Settings, defaults: Optional[Dict[str, Any]] = None) -> argparse.ArgumentParser:
    defaults = defaults or {}
    known: Set[str] = set()
    parser = argparse.ArgumentParser(prog='hyperplant',
                                     description='Planted hypergraph partitioning: sampling, certificates, solvers')
    top = _Options(parser, defaults, known)
    top.add('--seed', type=int, default=0, help='base seed')
    top.add('--threads', type=int, default=settings.threads, help='worker threads (env HYPERPLANT_THREADS)')
    top.add('--config', type=Path, help='YAML file whose keys mirror the flags')
    top.add('--log-level', default=settings.log_level, type=str.upper,
            choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command')

    generate = commands.add_parser('generate', help='sample an instance and write tensor + partition files')
    options = _Options(generate, defaults, known)
    options.add('--preset', choices=PRESETS)
    _model_flags(options)
    options.add('--out', type=Path, required='out' not in defaults, help='tensor file to write')
    options.add('--partition-out', type=Path, help='partition sidecar (default <out>.partition)')
    generate.set_defaults(handler=cmd_generate)

    norms = commands.add_parser('norms', help='spectral estimate and nuclear bounds of a tensor file')
    options = _Options(norms, defaults, known)
    options.add('tensor', type=Path)
    options.add('--restarts', type=int, default=64)
    options.add('--max-iters', type=int, default=500)
    options.add('--oracle', action='store_true', default=False, help='also run the brute-force oracle')
    options.add('--strict', action='store_true', default=False, help='reject asymmetric tensors')
    options.add('--decomposition', type=Path, help='rank-one atoms file (nuclear upper bound)')
    options.add('--witness', type=Path, help='witness tensor file (nuclear lower bound)')
    norms.set_defaults(handler=cmd_norms)

    certify = commands.add_parser('certify', help='run the optimality certificate on one instance')
    options = _Options(certify, defaults, known)
    options.add('tensor', type=Path, nargs='?', help='tensor file (omit with --generate)')
    options.add('--partition', type=Path, help='ground-truth partition file (default <tensor>.partition)')
    options.add('--generate', action='store_true', default=False, help='sample the instance from --seed')
    options.add('--audit', action='store_true', default=False, help='estimate p and q from the partition')
    options.add('--strict', action='store_true', default=False)
    _model_flags(options)
    _certify_flags(options)
    options.add('--csv', type=Path, help='append the report as a CSV row')
    certify.set_defaults(handler=cmd_certify)

    solve = commands.add_parser('solve', help='recover clusters from a tensor')
    options = _Options(solve, defaults, known)
    options.add('tensor', type=Path, nargs='?', help='tensor file (omit with --generate)')
    options.add('--generate', action='store_true', default=False)
    options.add('--truth', type=Path, help='partition file to score exactness against')
    options.add('--strict', action='store_true', default=False)
    _model_flags(options)
    _solver_flags(options)
    options.add('--partition-out', type=Path, help='write the recovered partition')
    options.add('--csv', type=Path, help='append the result as a CSV row')
    solve.set_defaults(handler=cmd_solve)

    threshold = commands.add_parser('threshold', help='both sides of the explicit recovery condition')
    options = _Options(threshold, defaults, known)
    _model_flags(options)
    options.add('--C', dest='c', type=float, default=1.0)
    threshold.set_defaults(handler=cmd_threshold)

    experiment = commands.add_parser('experiment', help='Monte Carlo grids')
    stages = experiment.add_subparsers(dest='stage')
    run = stages.add_parser('run', help='run a grid and write the CSV')
    options = _Options(run, defaults, known)
    _model_flags(options, lists=True)
    options.add('--gap', type=float, nargs='+', help='p - q values; p is derived from q')
    options.add('--auto-n', action='store_true', default=False, help='n = r*k for every cell')
    options.add('--trials', type=int, default=10)
    options.add('--tasks', nargs='+', choices=['certify', 'solve', 'lemma1', 'bernstein'], default=['certify'])
    options.add('--methods', nargs='+', choices=['exhaustive', 'local-search', 'conditional-gradient'],
                default=['exhaustive'])
    _solver_flags(options)
    _certify_flags(options)
    options.add('--lemma1-C', dest='lemma1_c', type=float, default=3.0)
    options.add('--trial-timeout', type=float, default=settings.trial_timeout)
    options.add('--output', type=Path, default=Path('results.csv'))
    run.set_defaults(handler=cmd_experiment_run)

    report = stages.add_parser('report', help='phase table of a results CSV')
    options = _Options(report, defaults, known)
    options.add('csv', type=Path)
    options.add('--C', dest='c', type=float, help='fixed C instead of calibrating it')
    options.add('--metric', default='auto', help="'certify', a solver method, or 'auto'")
    report.set_defaults(handler=cmd_experiment_report)

    serve = commands.add_parser('serve', help='run the JSON API')
    options = _Options(serve, defaults, known)
    options.add('--host', default='0.0.0.0')
    options.add('--port', type=int, default=settings.port)
    serve.set_defaults(handler=cmd_serve)
    unknown = sorted(set(defaults) - known)
    if unknown:
        raise ParameterError(f"Unknown config keys: {', '.join(unknown)}")
    return parser


def _model_params(args, n: Optional[int] = None, m: Optional[int] = None, r: Optional[int] = None,
                  k: Optional[int] = None) -> ModelParams:
    """ModelParams from flags; values read from files take precedence over flags"""
    if getattr(args, 'preset', None):
        sizes = {name: value for name, value in dict(n=args.n, m=args.m, r=args.r, k=args.k, p=args.p,
                                                       q=args.q).items() if value is not None}
        return preset(args.preset, diagonal_policy=DiagonalPolicy(args.diagonal_policy), **sizes)
    m = m or args.m or 3
    r = r or args.r or 2
    k = k or args.k or 3
    n = n or args.n or r * k
    p = 0.9 if args.p is None else args.p
    q = 0.1 if args.q is None else args.q
    return validated(ModelParams, dict(n=n, m=m, r=r, k=k, p=p, q=q, diagonal_policy=args.diagonal_policy))


def _certify_options(args) -> CertifyOptions:
    return validated(CertifyOptions, dict(lambda_mode=args.lambda_mode, safety=args.safety,
                                          constant_c=args.constant_c, restarts=args.spectral_restarts,
                                          seed=args.seed))


def _solver_config(args) -> SolverConfig:
    return validated(SolverConfig, dict(method=args.method, restarts=args.restarts, max_iters=args.max_iters,
                                        budget=args.budget, seed=args.seed))


def _append_csv(path: Path, row: Dict[str, Any]) -> None:
    exists = path.exists() and path.stat().st_size > 0
    with open(path, 'a', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=list(row), lineterminator='\n')
        if not exists:
            writer.writeheader()
        writer.writerow({key: format_float(value) if not isinstance(value, str) else value
                         for key, value in row.items()})
    logger.info(f"Appended row to {path}")


def cmd_generate(args) -> int:
    params = _model_params(args)
    instance = generate_instance(params, args.seed)
    partition_path = args.partition_out or partition_sidecar(args.out)
    write_tensor(args.out, instance.adjacency)
    write_partition(partition_path, instance.truth)
    print(f"{params.describe()} seed={args.seed}")
    print(f"tensor:    {args.out}")
    print(f"partition: {partition_path}")
    print(f"clusters:  {' | '.join(' '.join(map(str, c)) for c in instance.truth.clusters())}")
    return 0


def cmd_norms(args) -> int:
    a = read_tensor(args.tensor, strict=args.strict)
    estimate = power_iteration(a, restarts=args.restarts, max_iters=args.max_iters, seed=args.seed)
    print(f"order {a.order}, dim {a.dim}, symmetric {str(a.symmetric).lower()}")
    print(f"l1                 {entrywise_l1(a):.12g}")
    print(f"linf               {entrywise_linf(a):.12g}")
    print(f"frobenius          {float(np.linalg.norm(a.values)):.12g}")
    print(f"spectral (power)   {estimate.value:.12g}  "
          f"({estimate.converged_restarts}/{estimate.restarts} restarts converged)")
    print(f"witness            {np.array2string(estimate.witness, precision=6)}")
    if args.oracle:
        oracle = spectral_oracle(a, seed=args.seed)
        print(f"spectral (oracle)  {oracle.value:.12g}")

    atoms = read_decomposition(args.decomposition, a.dim) if args.decomposition else None
    witness = read_tensor(args.witness, strict=True) if args.witness else None
    if atoms is not None and witness is not None:
        bounds = nuclear_bounds(a, atoms, witness, seed=args.seed)
        print(f"nuclear            [{bounds.lower:.12g}, {bounds.upper:.12g}]"
              + ('  tight' if bounds.is_tight() else ''))
    elif atoms is not None:
        upper, reconstructed = nuclear_upper_from_decomposition(atoms, a.order, dim=a.dim)
        if not reconstructed.allclose(a, atol=1e-8):
            raise ParameterError("Decomposition does not reconstruct the tensor")
        print(f"nuclear upper      {upper:.12g}")
    elif witness is not None:
        print(f"nuclear lower      {nuclear_lower_from_witness(a, witness, seed=args.seed):.12g}")
    return 0


def _print_certificate(report: CertificateReport) -> None:
    print(f"verdict            {'PASS' if report.passes else 'FAIL'}")
    print(f"lambda ({report.lambda_mode})  {report.lam:.12g}")
    print(f"noise spectral     {report.noise_spectral:.12g} (upper {report.noise_spectral_upper:.12g}, "
          f"{report.spectral_method})")
    print(f"z spectral bound   {report.z_spectral_bound:.12g}")
    print(f"lemma1 rhs         {report.lemma1_rhs:.12g}")
    print(f"projected linf     {report.linf_projected:.12g} (bound {report.projected_bound:.12g})")
    print(f"margin             {report.margin:.12g}")
    for check in report.sub_checks:
        status = 'ok  ' if check.passed else 'FAIL'
        limit = '' if check.threshold is None else f" vs {check.threshold:.12g}"
        print(f"  [{status}] {check.name}: {check.value:.12g}{limit}  {check.detail}")


def cmd_certify(args) -> int:
    certifier = Certifier(_certify_options(args))
    if args.generate:
        instance = generate_instance(_model_params(args), args.seed)
        report = certifier.certify(instance)
    else:
        if args.tensor is None:
            raise ParameterError("certify needs a tensor file or --generate")
        a = read_tensor(args.tensor, strict=args.strict)
        truth = read_partition(args.partition or partition_sidecar(args.tensor))
        if args.audit:
            report = certifier.audit(a, truth, DiagonalPolicy(args.diagonal_policy))
        else:
            if args.p is None or args.q is None:
                raise ParameterError("certify on a file needs --p and --q (or --audit)")
            params = _model_params(args, n=a.dim, m=a.order, r=truth.r, k=truth.k)
            report = certifier.certify(instance_from_data(params, truth, a, seed=args.seed))
    _print_certificate(report)
    if args.csv:
        row = report.to_dict()
        row.pop('sub_checks')
        row['failed_checks'] = ' '.join(report.failed_checks())
        _append_csv(args.csv, row)
    return 0


def _print_solution(result: SolveResult) -> None:
    feasibility = result.feasibility
    print(f"method             {result.method}")
    print(f"objective          {result.objective:.12g}")
    print(f"partition          {' '.join(map(str, result.partition.assignment.tolist()))}")
    print(f"converged          {str(result.converged).lower()} after {result.iterations} iterations")
    print(f"nuclear upper      {feasibility.nuclear_upper:.12g} (radius {feasibility.nuclear_radius:.12g})")
    print(f"affine sum         {feasibility.affine_sum:.12g} (target {feasibility.affine_target:.12g})")
    print(f"box violation      {feasibility.box_violation:.6g}")
    if result.exact is not None:
        print(f"exact              {str(result.exact).lower()}")


def cmd_solve(args) -> int:
    solver = PartitionSolver(_solver_config(args), threads=args.threads)
    truth = read_partition(args.truth) if args.truth else None
    if args.generate:
        instance = generate_instance(_model_params(args), args.seed)
        a, r, k = instance.adjacency, instance.params.r, instance.params.k
        truth = truth or instance.truth
    else:
        if args.tensor is None:
            raise ParameterError("solve needs a tensor file or --generate")
        a = read_tensor(args.tensor, strict=args.strict)
        r = args.r or (truth.r if truth else None)
        k = args.k or (truth.k if truth else None)
        if r is None or k is None:
            raise ParameterError("solve on a file needs --r and --k (or --truth)")
    result = solver.solve(a, r, k, truth=truth)
    _print_solution(result)
    if args.partition_out:
        write_partition(args.partition_out, result.partition)
    if args.csv:
        row = {key: value for key, value in result.to_dict().items() if key not in ('partition', 'feasibility')}
        row.update(result.feasibility.to_dict())
        row['partition'] = ' '.join(map(str, result.partition.assignment.tolist()))
        _append_csv(args.csv, row)
    return 0


def cmd_threshold(args) -> int:
    params = _model_params(args)
    terms = threshold_terms(params.n, params.m, params.k, params.p, params.q, args.c)
    print(f"{params.describe()} C={args.c:g}")
    print(f"lhs (p-q)/(C sqrt(p(1-q) m^5 log m))  {terms.lhs:.12g}")
    print(f"rhs sqrt(n / k^(m-1))                 {terms.rhs:.12g}")
    print(f"ratio                                 {terms.ratio:.12g}")
    print(f"side condition                        {str(terms.side_condition).lower()}")
    print(f"predicate                             {str(terms.predicate).lower()}")
    print(f"largest C with predicate true         "
          f"{critical_constant(params.n, params.m, params.k, params.p, params.q):.12g}")
    return 0


def _present(**values) -> Dict[str, Any]:
    return {key: value for key, value in values.items() if value is not None}


def _grid(args) -> ExperimentGrid:
    data = _present(n=args.n, m=args.m, r=args.r, k=args.k, p=args.p, q=args.q, gap=args.gap)
    data.update(
        auto_n=args.auto_n,
        diagonal_policy=args.diagonal_policy,
        trials=args.trials,
        base_seed=args.seed,
        tasks=args.tasks,
        methods=args.methods,
        solver=_present(restarts=args.restarts, max_iters=args.max_iters, budget=args.budget, seed=args.seed,
                        method=args.method),
        certify=_present(lambda_mode=args.lambda_mode, safety=args.safety, constant_c=args.constant_c,
                         restarts=args.spectral_restarts),
        lemma1_c=args.lemma1_c,
        trial_timeout=args.trial_timeout,
        output=args.output,
    )
    return validated(ExperimentGrid, data)


def cmd_experiment_run(args) -> int:
    output = run_grid(_grid(args), threads=args.threads)
    print(f"results: {output}")
    return 0


def cmd_experiment_report(args) -> int:
    print(format_table(phase_report(args.csv, c=args.c, metric=args.metric)))
    return 0


def cmd_serve(args) -> int:
    from app import app
    app.run(host=args.host, port=args.port)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    settings = Settings.from_env()
    early = argparse.ArgumentParser(add_help=False)
    early.add_argument('--config', type=Path)
    preliminary, _ = early.parse_known_args(argv)
    try:
        defaults = load_config_file(preliminary.config)
        parser = build_parser(settings, defaults)
    except HyperplantError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    if getattr(args, 'handler', None) is None:
        parser.print_help()
        return 1

    try:
        return args.handler(args)
    except HyperplantError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
