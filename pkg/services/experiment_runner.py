"""Monte Carlo experiment grids written to a single CSV.

The CSV has a fixed header and three row types: ``trial`` (one per cell and
trial), ``aggregate`` (one per cell, after its trials) and ``skipped`` (one
per cell whose parameters are invalid or over budget). Rows are ordered by
cell id and trial index whatever the thread count, and every random draw
comes from seeds derived from (base seed, cell id, trial), so a rerun with the
same grid produces the same bytes. Wall times go to a separate
``<output>.timings.csv``.
"""
import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from models import TrialRecord
from schemas.configs import ExperimentGrid
from schemas.model_params import ModelParams, validated
from services.certifier import (Certifier, bernstein_threshold, lemma1_scale, neighborhood_sums, noise_tensor)
from services.partition_solver import PartitionSolver
from services.planted_model import generate_instance
from services.spectral_nuclear import power_iteration
from utils.errors import HyperplantError, OutputError, ParameterError
from utils.helpers import count_equal_partitions, derive_seed, format_float, standard_error

logger = logging.getLogger(__name__)

METHODS = ('exhaustive', 'local-search', 'conditional-gradient')
CELL_COLUMNS = ['n', 'm', 'r', 'k', 'p', 'q', 'diagonal_policy']
HEADER = (
    ['row_type', 'cell_id', 'trial', 'seed'] + CELL_COLUMNS + ['status', 'reason',
     'cert_pass', 'margin', 'lambda', 'z_spectral_bound', 'linf_projected', 'spectral_method']
    + [f"exact_{method.replace('-', '_')}" for method in METHODS]
    + ['lemma1_norm', 'lemma1_pass', 'tail_exceedances', 'tail_samples',
       'trials', 'completed', 'cert_rate', 'cert_se', 'mean_margin']
    + [f"exact_rate_{method.replace('-', '_')}" for method in METHODS]
    + [f"exact_se_{method.replace('-', '_')}" for method in METHODS]
    + ['lemma1_rate', 'tail_frequency']
)
TIMING_HEADER = ['cell_id', 'trial', 'stage', 'seconds']


def method_column(method: str, prefix: str = 'exact_') -> str:
    return prefix + method.replace('-', '_')


@dataclass
class GridCell:
    """One point of the cartesian product, with its validated params or a skip reason"""
    cell_id: int
    values: Dict[str, object]
    params: Optional[ModelParams] = None
    skip_reason: str = ''


class TrialTimeout(HyperplantError):
    """A trial went over its wall-time cap"""


def expand_grid(grid: ExperimentGrid) -> List[GridCell]:
    """Cells in a fixed order: n, m, r, k, p (or gap), q, outermost first"""
    auto_n = grid.auto_n or not grid.n
    n_values = [None] if auto_n else grid.n
    p_values = grid.gap if grid.gap else grid.p
    cells = []
    for cell_id, (n, m, r, k, p_or_gap, q) in enumerate(product(n_values, grid.m, grid.r, grid.k, p_values, grid.q)):
        p = round(q + p_or_gap, 12) if grid.gap else p_or_gap
        values = dict(n=r * k if n is None else n, m=m, r=r, k=k, p=p, q=q, diagonal_policy=grid.diagonal_policy)
        cell = GridCell(cell_id=cell_id, values=values)
        try:
            cell.params = validated(ModelParams, values)
        except ParameterError as e:
            cell.skip_reason = f"constraint_violated: {e}"
        if cell.params is not None and 'solve' in grid.tasks and 'exhaustive' in grid.methods:
            count = count_equal_partitions(cell.params.n, cell.params.r, cell.params.k)
            if count > grid.solver.budget:
                cell.skip_reason = f"budget_exceeded: exhaustive search needs {count} partitions"
                cell.params = None
        if cell.skip_reason:
            logger.warning(f"Skipping cell {cell_id}: {cell.skip_reason}")
        cells.append(cell)
    return cells


class ExperimentRunner:
    """Runs every (cell, trial) job of a grid and writes the result CSVs"""

    def __init__(self, grid: ExperimentGrid, threads: int = 1):
        if threads < 1:
            raise ParameterError(f"threads must be at least 1, got {threads}")
        self.grid = grid
        self.threads = threads

    def run(self, output: Optional[Path] = None) -> Path:
        output = Path(output or self.grid.output)
        cells = expand_grid(self.grid)
        jobs = [(cell, trial) for cell in cells if cell.params is not None for trial in range(self.grid.trials)]
        logger.info(f"Running {len(jobs)} trials over {len(cells)} cells with {self.threads} thread(s)")

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                records = list(pool.map(lambda job: self.run_trial(*job), jobs))
        else:
            records = [self.run_trial(cell, trial) for cell, trial in jobs]
        records.sort(key=lambda record: (record.cell_id, record.trial))

        self._write(output, cells, records)
        failed = sum(1 for record in records if not record.completed)
        logger.info(f"Wrote {output} ({len(records)} trials, {failed} failed)")
        return output

    def run_trial(self, cell: GridCell, trial: int) -> TrialRecord:
        seed = derive_seed(self.grid.base_seed, cell.cell_id, trial)
        record = TrialRecord(cell_id=cell.cell_id, trial=trial, seed=seed, cell=cell.values)
        started = time.monotonic()
        try:
            instance = self._stage(record, 'generate', started, lambda: generate_instance(cell.params, seed))
            for task in self.grid.tasks:
                if task == 'certify':
                    self._stage(record, 'certify', started, lambda: self._certify(record, instance))
                elif task == 'solve':
                    for method in self.grid.methods:
                        self._stage(record, f"solve_{method}", started, lambda: self._solve(record, instance, method))
                elif task == 'lemma1':
                    self._stage(record, 'lemma1', started, lambda: self._lemma1(record, instance))
                elif task == 'bernstein':
                    self._stage(record, 'bernstein', started, lambda: self._tail(record, instance))
        except TrialTimeout as e:
            record.status, record.reason = 'failed', f"timeout: {e}"
            logger.warning(f"Cell {cell.cell_id} trial {trial}: {record.reason}")
        except Exception as e:
            record.status, record.reason = 'failed', f"error: {type(e).__name__}: {e}"
            logger.error(f"Cell {cell.cell_id} trial {trial} failed", exc_info=True)
        return record

    def _stage(self, record: TrialRecord, name: str, started: float, action):
        begin = time.monotonic()
        result = action()
        record.timings[name] = time.monotonic() - begin
        elapsed = time.monotonic() - started
        if elapsed > self.grid.trial_timeout:
            raise TrialTimeout(f"{elapsed:.1f}s after stage {name} exceeds {self.grid.trial_timeout:g}s")
        return result

    def _certify(self, record: TrialRecord, instance) -> None:
        options = self.grid.certify.model_copy(update={'seed': derive_seed(record.seed, 2) % (1 << 32)})
        report = Certifier(options).certify(instance)
        record.cert_pass = report.passes
        record.margin = report.margin
        record.lam = report.lam
        record.z_spectral_bound = report.z_spectral_bound
        record.linf_projected = report.linf_projected
        record.spectral_method = report.spectral_method

    def _solve(self, record: TrialRecord, instance, method: str) -> None:
        config = self.grid.solver.model_copy(update={'seed': derive_seed(record.seed, 3) % (1 << 32)})
        params = instance.params
        result = PartitionSolver(config).solve(instance.adjacency, params.r, params.k, truth=instance.truth,
                                               method=method)
        record.exact[method] = bool(result.exact)

    def _lemma1(self, record: TrialRecord, instance) -> None:
        options = self.grid.certify
        norm = power_iteration(noise_tensor(instance), restarts=options.restarts, max_iters=options.max_iters,
                               tol=options.tol, seed=options.seed).value
        record.lemma1_norm = norm
        record.lemma1_pass = norm <= self.grid.lemma1_c * lemma1_scale(instance.params)

    def _tail(self, record: TrialRecord, instance) -> None:
        sums = neighborhood_sums(instance)
        record.tail_exceedances = int(np.count_nonzero(sums >= bernstein_threshold(instance.params)))
        record.tail_samples = int(sums.size)

    def _trial_row(self, record: TrialRecord) -> Dict[str, str]:
        row = {'row_type': 'trial', 'cell_id': str(record.cell_id), 'trial': str(record.trial),
               'seed': str(record.seed), 'status': record.status, 'reason': record.reason}
        row.update(_cell_fields(record.cell))
        row.update({
            'cert_pass': format_float(record.cert_pass),
            'margin': format_float(record.margin),
            'lambda': format_float(record.lam),
            'z_spectral_bound': format_float(record.z_spectral_bound),
            'linf_projected': format_float(record.linf_projected),
            'spectral_method': record.spectral_method or '',
            'lemma1_norm': format_float(record.lemma1_norm),
            'lemma1_pass': format_float(record.lemma1_pass),
            'tail_exceedances': format_float(record.tail_exceedances),
            'tail_samples': format_float(record.tail_samples),
        })
        for method, exact in record.exact.items():
            row[method_column(method)] = format_float(exact)
        return row

    def _aggregate_row(self, cell: GridCell, records: List[TrialRecord]) -> Dict[str, str]:
        done = [record for record in records if record.completed]
        row = {'row_type': 'aggregate', 'cell_id': str(cell.cell_id), 'status': 'ok',
               'trials': str(len(records)), 'completed': str(len(done))}
        row.update(_cell_fields(cell.values))
        row.update(aggregate(done))
        return row

    def _write(self, output: Path, cells: List[GridCell], records: List[TrialRecord]) -> None:
        by_cell: Dict[int, List[TrialRecord]] = {}
        for record in records:
            by_cell.setdefault(record.cell_id, []).append(record)
        try:
            with open(output, 'w', newline='') as handle:
                writer = csv.DictWriter(handle, fieldnames=HEADER, restval='', lineterminator='\n')
                writer.writeheader()
                for cell in cells:
                    if cell.params is None:
                        row = {'row_type': 'skipped', 'cell_id': str(cell.cell_id), 'status': 'skipped',
                               'reason': cell.skip_reason}
                        row.update(_cell_fields(cell.values))
                        writer.writerow(row)
                        continue
                    cell_records = by_cell.get(cell.cell_id, [])
                    for record in cell_records:
                        writer.writerow(self._trial_row(record))
                    writer.writerow(self._aggregate_row(cell, cell_records))
            with open(timings_path(output), 'w', newline='') as handle:
                writer = csv.writer(handle, lineterminator='\n')
                writer.writerow(TIMING_HEADER)
                for record in records:
                    for stage, seconds in record.timings.items():
                        writer.writerow([record.cell_id, record.trial, stage, f"{seconds:.6f}"])
        except OSError as e:
            raise OutputError(f"Cannot write results to {output}: {e}") from e


def _cell_fields(values: Dict[str, object]) -> Dict[str, str]:
    fields = {}
    for name in CELL_COLUMNS:
        value = values[name]
        fields[name] = value.value if hasattr(value, 'value') else format_float(value)
    return fields


def _rate(flags: List[bool]) -> Optional[float]:
    return sum(flags) / len(flags) if flags else None


def aggregate(records: List[TrialRecord]) -> Dict[str, str]:
    """Aggregate columns of a cell from its completed trials"""
    row = {}
    certified = [record.cert_pass for record in records if record.cert_pass is not None]
    cert_rate = _rate(certified)
    if cert_rate is not None:
        row['cert_rate'] = format_float(cert_rate)
        row['cert_se'] = format_float(standard_error(cert_rate, len(certified)))
        margins = [record.margin for record in records if record.margin is not None]
        row['mean_margin'] = format_float(sum(margins) / len(margins))
    for method in METHODS:
        flags = [record.exact[method] for record in records if method in record.exact]
        rate = _rate(flags)
        if rate is not None:
            row[method_column(method, 'exact_rate_')] = format_float(rate)
            row[method_column(method, 'exact_se_')] = format_float(standard_error(rate, len(flags)))
    lemma = _rate([record.lemma1_pass for record in records if record.lemma1_pass is not None])
    if lemma is not None:
        row['lemma1_rate'] = format_float(lemma)
    samples = sum(record.tail_samples or 0 for record in records)
    if samples:
        row['tail_frequency'] = format_float(sum(record.tail_exceedances or 0 for record in records) / samples)
    return row


def timings_path(output: Path) -> Path:
    return output.with_name(output.name + '.timings.csv')


def run_grid(grid: ExperimentGrid, threads: int = 1, output: Optional[Path] = None) -> Path:
    return ExperimentRunner(grid, threads).run(output)
