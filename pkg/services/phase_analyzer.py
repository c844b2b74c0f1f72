"""Compare observed success rates of an experiment CSV with the recovery threshold."""
import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

from models import PhaseCell
from services.certifier import critical_constant, threshold_terms
from services.experiment_runner import METHODS, method_column
from utils.errors import ParseError
from utils.helpers import standard_error

logger = logging.getLogger(__name__)

SUCCESS_FLOOR = 0.9
CALIBRATION_STEP = 1e-9
REQUIRED = ['row_type', 'cell_id', 'n', 'm', 'r', 'k', 'p', 'q', 'trials', 'completed']


def _number(row: Dict[str, str], column: str, cast, line: int, path: str):
    try:
        return cast(row[column])
    except (TypeError, ValueError):
        raise ParseError(f"column '{column}' has invalid value {row.get(column)!r}", line=line, path=path)


class PhaseAnalyzer:
    """Reads aggregate rows and aligns them with the threshold predicate"""

    def __init__(self, metric: str = 'auto', c: Optional[float] = None, floor: float = SUCCESS_FLOOR):
        self.metric = metric
        self.c = c
        self.floor = floor

    def load(self, path: Path) -> List[Dict[str, object]]:
        """Aggregate rows as dicts with typed cell parameters and the success rate"""
        path = str(path)
        try:
            handle = open(path, newline='')
        except OSError as e:
            raise ParseError(f"cannot open results: {e}", path=path) from e
        with handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                raise ParseError("empty file", line=1, path=path)
            missing = [column for column in REQUIRED if column not in reader.fieldnames]
            if missing:
                raise ParseError(f"header is missing {', '.join(missing)}", line=1, path=path)
            rows = []
            for row in reader:
                line = reader.line_num
                if None in row or any(value is None for value in row.values()):
                    raise ParseError("wrong number of fields", line=line, path=path)
                if row['row_type'] not in ('trial', 'aggregate', 'skipped'):
                    raise ParseError(f"unknown row_type {row['row_type']!r}", line=line, path=path)
                if row['row_type'] != 'aggregate':
                    continue
                rate_column = self._rate_column(row)
                rows.append({
                    'cell_id': _number(row, 'cell_id', int, line, path),
                    'n': _number(row, 'n', int, line, path),
                    'm': _number(row, 'm', int, line, path),
                    'r': _number(row, 'r', int, line, path),
                    'k': _number(row, 'k', int, line, path),
                    'p': _number(row, 'p', float, line, path),
                    'q': _number(row, 'q', float, line, path),
                    'completed': _number(row, 'completed', int, line, path),
                    'rate': _number(row, rate_column, float, line, path) if rate_column else math.nan,
                })
        logger.info(f"Loaded {len(rows)} aggregate rows from {path}")
        return rows

    def _rate_column(self, row: Dict[str, str]) -> Optional[str]:
        if self.metric != 'auto':
            column = 'cert_rate' if self.metric == 'certify' else method_column(self.metric, 'exact_rate_')
            return column if row.get(column) else None
        for column in ['cert_rate'] + [method_column(method, 'exact_rate_') for method in METHODS]:
            if row.get(column):
                return column
        return None

    def calibrate(self, rows: List[Dict[str, object]]) -> float:
        """Constant C at which the threshold predicate separates the observed frontier.

        Each cell has a critical C* with predicate true iff C <= C*. C is put
        a relative step above the largest C* of a cell with rate below the floor; when no
        cell fails it sits a step below the smallest positive C*, so every cell is predicted.
        """
        criticals = [(critical_constant(row['n'], row['m'], row['k'], row['p'], row['q']), row['rate'])
                     for row in rows if not math.isnan(row['rate'])]
        failing = [c for c, rate in criticals if rate < self.floor and c > 0]
        if failing:
            return max(failing) * (1.0 + CALIBRATION_STEP)
        positive = [c for c, _ in criticals if c > 0]
        return min(positive) * (1.0 - CALIBRATION_STEP) if positive else 1.0

    def report(self, path: Path) -> List[PhaseCell]:
        rows = self.load(path)
        c = self.c if self.c is not None else self.calibrate(rows)
        cells = []
        for row in rows:
            terms = threshold_terms(row['n'], row['m'], row['k'], row['p'], row['q'], c)
            rate = row['rate']
            cell = PhaseCell(
                cell_id=row['cell_id'], n=row['n'], m=row['m'], r=row['r'], k=row['k'], p=row['p'], q=row['q'],
                trials=row['completed'],
                success_rate=rate,
                standard_error=standard_error(rate, row['completed']) if not math.isnan(rate) else math.nan,
                constant=c,
                lhs=terms.lhs,
                rhs=terms.rhs,
                predicate=terms.predicate,
                flagged=bool(terms.predicate and not math.isnan(rate) and rate < self.floor),
            )
            if cell.flagged:
                logger.warning(f"Cell {cell.cell_id}: predicate holds but success rate is {rate:.3f}")
            cells.append(cell)
        return cells


def format_table(cells: List[PhaseCell]) -> str:
    """Plain-text phase table, one line per cell"""
    lines = [f"{'cell':>4} {'n':>4} {'m':>2} {'r':>2} {'k':>3} {'p':>6} {'q':>6} {'lhs/rhs':>9} "
             f"{'pred':>5} {'rate':>6} {'se':>6} flag"]
    for cell in cells:
        ratio = cell.lhs / cell.rhs if cell.rhs else math.nan
        lines.append(f"{cell.cell_id:>4} {cell.n:>4} {cell.m:>2} {cell.r:>2} {cell.k:>3} {cell.p:>6.3f} "
                     f"{cell.q:>6.3f} {ratio:>9.4g} {str(cell.predicate).lower():>5} {cell.success_rate:>6.3f} "
                     f"{cell.standard_error:>6.3f} {'!' if cell.flagged else ''}")
    if cells:
        lines.append(f"C = {cells[0].constant:.6g}")
    return '\n'.join(lines)


def phase_report(path: Path, c: Optional[float] = None, metric: str = 'auto') -> List[PhaseCell]:
    return PhaseAnalyzer(metric=metric, c=c).report(path)
