"""Text formats for tensors, partitions and rank-one decompositions.

tensor:        first line "m n", then n^m whitespace-separated values in
               lexicographic index order (last index fastest)
partition:     one line of n cluster ids, -1 for an unclustered vertex
decomposition: one atom per line, "weight u_1 ... u_n"
"""
import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from models import Partition, RankOneAtom, SymmetricTensor
from utils.errors import DimensionError, ParameterError, ParseError, SymmetryError
from utils.validators import is_symmetric_array

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _read_lines(path: PathLike) -> List[str]:
    try:
        return Path(path).read_text().splitlines()
    except OSError as e:
        raise ParseError(f"cannot read file: {e}", path=str(path)) from e


def _floats(tokens: List[str], line: int, path: PathLike) -> List[float]:
    try:
        return [float(token) for token in tokens]
    except ValueError as e:
        raise ParseError(f"not a number: {e}", line=line, path=str(path)) from e


def parse_tensor(text: str, strict: bool = False, source: str = '<text>') -> SymmetricTensor:
    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise ParseError("empty tensor file", line=1, path=source)
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError(f"header must be 'm n', got {lines[0]!r}", line=1, path=source)
    try:
        m, n = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError(f"header must hold two integers, got {lines[0]!r}", line=1, path=source)
    if m < 2 or n < 1:
        raise ParseError(f"need m >= 2 and n >= 1, got m={m}, n={n}", line=1, path=source)

    values: List[float] = []
    for offset, line in enumerate(lines[1:], start=2):
        values.extend(_floats(line.split(), offset, source))
    if len(values) != n ** m:
        raise ParseError(f"expected {n ** m} values for m={m}, n={n}, found {len(values)}", path=source)

    array = np.array(values, dtype=np.float64).reshape((n,) * m)
    if not np.all(np.isfinite(array)):
        raise ParseError("tensor has non-finite entries", path=source)
    if is_symmetric_array(array):
        return SymmetricTensor(array, verify=False)
    if strict:
        raise SymmetryError(f"{source}: tensor is not symmetric")
    logger.warning(f"{source}: tensor is not symmetric, loading it as a general cubical tensor")
    return SymmetricTensor(array, symmetric=False, verify=False)


def read_tensor(path: PathLike, strict: bool = False) -> SymmetricTensor:
    return parse_tensor('\n'.join(_read_lines(path)), strict=strict, source=str(path))


def format_tensor(a: SymmetricTensor) -> str:
    rows = a.values.reshape(-1, a.dim)
    body = '\n'.join(' '.join(f"{value:.17g}" for value in row) for row in rows)
    return f"{a.order} {a.dim}\n{body}\n"


def write_tensor(path: PathLike, a: SymmetricTensor) -> None:
    Path(path).write_text(format_tensor(a))


def parse_partition(text: str, r: int = None, source: str = '<text>') -> Partition:
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) != 1:
        raise ParseError(f"partition file must hold exactly one line, found {len(lines)}", path=source)
    try:
        labels = [int(token) for token in lines[0].split()]
    except ValueError as e:
        raise ParseError(f"cluster ids must be integers: {e}", line=1, path=source) from e
    try:
        return Partition(np.array(labels), r=r)
    except (ParameterError, DimensionError) as e:
        raise ParseError(str(e), line=1, path=source) from e


def read_partition(path: PathLike, r: int = None) -> Partition:
    return parse_partition('\n'.join(_read_lines(path)), r=r, source=str(path))


def write_partition(path: PathLike, partition: Partition) -> None:
    Path(path).write_text(' '.join(str(label) for label in partition.assignment.tolist()) + '\n')


def read_decomposition(path: PathLike, n: int) -> List[RankOneAtom]:
    atoms = []
    for line_number, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        numbers = _floats(line.split(), line_number, path)
        if len(numbers) != n + 1:
            raise ParseError(f"atom needs a weight and {n} vector entries, found {len(numbers)} numbers",
                             line=line_number, path=str(path))
        atoms.append(RankOneAtom(numbers[0], np.array(numbers[1:])))
    return atoms


def write_decomposition(path: PathLike, atoms: List[RankOneAtom]) -> None:
    lines = [' '.join(f"{value:.17g}" for value in [weight] + list(vector)) for weight, vector in atoms]
    Path(path).write_text('\n'.join(lines) + '\n')


def partition_sidecar(tensor_path: PathLike) -> Path:
    """Default partition file next to a tensor file: <name>.partition"""
    path = Path(tensor_path)
    return path.with_name(path.name + '.partition')
