"""
Readers and writers for the file formats used by the command line

Floats are always written with repr so that every value round-trips exactly.
"""
import csv
import json
import logging
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ParameterError
from .random_partition import Partition

logger = logging.getLogger(__name__)


def _prepare(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _format(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_partition_line(path, partition, append=False):
    """Write one partition as comma-separated labels on a single line"""
    with open(_prepare(path), "a" if append else "w", encoding="utf-8") as f:
        f.write(partition.to_line() + "\n")


def write_partitions(path, partitions):
    """Write partitions one per line (comma-separated labels)"""
    with open(_prepare(path), "w", encoding="utf-8") as f:
        for partition in partitions:
            f.write(partition.to_line() + "\n")


def read_partition_line(path, line=1):
    """Read the partition stored on a given (1-based) line of a file"""
    with open(path, encoding="utf-8") as f:
        for number, text in enumerate(f, start=1):
            if number == line:
                try:
                    return Partition.from_line(text)
                except ValueError as e:
                    raise DataFormatError(f"invalid partition labels ({e})", path, number) from e
    raise DataFormatError(f"file has no line {line}", path)


def write_pmf_csv(path, pmf, columns=None):
    """
    Write a pmf over k = 1..len as CSV with header `k,probability`

    Args:
        path: Output file
        pmf: ClusterCountPmf or array of probabilities for k = 1, 2, ...
        columns: Optional extra columns {name: array}, written after probability
    """
    probabilities = getattr(pmf, "probabilities", pmf)
    columns = columns or {}
    with open(_prepare(path), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "probability", *columns])
        for index, probability in enumerate(probabilities):
            extra = [_format(values[index]) for values in columns.values()]
            writer.writerow([index + 1, _format(probability), *extra])


def read_pmf_csv(path):
    """Read back a `k,probability` file as an array indexed by k - 1"""
    rows = _read_rows(path, header=True)
    return np.array([_parse_float(row[1], path, number) for number, row in rows])


def _read_rows(path, header=False):
    try:
        f = open(path, encoding="utf-8", newline="")
    except OSError as e:
        raise DataFormatError(f"cannot open file ({e.strerror})", path) from e
    with f:
        rows = []
        for number, row in enumerate(csv.reader(f), start=1):
            if header and number == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            rows.append((number, [cell.strip() for cell in row]))
    if not rows:
        raise DataFormatError("file contains no data rows", path)
    return rows


def _parse_float(cell, path, line):
    try:
        value = float(cell)
    except ValueError as e:
        raise DataFormatError(f"not a number: {cell!r}", path, line) from e
    if not np.isfinite(value):
        raise DataFormatError(f"non-finite value: {cell!r}", path, line)
    return value


def read_mixture_data(path):
    """
    Read a headerless CSV of real columns

    Args:
        path: CSV file, one observation per line

    Returns:
        (n, d) float array
    """
    rows = _read_rows(path)
    width = len(rows[0][1])
    data = []
    for number, row in rows:
        if len(row) != width:
            raise DataFormatError(f"expected {width} columns, found {len(row)}", path, number)
        data.append([_parse_float(cell, path, number) for cell in row])
    logger.debug("Read %d x %d data matrix from %s", len(data), width, path)
    return np.array(data)


def write_mixture_data(path, data):
    write_matrix_csv(path, data)


def _parse_int(cell, path, line):
    try:
        return int(cell)
    except ValueError as e:
        raise DataFormatError(f"not an integer: {cell!r}", path, line) from e


def _looks_like_edge_list(rows):
    # a 2 x 2 file of 0/1 entries is read as a dense matrix
    if any(len(row) != 2 for _, row in rows):
        return False
    if len(rows) != 2:
        return True
    return any(cell not in ("0", "1") for _, row in rows for cell in row)


def read_network(path, fmt="auto", n=None):
    """
    Read one network as a symmetric 0/1 matrix with zero diagonal

    Dense files hold an n x n matrix of 0/1; edge lists hold one 1-indexed
    `i,j` pair per line. Asymmetric input is symmetrized with a warning and the
    diagonal is cleared.

    Args:
        path: Input file
        fmt: 'dense', 'edges' or 'auto'
        n: Node count for edge lists (defaults to the largest index seen)

    Returns:
        (n, n) int8 array
    """
    rows = _read_rows(path)
    if fmt == "auto":
        fmt = "edges" if _looks_like_edge_list(rows) else "dense"
    if fmt == "dense":
        size = len(rows)
        matrix = np.zeros((size, size), dtype=np.int8)
        for r, (number, row) in enumerate(rows):
            if len(row) != size:
                raise DataFormatError(f"expected {size} columns in a square matrix, found {len(row)}", path, number)
            values = [_parse_int(cell, path, number) for cell in row]
            if any(value not in (0, 1) for value in values):
                raise DataFormatError("adjacency entries must be 0 or 1", path, number)
            matrix[r] = values
        if n is not None and n != size:
            raise DataFormatError(f"matrix has {size} nodes, expected {n}", path)
    elif fmt == "edges":
        pairs = []
        for number, row in rows:
            if len(row) != 2:
                raise DataFormatError(f"edge lines need two columns, found {len(row)}", path, number)
            i, j = (_parse_int(cell, path, number) for cell in row)
            if i < 1 or j < 1 or (n is not None and max(i, j) > n):
                raise DataFormatError(f"node index out of range in edge ({i}, {j})", path, number)
            pairs.append((i - 1, j - 1))
        size = n if n is not None else max(max(pair) for pair in pairs) + 1
        matrix = np.zeros((size, size), dtype=np.int8)
        for i, j in pairs:
            matrix[i, j] = 1
    else:
        raise DataFormatError(f"unknown network format {fmt!r}", path)

    if np.any(np.diagonal(matrix)):
        logger.warning("Clearing self-loops in %s", path)
        np.fill_diagonal(matrix, 0)
    if not np.array_equal(matrix, matrix.T):
        if fmt == "dense":
            logger.warning("Adjacency in %s is not symmetric; symmetrizing", path)
        matrix = np.maximum(matrix, matrix.T)
    return matrix


def write_matrix_csv(path, matrix):
    """Write a dense 2-D array, one row per line"""
    matrix = np.atleast_2d(np.asarray(matrix))
    with open(_prepare(path), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in matrix:
            writer.writerow([_format(value) for value in row.tolist()])


def write_trace_csv(path, columns):
    """
    Write equal-length columns with a header row

    Args:
        path: Output file
        columns: Mapping {header: 1-D array}
    """
    arrays = {name: np.asarray(values) for name, values in columns.items()}
    lengths = {values.shape[0] for values in arrays.values()}
    if len(lengths) > 1:
        raise ParameterError(f"trace columns differ in length: {sorted(lengths)}")
    with open(_prepare(path), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(arrays))
        for row in zip(*(values.tolist() for values in arrays.values())):
            writer.writerow([_format(value) for value in row])


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_json(path, payload):
    """Write a manifest or summary as indented JSON (infinities allowed)"""
    with open(_prepare(path), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise DataFormatError(f"cannot open file ({e.strerror})", path) from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"invalid JSON ({e.msg})", path, e.lineno) from e
