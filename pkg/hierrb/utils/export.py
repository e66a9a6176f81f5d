"""Report writers: CSV tables, whitespace separated plot data and the Excel summary"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
from openpyxl import Workbook

from hierrb.exceptions import ArtifactError

logger = logging.getLogger(__name__)

SMALL_EXPORT_LIMIT = 20000


def format_cell(value) -> str:
    """Deterministic text of a report cell (shortest round-trip floats, empty for None)"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    logger.info(f"report written: {path} ({len(rows)} rows)")
    return path


def read_csv(path) -> Tuple[List[str], List[List[str]]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"report not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        return header, [row for row in reader if row]


def write_plot_data(path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    """Whitespace separated columns with a commented header line, for gnuplot/pgfplots"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(format_cell(v) if v is not None else "nan" for v in row) + "\n")
    logger.info(f"plot data written: {path}")
    return path


def write_workbook(path, sheets: Dict[str, Tuple[Sequence[str], Sequence[Sequence]]]) -> Path:
    """One sheet per report; sheet names are cut to Excel's 31 characters"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wb = Workbook()
    wb.remove(wb.active)
    for name, (header, rows) in sheets.items():
        ws = wb.create_sheet(title=name[:31])
        ws.append(list(header))
        for row in rows:
            ws.append([_excel_value(v) for v in row])
    wb.save(path)
    logger.info(f"workbook written: {path} ({len(sheets)} sheets)")
    return path


def _excel_value(value):
    if value is None:
        return "-"
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def export_vectors_csv(path, vectors: np.ndarray, coordinates: np.ndarray = None) -> Path:
    """Truth vectors (columns) as CSV, complex values split into re/im columns"""
    vectors = np.asarray(vectors)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    if vectors.shape[0] > SMALL_EXPORT_LIMIT:
        raise ArtifactError(f"{vectors.shape[0]} rows are too many for CSV export, use the container")

    header, columns = [], []
    if coordinates is not None:
        coordinates = np.asarray(coordinates).reshape(vectors.shape[0], -1)
        header += [f"x_{j + 1}" for j in range(coordinates.shape[1])]
        columns += [coordinates[:, j] for j in range(coordinates.shape[1])]
    for j in range(vectors.shape[1]):
        if np.iscomplexobj(vectors):
            header += [f"re_{j + 1}", f"im_{j + 1}"]
            columns += [vectors[:, j].real, vectors[:, j].imag]
        else:
            header.append(f"v_{j + 1}")
            columns.append(vectors[:, j])
    rows = np.column_stack(columns).tolist()
    return write_csv(path, header, rows)
