"""
reports.py
CSV and text artifacts. Floats are written with 17 significant digits so reruns are byte-identical.
"""

from pathlib import Path
from typing import List, Union

import pandas as pd

from assembly import Pencil, write_coo_text
from config import FLOAT_FORMAT, log

PathLike = Union[str, Path]


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Header row, no index, fixed float format"""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    log("CLI", f"wrote {len(frame)} rows to {path}")
    return path


def format_table(frame: pd.DataFrame, max_rows: int = 20) -> str:
    """One-screen rendering for the console summary"""
    if len(frame) <= max_rows:
        return frame.to_string(index=False)
    head = frame.head(max_rows).to_string(index=False)
    return f"{head}\n... ({len(frame) - max_rows} more rows)"


def export_pencil(pencil: Pencil, directory: PathLike) -> List[Path]:
    """A_mass, B_stiff and the four base matrices as 'row col value' text"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ops = pencil.operators
    matrices = {
        "A_mass": pencil.A_mass,
        "B_stiff": pencil.B_stiff,
        "M_bulk": ops.M_bulk,
        "K_bulk": ops.K_bulk,
        "M_bnd": ops.M_bnd,
        "K_bnd": ops.K_bnd,
    }
    written = []
    for name, matrix in matrices.items():
        path = directory / f"{name}.coo"
        with open(path, "w") as f:
            write_coo_text(matrix, f)
        written.append(path)
    log("CLI", f"exported {len(written)} matrices to {directory}")
    return written
