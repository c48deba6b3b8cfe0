"""Dataset, result, and config file formats.

All emitted CSVs are plain comma-separated text with a provenance header of
``# key: value`` comment lines. Floats are rendered with repr, which
round-trips exactly, so written files parse back losslessly. Instrument-map
files use one ``regressor: instruments`` line per mapped regressor with
1-based indices.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError, UnmappedRegressor
from .model import DesignData, InstrumentMap, normalize_instruments

ENV_OUTPUT_DIR = "IVSELECT_OUTDIR"


def default_output_dir() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_DIR, "."))


def format_value(x) -> str:
    """Full-precision text for a cell: repr for floats, str otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def config_hash(items: dict) -> str:
    """Stable short hash of a flat configuration mapping."""
    canon = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def provenance_lines(meta: dict | None) -> list[str]:
    from . import __version__

    lines = [f"# ivselect-version: {__version__}"]
    for key in sorted(meta or {}):
        lines.append(f"# {key}: {meta[key]}")
    return lines


# ---------------------------------------------------------------------------
# Generic tables
# ---------------------------------------------------------------------------

def write_table(path, header: list[str], rows, meta: dict | None = None) -> None:
    """Write a provenance-stamped CSV with one header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for line in provenance_lines(meta):
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def read_table(path) -> tuple[list[str], list[list[str]], dict[str, str]]:
    """Read a CSV written by write_table; returns (header, rows, provenance)."""
    provenance: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[str]] = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, value = body.partition(":")
                    provenance[key.strip()] = value.strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
            else:
                rows.append(line.split(","))
    if header is None:
        raise ParseError(0, str(path), "no header row found")
    return header, rows, provenance


def write_matrix(path, M: np.ndarray, prefix: str, meta: dict | None = None,
                 names: list[str] | None = None) -> None:
    """Write a 2-D array with generated or caller-provided column names."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if names is None:
        names = [f"{prefix}{j + 1}" for j in range(M.shape[1])]
    write_table(path, names, M, meta)


def read_matrix(path) -> tuple[np.ndarray, list[str]]:
    """Read a numeric CSV back into an array, keeping the column names."""
    header, rows, _ = read_table(path)
    try:
        M = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise ParseError(0, str(path), str(exc)) from exc
    if M.size == 0:
        raise ParseError(0, str(path), "no data rows")
    if M.shape[1] != len(header):
        raise DimensionMismatch(f"{path}: {len(header)} columns in header, "
                                f"{M.shape[1]} in data")
    return M, header


# ---------------------------------------------------------------------------
# Datasets and instrument maps
# ---------------------------------------------------------------------------

def write_instrument_map(path, imap: InstrumentMap, meta: dict | None = None) -> None:
    """One ``j: l1 l2 ...`` line per regressor, all indices 1-based."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for line in provenance_lines(meta):
            fh.write(line + "\n")
        for j, group in enumerate(imap.groups):
            fh.write(f"{j + 1}: " + " ".join(str(g + 1) for g in group) + "\n")


def read_instrument_map(path, p: int, q: int,
                        x_names: list[str] | None = None,
                        w_names: list[str] | None = None) -> InstrumentMap:
    """Parse a map file, self-instrumenting unmapped regressors by name.

    A regressor absent from the file gets the same-named instrument column
    as its group when one exists; otherwise UnmappedRegressor is raised.
    """
    groups: dict[int, np.ndarray] = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            head, sep, tail = line.partition(":")
            if not sep:
                raise ParseError(line_no, line, "expected 'regressor: instruments'")
            try:
                j = int(head)
                idx = [int(tok) for tok in tail.replace(",", " ").split()]
            except ValueError as exc:
                raise ParseError(line_no, line, str(exc)) from exc
            if not 1 <= j <= p:
                raise ParseError(line_no, line, f"regressor index {j} outside 1..{p}")
            if not idx:
                raise ParseError(line_no, line, "empty instrument list")
            if any(not 1 <= ell <= q for ell in idx):
                raise ParseError(line_no, line, f"instrument index outside 1..{q}")
            groups[j - 1] = np.asarray(idx, dtype=np.intp) - 1

    w_lookup = {name: ell for ell, name in enumerate(w_names or [])}
    full: list[np.ndarray] = []
    for j in range(p):
        if j in groups:
            full.append(groups[j])
            continue
        name = x_names[j] if x_names else None
        if name is not None and name in w_lookup:
            full.append(np.array([w_lookup[name]], dtype=np.intp))
        else:
            raise UnmappedRegressor(j + 1, name)
    return InstrumentMap(groups=full, q=q)


def write_dataset(outdir, data: DesignData, imap: InstrumentMap,
                  theta_star: np.ndarray | None = None,
                  meta: dict | None = None) -> dict[str, Path]:
    """Write y.csv, X.csv, W.csv, instrument_map.txt (and truth.csv)."""
    outdir = Path(outdir)
    paths = {
        "y": outdir / "y.csv",
        "X": outdir / "X.csv",
        "W": outdir / "W.csv",
        "map": outdir / "instrument_map.txt",
    }
    write_table(paths["y"], ["y"], ([v] for v in data.y), meta)
    write_matrix(paths["X"], data.X, "x", meta)
    write_matrix(paths["W"], data.W, "w", meta)
    write_instrument_map(paths["map"], imap, meta)
    if theta_star is not None:
        paths["truth"] = outdir / "truth.csv"
        write_table(paths["truth"], ["theta_star"], ([v] for v in theta_star), meta)
    return paths


def load_dataset(y_path, x_path, w_path, map_path
                 ) -> tuple[DesignData, InstrumentMap]:
    """Load and validate a dataset, normalizing the instrument columns."""
    y_mat, _ = read_matrix(y_path)
    if y_mat.shape[1] != 1:
        raise DimensionMismatch(f"{y_path}: response must have exactly one column")
    y = y_mat[:, 0]
    X, x_names = read_matrix(x_path)
    W, w_names = read_matrix(w_path)
    if X.shape[0] != y.shape[0] or W.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"row counts disagree: y has {y.shape[0]}, X has {X.shape[0]}, "
            f"W has {W.shape[0]}")
    imap = read_instrument_map(map_path, X.shape[1], W.shape[1],
                               x_names=x_names, w_names=w_names)
    data = normalize_instruments(DesignData(y=y, X=X, W=W))
    return data, imap


def load_truth_vector(path, p: int) -> np.ndarray:
    truth_mat, _ = read_matrix(path)
    if truth_mat.shape != (p, 1):
        raise DimensionMismatch(f"{path}: expected {p} rows and one column")
    return truth_mat[:, 0]


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def parse_config_file(path) -> dict[str, str]:
    """Parse a ``dotted.key = value`` config file into a flat mapping."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ParseError(line_no, line, "expected 'key = value'")
            out[key.strip()] = value.strip()
    return out
