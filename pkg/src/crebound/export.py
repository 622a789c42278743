"""Per-element field export: legacy ASCII VTK and CSV.

Values are written with 17 significant digits so that reading the CSV
back reproduces every double exactly.
"""
import csv
from pathlib import Path

import numpy as np

__all__ = ["density", "export_fields", "write_vtk", "write_fields_csv", "read_fields_csv",
           "write_summary", "SUMMARY_COLUMNS"]

SUMMARY_COLUMNS = ("method", "cost", "theta", "ref_error", "eta", "cpu_normalized")


def _fmt(value):
    return format(float(value), ".17g")


def density(mesh, contributions):
    """Squared element contributions divided by the element areas."""
    contributions = np.asarray(contributions, dtype=float)
    return contributions ** 2 / mesh.areas


def _check_maps(mesh, maps):
    out = {}
    for name, values in maps.items():
        if not name or any(ch.isspace() for ch in name) or "," in name:
            raise ValueError(f"field name {name!r} must be non-empty, without spaces or commas")
        arr = np.asarray(values, dtype=float).reshape(-1)
        if arr.shape != (mesh.n_elements,):
            raise ValueError(f"field {name!r} has {arr.size} values for "
                             f"{mesh.n_elements} elements")
        out[name] = arr
    return out


def write_vtk(mesh, maps, path, title="crebound element fields"):
    """Legacy ASCII unstructured grid with one scalar cell array per map."""
    maps = _check_maps(mesh, maps)
    n, m = mesh.n_nodes, mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m                      # VTK_TRIANGLE
    if maps:
        lines.append(f"CELL_DATA {m}")
    for name, values in maps.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in values]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_fields_csv(mesh, maps, path):
    """CSV with an ``element`` column followed by one column per map."""
    maps = _check_maps(mesh, maps)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["element", *maps])
        cols = list(maps.values())
        for e in range(mesh.n_elements):
            writer.writerow([e, *(_fmt(c[e]) for c in cols)])
    return path


def read_fields_csv(path):
    """Inverse of :func:`write_fields_csv`: ``{name: values}`` in element order."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if not header or header[0] != "element":
        raise ValueError(f"{path}: first column must be 'element'")
    index = np.array([int(r[0]) for r in rows], dtype=int)
    if not np.array_equal(index, np.arange(len(rows))):
        raise ValueError(f"{path}: elements are not listed in order")
    return {name: np.array([float(r[j]) for r in rows]) for j, name in enumerate(header[1:], 1)}


def export_fields(mesh, maps, directory, stem="fields"):
    """Write ``<stem>.vtk`` and ``<stem>.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return (write_vtk(mesh, maps, directory / f"{stem}.vtk"),
            write_fields_csv(mesh, maps, directory / f"{stem}.csv"))


def write_summary(rows, path):
    """Summary table; ``rows`` are mappings keyed by :data:`SUMMARY_COLUMNS`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v)
                             for v in (row[c] for c in SUMMARY_COLUMNS)])
    return path
