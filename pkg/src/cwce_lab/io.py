"""Text serialization of panels, distributions and fits.

Panels are written one row per individual-time with shortest round-trip
float formatting, so reading a file back reproduces every value bit for bit.
A JSON sidecar carries the model parameters and the seed.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .cwce import CwceDistribution, distribution_from_dict
from .errors import ParameterError
from .reml import RemlFit
from .scm import Panel, ScmParams

PANEL_FORMAT = "cwce-lab-panel/1"


def _fmt(value: float) -> str:
    return repr(float(value))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_panel(panel: Panel, path) -> tuple[Path, Path]:
    """Write ``panel`` to ``path`` (CSV) and its metadata sidecar."""
    path = Path(path)
    has_d = panel.d is not None
    header = ["id", "k", "c", "a", "y"] + (["d"] if has_d else []) + ["u0", "u1", "u2", "n_y", "n_a"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(panel.n):
            u0, u1, u2 = (_fmt(v) for v in panel.u[i])
            for j in range(panel.m):
                row = [str(int(panel.ids[i])), str(j + 1), _fmt(panel.c[i, j]), str(int(panel.a[i, j])),
                       _fmt(panel.y[i, j])]
                if has_d:
                    row.append(str(int(panel.d[i, j])))
                row += [u0, u1, u2, _fmt(panel.noise_y[i, j]), _fmt(panel.noise_a[i, j])]
                writer.writerow(row)
    meta = {"format": PANEL_FORMAT, "params": panel.params.to_dict(), "seed": int(panel.seed),
            "n": panel.n, "m": panel.m}
    side = sidecar_path(path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, side


def read_panel(path) -> Panel:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    if meta.get("format") != PANEL_FORMAT:
        raise ParameterError(f"{path}: unsupported panel format {meta.get('format')!r}")
    params = ScmParams.from_dict(meta["params"])
    n, m = int(meta["n"]), int(meta["m"])
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != n * m:
        raise ParameterError(f"{path}: expected {n * m} rows, found {len(rows)}")

    def column(name, dtype=float):
        return np.array([dtype(r[name]) for r in rows]).reshape(n, m)

    ids = column("id", int)[:, 0]
    u = np.column_stack([column(name)[:, 0] for name in ("u0", "u1", "u2")])
    d = column("d") if "d" in rows[0] else None
    return Panel(params, int(meta["seed"]), u, column("n_y"), column("n_a"), column("c"),
                 column("a", int).astype(np.int8), column("y"), d, ids)


def dumps_distribution(dist: CwceDistribution) -> str:
    return json.dumps(dist.to_dict())


def loads_distribution(text: str) -> CwceDistribution:
    return distribution_from_dict(json.loads(text))


def dumps_fit(fit: RemlFit) -> str:
    return json.dumps(fit.to_dict(), indent=2)


def loads_fit(text: str) -> RemlFit:
    return RemlFit.from_dict(json.loads(text))


def write_rows(path, header, rows) -> Path:
    """CSV with floats in full-precision scientific notation."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17e}"
    return str(value)
