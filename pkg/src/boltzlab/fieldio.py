"""Field and series file formats.

Fields are stored as uncompressed NPZ with three arrays:
  values      float64, shape (n_cells, n_per_axis^3), C-order; the velocity
              index is flattened as (ix * n + iy) * n + iz over the midpoint
              lattice v_i = -v_max + (i + 1/2) dv
  vgrid_meta  [v_max, n_per_axis]
  sgrid_meta  [dimension, period, n_cells]
  provenance  JSON string (resolved run configuration or caller-supplied)

Diagnostics series are CSV with two leading comment lines ("# provenance:"
and "# columns:"), a header row, then one row of %.17g values per report
time; both are produced by the evolve module and parsed back here.
"""

from __future__ import annotations

import json

import numpy as np

from .phase import DistributionField, SpatialGrid, VelocityGrid


def save_field(path, field, provenance=None):
    np.savez(
        path,
        values=field.values,
        vgrid_meta=np.array([field.vgrid.v_max, float(field.vgrid.n_per_axis)]),
        sgrid_meta=np.array(
            [float(field.sgrid.dimension), field.sgrid.period, float(field.sgrid.n_cells)]
        ),
        provenance=np.bytes_(json.dumps(provenance or {}, sort_keys=True).encode()),
    )


def load_field(path):
    with np.load(path) as data:
        vm = data["vgrid_meta"]
        sm = data["sgrid_meta"]
        vgrid = VelocityGrid(v_max=float(vm[0]), n_per_axis=int(vm[1]))
        sgrid = SpatialGrid(
            dimension=int(sm[0]), period=float(sm[1]), n_cells=int(sm[2])
        )
        field = DistributionField(vgrid, sgrid, np.array(data["values"]))
        provenance = json.loads(bytes(data["provenance"]).decode())
    return field, provenance


def read_series_csv(path):
    """Parse a diagnostics CSV back into (columns, rows, provenance)."""
    provenance = None
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# provenance:"):
                provenance = json.loads(line[len("# provenance:") :])
                continue
            if line.startswith("#"):
                continue
            cells = line.split(",")
            if columns is None:
                columns = cells
                continue
            rows.append([float(x) for x in cells])
    if columns is None or not rows:
        raise ValueError(f"series file {path} has no data rows")
    return columns, np.array(rows), provenance


def series_column(columns, rows, name):
    try:
        i = columns.index(name)
    except ValueError as exc:
        raise ValueError(f"series has no column {name!r}") from exc
    return rows[:, i]


def write_cell_moments_csv(path, field, provenance=None):
    """Per-cell density/momentum/energy moments of a field, one row per cell."""
    from .phase import cell_moments

    m = cell_moments(field)
    cols = ["x", "rho", "jx", "jy", "jz", "e"]
    x = field.sgrid.axis
    with open(path, "w") as fh:
        if provenance is not None:
            fh.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")
        fh.write("# columns: " + ",".join(cols) + "\n")
        fh.write(",".join(cols) + "\n")
        for c in range(field.sgrid.n_cells):
            vals = [x[c], m["rho"][c], m["jx"][c], m["jy"][c], m["jz"][c], m["e"][c]]
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
