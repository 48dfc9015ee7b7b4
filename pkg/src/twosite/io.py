"""CSV, manifest and plot serialization.

All CSV files use LF line endings, a fixed column order and ``%.12g`` for
floats, so the same inputs always give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from .state import SnapshotRecord

TIMESERIES_HEADER = ("t", "site", "particle_count", "mass_frac", "sigma_hat", "rho_hat", "max_mass", "gelled")


class PlotError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if v is None:
        return ""
    x = float(v)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.12g" % x


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(format_table(header, rows))


def read_table(path) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        data = list(csv.reader(fh))
    if not data:
        raise ValueError(f"{path}: empty file")
    return data[0], data[1:]


# --- particle time series ------------------------------------------------------

def timeseries_rows(records: Sequence[SnapshotRecord]) -> List[tuple]:
    rows = []
    for r in records:
        for j in (0, 1):
            rows.append((r.t, j, r.particle_count[j], r.mass_frac[j], r.sigma_hat[j],
                         r.rho_hat[j], r.max_mass[j], r.gelled[j]))
    return rows


def write_timeseries_csv(records: Sequence[SnapshotRecord], path) -> None:
    write_table(path, TIMESERIES_HEADER, timeseries_rows(records))


def read_timeseries_csv(path) -> List[SnapshotRecord]:
    header, rows = read_table(path)
    if tuple(header) != TIMESERIES_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    if len(rows) % 2:
        raise ValueError(f"{path}: expected two rows (site 0, site 1) per snapshot")
    out = []
    for a, b in zip(rows[0::2], rows[1::2]):
        if a[1] != "0" or b[1] != "1" or a[0] != b[0]:
            raise ValueError(f"{path}: rows for t={a[0]} are not a site 0 / site 1 pair")
        pair = (a, b)
        out.append(SnapshotRecord(
            t=float(a[0]),
            particle_count=tuple(int(r[2]) for r in pair),
            mass_frac=tuple(float(r[3]) for r in pair),
            sigma_hat=tuple(float(r[4]) for r in pair),
            rho_hat=tuple(float(r[5]) for r in pair),
            max_mass=tuple(int(r[6]) for r in pair),
            gelled=tuple(r[7] == "1" for r in pair),
        ))
    return out


# --- flat key = value files -------------------------------------------------------

def parse_kv_text(text: str, source: str = "<config>") -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        key = key.replace("-", "_")
        if key in out:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv_file(path) -> Dict[str, str]:
    return parse_kv_text(Path(path).read_text(encoding="utf-8"), str(path))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, fields: Mapping[str, object], params: Mapping[str, object],
                   outputs: Sequence) -> None:
    """Sidecar describing a run: fixed fields, ``param.*`` entries and output digests."""
    lines = [f"{k} = {v}" for k, v in fields.items()]
    lines += [f"param.{k} = {_kv_value(v)}" for k, v in sorted(params.items())]
    for p in outputs:
        lines.append(f"output.{Path(p).name} = sha256:{sha256_file(p)}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _kv_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_kv_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --- plots --------------------------------------------------------------------

def emit_plot(csv_path, columns: Sequence[str], out_path, x: str = "t", logy: bool = False,
              title: str = "") -> None:
    """Line chart of ``columns`` against ``x`` as a self-contained SVG.

    A ``site`` column, when present, splits every column into one series per
    site.  Output bytes depend only on the CSV contents and the arguments.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    header, rows = read_table(csv_path)
    missing = [c for c in (x, *columns) if c not in header]
    if missing:
        raise PlotError(f"{csv_path}: missing column(s) {', '.join(missing)}; available: {', '.join(header)}")
    if not columns:
        raise PlotError("no columns to plot")
    ix = header.index(x)
    site_col = header.index("site") if "site" in header and x != "site" else None
    groups: Dict[str, List[List[str]]] = {}
    for r in rows:
        groups.setdefault(r[site_col] if site_col is not None else "", []).append(r)

    series = []
    for col in columns:
        ic = header.index(col)
        for g, grows in sorted(groups.items()):
            xs = [float(r[ix]) for r in grows]
            ys = [float(r[ic]) for r in grows]
            if logy and any(not v > 0 for v in ys):
                raise PlotError(f"column {col!r} has nonpositive values; cannot use a log scale")
            label = col if g == "" else f"{col} (site {g})"
            series.append((label, xs, ys))

    with matplotlib.rc_context({"svg.hashsalt": "twosite", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for label, xs, ys in series:
            ax.plot(xs, ys, label=label, linewidth=1.2)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(x)
        if title:
            ax.set_title(title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
