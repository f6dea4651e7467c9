"""Deterministic report files: JSON, CSV and SVG line plots."""

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np


class ReportError(OSError):
    pass


def fmt_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def plain(obj):
    """Convert numpy values, dataclasses and tuples to JSON-ready builtins."""
    if hasattr(obj, "as_dict"):
        return plain(obj.as_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return plain({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        # JSON has no literal for non-finite numbers; store them as strings
        return fmt_float(obj) if math.isfinite(obj) else json.dumps(fmt_float(obj))
    return json.dumps(str(obj))


def to_json(results, indent=2):
    """Sorted keys, floats with 17 significant digits."""
    return _emit(plain(results), indent, 0) + "\n"


@dataclass
class Table:
    """Rows of a CSV report; ``meta`` is written as leading ``#`` comment lines."""

    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, **row):
        self.rows.append(row)


def to_csv(table):
    buf = io.StringIO()
    for key in sorted(table.meta):
        val = table.meta[key]
        text = val if isinstance(val, str) else to_json(val, indent=0).replace("\n", "")
        buf.write(f"# {key}: {text}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        out = []
        for c in table.columns:
            v = plain(row.get(c, ""))
            out.append(fmt_float(v) if isinstance(v, float) else v)
        w.writerow(out)
    return buf.getvalue()


@dataclass
class Series:
    label: str
    x: list
    y: list
    style: str = "line"  # line | scatter


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    logx: bool = False
    logy: bool = False
    meta: dict = field(default_factory=dict)


def to_svg(plot):
    """Render ``plot`` with matplotlib; identical input gives identical bytes."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "rmplate", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for s in plot.series:
            if s.style == "scatter":
                ax.plot(s.x, s.y, "o", label=s.label)
            else:
                ax.plot(s.x, s.y, "-", label=s.label)
        ax.set_xlabel(plot.xlabel)
        ax.set_ylabel(plot.ylabel)
        ax.set_title(plot.title)
        if plot.logx:
            ax.set_xscale("log")
        if plot.logy:
            ax.set_yscale("log")
        if plot.series:
            ax.legend()
        buf = io.StringIO()
        desc = to_json(plot.meta, indent=0).replace("\n", "") if plot.meta else None
        fig.savefig(buf, format="svg", metadata={"Date": None, "Description": desc})
        plt.close(fig)
    return buf.getvalue()


def tau_trend_plot(trend, meta=None):
    """tau_emp against 1/|log R3| with the least-squares line through 0."""
    x = [r[2] for r in trend.rows]
    y = [r[1] for r in trend.rows]
    xs = [0.0, max(x) if x else 1.0]
    return Plot(
        "three-spheres exponent trend",
        "1/|log R3|",
        "tau_emp",
        [Series("tau_emp", x, y, "scatter"), Series(f"fit slope {trend.slope:.4g}", xs, [trend.slope * v for v in xs])],
        meta=meta or {},
    )


def write_report(results, fmt, path):
    """Write ``results`` (dict, Table or Plot) as ``fmt`` in {json, csv, svg}."""
    if fmt == "json":
        text = to_json(results)
    elif fmt == "csv":
        if not isinstance(results, Table):
            raise TypeError("csv output needs a Table")
        text = to_csv(results)
    elif fmt == "svg":
        if not isinstance(results, Plot):
            raise TypeError("svg output needs a Plot")
        text = to_svg(results)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path
