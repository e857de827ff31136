"""Render a sweep report as tables, figure series and the feature ranking.

All files are written deterministically: the same report always produces
byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

from .features import CATALOG, ComboCatalog
from .metrics import CorrelationReport
from .models import ModelKind
from .sweep import SweepReport

# column order of the rendered tables
TABLE_KINDS = (ModelKind.KNN, ModelKind.MLR, ModelKind.DTC, ModelKind.RF)
KIND_HEADERS = {ModelKind.KNN: "k-NN", ModelKind.MLR: "MLR", ModelKind.DTC: "DTC",
                ModelKind.RF: "RF"}

TABLES = (
    ("singles", 1, "Single features"),
    ("pairs", 2, "Two-feature combinations"),
    ("triples", 3, "Three-feature combinations"),
    ("quads", 4, "Four-feature combinations"),
    ("full", 5, "Five-feature combination"),
)

BEST_MARK = "**"


class IncompleteReportError(ValueError):
    pass


def format_pct(value: float | None) -> str:
    """Fraction in [0, 1] as a percentage with two decimals, rounding half up.

    The value is read through its shortest repr, so 0.65725 prints as 65.73.
    """
    if value is None:
        return "-"
    d = Decimal(repr(float(value))) * 100
    return str(d.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class TableRow:
    serial: int
    label: str
    cells: dict[ModelKind, tuple[float, float] | None]
    average: tuple[float, float] | None
    best: bool = False


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _csv_text(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def table_rows(report: SweepReport, size: int, *, strict: bool = True,
               catalog: ComboCatalog = CATALOG) -> list[TableRow]:
    """Rows for all combinations of ``size`` features, best average accuracy marked.

    In strict mode every cell must be present. Otherwise missing runs render
    as "-" and rows without any result are dropped.
    """
    have = {(r.serial, r.kind): r for r in report.results}
    rows = []
    for fs in catalog.of_size(size):
        cells = {}
        for kind in TABLE_KINDS:
            r = have.get((fs.serial, kind.value))
            cells[kind] = None if r is None else (r.accuracy, r.f1_weighted)
        avg = report.averages.get(fs.serial)
        if strict and (avg is None or any(c is None for c in cells.values())):
            raise IncompleteReportError(f"serial {fs.serial} has missing runs")
        if all(c is None for c in cells.values()):
            continue
        rows.append(TableRow(fs.serial, fs.label, cells, avg))
    scored = [r for r in rows if r.average is not None]
    if scored:
        # ties keep the lower serial
        top = max(scored, key=lambda r: (r.average[0], -r.serial))
        rows = [TableRow(r.serial, r.label, r.cells, r.average, r is top) for r in rows]
    return rows


def _header() -> list[str]:
    out = ["S.N.", "Features"]
    for kind in TABLE_KINDS:
        out += [f"{KIND_HEADERS[kind]} Acc %", f"{KIND_HEADERS[kind]} F1"]
    return out + ["Average Acc %", "Average F1"]


def _values(row: TableRow) -> list[str]:
    out = []
    for kind in TABLE_KINDS:
        c = row.cells[kind]
        out += [format_pct(None if c is None else c[0]), format_pct(None if c is None else c[1])]
    a = row.average
    return out + [format_pct(None if a is None else a[0]), format_pct(None if a is None else a[1])]


def render_markdown(title: str, rows: Sequence[TableRow]) -> str:
    head = _header()
    lines = [f"# {title}", "", "| " + " | ".join(head) + " |",
             "|" + "|".join("---" for _ in head) + "|"]
    for row in rows:
        cells = [str(row.serial), row.label] + _values(row)
        if row.best:
            cells = [f"{BEST_MARK}{c}{BEST_MARK}" for c in cells]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_csv(rows: Sequence[TableRow]) -> str:
    return _csv_text([_header() + ["best"]] + [
        [row.serial, row.label] + _values(row) + [int(row.best)] for row in rows])


def emit_tables(report: SweepReport, out_dir: str | Path, *, strict: bool = True,
                catalog: ComboCatalog = CATALOG) -> list[Path]:
    """Write tables/<name>.md and tables/<name>.csv for each subset size."""
    out = Path(out_dir) / "tables"
    written = []
    for name, size, title in TABLES:
        rows = table_rows(report, size, strict=strict, catalog=catalog)
        written.append(_write(out / f"{name}.md", render_markdown(title, rows)))
        written.append(_write(out / f"{name}.csv", render_csv(rows)))
    return written


def figure_rows(report: SweepReport, catalog: ComboCatalog = CATALOG) -> list[list]:
    """One row per catalog serial; serials without an average get empty cells."""
    rows = [["serial", "label", "avg_accuracy_pct", "avg_f1_pct"]]
    for fs in catalog:
        a = report.averages.get(fs.serial)
        rows.append([fs.serial, fs.label, "" if a is None else format_pct(a[0]),
                     "" if a is None else format_pct(a[1])])
    return rows


def _svg(width: int, height: int, body: list[str]) -> str:
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        *body, "</svg>", ""])


def render_fig2_svg(rows: list[list]) -> str:
    """Grouped bars of average accuracy and F1 per serial."""
    data = rows[1:]
    W, H, left, bottom, top = 900, 360, 50, 40, 30
    plot_h = H - bottom - top
    step = (W - left - 20) / max(len(data), 1)
    bw = step * 0.38
    body = []
    for tick in range(0, 101, 20):
        y = top + plot_h * (1 - tick / 100)
        body.append(f'<line x1="{left}" y1="{y:.1f}" x2="{W - 20}" y2="{y:.1f}" '
                    f'stroke="#ddd"/>')
        body.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{tick}</text>')
    for i, (serial, _, acc, f1) in enumerate(data):
        x0 = left + i * step + step * 0.1
        for j, (val, colour) in enumerate(((acc, "#3b6ea5"), (f1, "#e08a2c"))):
            if val == "":
                continue
            h = plot_h * float(val) / 100
            body.append(f'<rect x="{x0 + j * bw:.1f}" y="{top + plot_h - h:.1f}" '
                        f'width="{bw:.1f}" height="{h:.1f}" fill="{colour}"/>')
        body.append(f'<text x="{x0 + bw:.1f}" y="{H - bottom + 14}" '
                    f'text-anchor="middle">{serial}</text>')
    body.append(f'<text x="{left}" y="18">Average accuracy % (blue) and F1 % (orange) '
                f'per feature combination</text>')
    body.append(f'<text x="{W / 2:.0f}" y="{H - 6}" text-anchor="middle">serial</text>')
    return _svg(W, H, body)


def emit_figure_data(report: SweepReport, out_dir: str | Path, *, svg: bool = True,
                     catalog: ComboCatalog = CATALOG) -> list[Path]:
    out = Path(out_dir) / "figures"
    rows = figure_rows(report, catalog)
    written = [_write(out / "fig2.csv", _csv_text(rows))]
    if svg:
        written.append(_write(out / "fig2.svg", render_fig2_svg(rows)))
    return written


def ranking_rows(cr: CorrelationReport) -> list[list]:
    rows = [["feature", "r", "abs_r", "rank", "degenerate"]]
    for e in cr.ranked():
        rows.append([e.feature, repr(e.r), repr(e.abs_r), e.rank, int(e.degenerate)])
    return rows


def render_fig3_svg(cr: CorrelationReport) -> str:
    """Horizontal bars of |r| in rank order."""
    entries = cr.ranked()
    W, H, left, top, bar = 520, 60 + 34 * len(entries), 90, 36, 24
    span = W - left - 70
    body = [f'<text x="{left}" y="20">Feature ranking by |Pearson r| against SF</text>']
    for i, e in enumerate(entries):
        y = top + i * 34
        w = span * e.abs_r
        body.append(f'<text x="{left - 8}" y="{y + 16}" text-anchor="end">{e.feature}</text>')
        body.append(f'<rect x="{left}" y="{y}" width="{w:.1f}" height="{bar}" fill="#3b6ea5"/>')
        body.append(f'<text x="{left + w + 6:.1f}" y="{y + 16}">{e.r:+.4f}</text>')
    return _svg(W, H, body)


def emit_ranking(cr: CorrelationReport, out_dir: str | Path, *, svg: bool = True) -> list[Path]:
    """Write ranking.csv, figures/fig3.csv and (optionally) figures/fig3.svg."""
    out = Path(out_dir)
    text = _csv_text(ranking_rows(cr))
    written = [_write(out / "ranking.csv", text), _write(out / "figures" / "fig3.csv", text)]
    if svg:
        written.append(_write(out / "figures" / "fig3.svg", render_fig3_svg(cr)))
    return written


def emit_metadata(report: SweepReport, out_dir: str | Path,
                  effective_config: dict | None = None) -> Path:
    meta = dict(report.metadata)
    meta.pop("runtime", None)
    meta["complete"] = report.complete
    meta["n_runs"] = len(report.results)
    meta["failures"] = report.failures
    if effective_config is not None:
        meta["effective_config"] = effective_config
    return _write(Path(out_dir) / "metadata.json",
                  json.dumps(meta, sort_keys=True, indent=1) + "\n")


def emit_all(report: SweepReport, out_dir: str | Path, *, strict: bool = True,
             svg: bool = True, effective_config: dict | None = None) -> list[Path]:
    """Write the full bundle: tables, figure series, ranking and metadata."""
    written = emit_tables(report, out_dir, strict=strict)
    written += emit_figure_data(report, out_dir, svg=svg)
    if report.correlation is not None:
        written += emit_ranking(report.correlation, out_dir, svg=svg)
    written.append(emit_metadata(report, out_dir, effective_config))
    return written
