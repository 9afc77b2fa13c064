"""Fold event traces into cycle, utilization, and energy reports.

The executor and the CAM model emit a flat stream of events; this module
turns that stream into per-layer and total numbers and provides the analytic
MAC-array baseline the CAM numbers are compared against.

Accounting notes:

* ``search_cycles`` is the compute metric (one search interrogates every
  stored row at once, so a layer's compute time scales with search count).
  ``write_cycles`` tracks loading. ``cycles`` is the all-in sum including
  transform/post/dot cycle rates, which default to 0: post-processing is
  digital logic assumed pipelined behind the CAM, and the rates exist as
  knobs for anyone modelling it otherwise.
* Utilization has two accountings. Exact mode averages valid_rows/rows over
  tile events. Paper mode reports min(stored, rows)/rows per layer, the
  occupancy of the first tile, which is how headline utilization figures are
  usually quoted.
* Energy rates are placeholders with the right shape (search energy grows
  strictly with both row count and word width); they are meant to be
  overridden from a cost-table file, see :meth:`CostTable.from_file`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

__all__ = [
    "CostModelError",
    "CostReport",
    "CostTable",
    "CostTableEntry",
    "CostTrace",
    "LayerCost",
    "ROW_CHOICES",
    "TraceEvent",
    "WORD_CHOICES",
    "compare",
    "fold_trace",
    "report_to_csv",
    "systolic_cycles",
]

ROW_CHOICES = (64, 128, 256, 512)
WORD_CHOICES = (256, 512, 768, 1024)


class CostModelError(ValueError):
    """Raised for malformed tables, unknown events, or missing entries."""


@dataclass(frozen=True)
class TraceEvent:
    """One accounting event.

    kind: 'reconfigure' | 'write' | 'search' | 'tile' | 'layer_exec'
          | 'transform' | 'dot' | 'post'
    count groups identical events (m searches against the same occupancy).
    """

    kind: str
    count: int = 1
    rows: int = 0          # CAM row capacity in play
    word_bits: int = 0     # active word width (search/write/transform)
    valid_rows: int = 0    # occupied rows (search/tile)
    op: str = ""           # post-processing op name
    layer: int = -1        # model layer index the event belongs to


class CostTrace:
    """Append-only event log with a current-layer stamp."""

    def __init__(self, events: list[TraceEvent] | None = None) -> None:
        self.events: list[TraceEvent] = list(events) if events else []
        self._layer = -1

    def set_layer(self, layer: int) -> None:
        self._layer = layer

    def emit(self, kind: str, **fields) -> None:
        fields.setdefault("layer", self._layer)
        self.events.append(TraceEvent(kind=kind, **fields))

    def extend(self, other: "CostTrace") -> None:
        self.events.extend(other.events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __add__(self, other: "CostTrace") -> "CostTrace":
        return CostTrace(self.events + other.events)


# ---------------------------------------------------------------------------
# cost table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostTableEntry:
    search_energy_pj: float
    write_energy_pj: float        # per row write
    # a search is a full match-line evaluation (precharge, key broadcast,
    # discharge, sense) while a write touches a single row, so the default
    # latency ratio is 4:1
    search_cycles: float = 4.0
    write_cycles_per_row: float = 1.0


_GRID_FIELDS = (
    "search_energy_pj",
    "write_energy_pj",
    "search_cycles",
    "write_cycles_per_row",
)
_GLOBAL_FIELDS = (
    "dot_energy_pj",
    "dot_cycles",
    "transform_base_energy_pj",
    "transform_energy_pj_per_bit",
    "transform_cycles",
    "post_energy_pj_per_element",
    "post_cycles_per_element",
)


@dataclass(frozen=True)
class CostTable:
    """Per-(rows, word_bits) CAM costs plus flat post-processing rates."""

    entries: dict[tuple[int, int], CostTableEntry]
    dot_energy_pj: float = 0.8
    dot_cycles: float = 0.0
    transform_base_energy_pj: float = 2.0
    transform_energy_pj_per_bit: float = 0.004
    transform_cycles: float = 0.0
    post_energy_pj_per_element: float = 0.05
    post_cycles_per_element: float = 0.0

    @classmethod
    def default(cls) -> "CostTable":
        # Placeholder magnitudes: a search activates every cell once, so its
        # energy grows with rows and word width; a row write touches one
        # row's cells. Override from a file for calibrated numbers.
        entries = {
            (rows, word): CostTableEntry(
                search_energy_pj=0.02 * rows * (word / 256.0),
                write_energy_pj=0.005 * word,
            )
            for rows in ROW_CHOICES
            for word in WORD_CHOICES
        }
        return cls(entries=entries)

    @classmethod
    def from_file(cls, path: str, base: "CostTable | None" = None) -> "CostTable":
        """Parse ``key = value`` overrides on top of ``base`` (default table).

        Grid keys are ``<field>.<rows>.<word>``; flat rates use the bare
        field name. Unknown keys and malformed values raise CostModelError.
        """
        table = cls.default() if base is None else base
        entries = dict(table.entries)
        globals_: dict[str, float] = {}
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise CostModelError(f"cannot read cost table: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise CostModelError(f"{path}:{lineno}: expected key = value")
            key, _, raw = text.partition("=")
            key = key.strip()
            try:
                value = float(raw.strip())
            except ValueError as exc:
                raise CostModelError(f"{path}:{lineno}: bad number {raw!r}") from exc
            parts = key.split(".")
            if len(parts) == 1:
                if key not in _GLOBAL_FIELDS:
                    raise CostModelError(f"{path}:{lineno}: unknown key {key!r}")
                globals_[key] = value
            elif len(parts) == 3 and parts[0] in _GRID_FIELDS:
                try:
                    rows, word = int(parts[1]), int(parts[2])
                except ValueError as exc:
                    raise CostModelError(f"{path}:{lineno}: bad grid key {key!r}") from exc
                if (rows, word) not in entries:
                    raise CostModelError(
                        f"{path}:{lineno}: no table entry for rows={rows} word={word}"
                    )
                entries[(rows, word)] = replace(entries[(rows, word)], **{parts[0]: value})
            else:
                raise CostModelError(f"{path}:{lineno}: unknown key {key!r}")
        table = cls(entries=entries, **{
            name: globals_.get(name, getattr(table, name)) for name in _GLOBAL_FIELDS
        })
        table.validate_shape()
        return table

    def lookup(self, rows: int, word_bits: int) -> CostTableEntry:
        try:
            return self.entries[(rows, word_bits)]
        except KeyError:
            raise CostModelError(
                f"cost table has no entry for rows={rows}, word_bits={word_bits}"
            ) from None

    def validate_shape(self) -> None:
        """Search energy must strictly increase in rows and in word width."""
        for rows in ROW_CHOICES:
            line = [
                self.entries[(rows, w)].search_energy_pj
                for w in WORD_CHOICES
                if (rows, w) in self.entries
            ]
            if any(b <= a for a, b in zip(line, line[1:])):
                raise CostModelError(
                    f"search energy not strictly increasing in word_bits at rows={rows}"
                )
        for word in WORD_CHOICES:
            line = [
                self.entries[(r, word)].search_energy_pj
                for r in ROW_CHOICES
                if (r, word) in self.entries
            ]
            if any(b <= a for a, b in zip(line, line[1:])):
                raise CostModelError(
                    f"search energy not strictly increasing in rows at word_bits={word}"
                )


# ---------------------------------------------------------------------------
# folding
# ---------------------------------------------------------------------------

@dataclass
class LayerCost:
    layer: int
    rows: int = 0
    word_bits: int = 0
    searches: int = 0
    writes: int = 0
    transforms: int = 0
    dots: int = 0
    post_elements: int = 0
    tiles: int = 0
    executions: int = 0
    search_cycles: float = 0.0
    write_cycles: float = 0.0
    cycles: float = 0.0
    energy_pj: float = 0.0
    utilization: float = 0.0         # mean valid/rows over tile events
    utilization_paper: float = 0.0   # min(stored per execution, rows)/rows
    _tile_fill: float = field(default=0.0, repr=False)


@dataclass
class CostReport:
    layers: list[LayerCost]
    searches: int = 0
    writes: int = 0
    transforms: int = 0
    dots: int = 0
    post_elements: int = 0
    tiles: int = 0
    search_cycles: float = 0.0
    write_cycles: float = 0.0
    cycles: float = 0.0
    energy_pj: float = 0.0
    utilization: float = 0.0
    utilization_paper: float = 0.0

    @property
    def energy_j(self) -> float:
        return self.energy_pj * 1e-12

    def layer_by_index(self, layer: int) -> LayerCost:
        for lc in self.layers:
            if lc.layer == layer:
                return lc
        raise CostModelError(f"report has no layer {layer}")


_EVENT_KINDS = {
    "reconfigure", "write", "search", "tile", "layer_exec", "transform",
    "dot", "post",
}


def fold_trace(trace: CostTrace, table: CostTable | None = None) -> CostReport:
    """Reduce an event stream to a :class:`CostReport`.

    Folding is linear: fold(a + b) equals fold(a) + fold(b) fieldwise for
    every additive field. An empty trace folds to an all-zero report.
    """
    table = table or CostTable.default()
    per_layer: dict[int, LayerCost] = {}

    def cell(layer: int) -> LayerCost:
        if layer not in per_layer:
            per_layer[layer] = LayerCost(layer=layer)
        return per_layer[layer]

    for ev in trace:
        if ev.kind not in _EVENT_KINDS:
            raise CostModelError(f"unknown event kind {ev.kind!r}")
        lc = cell(ev.layer)
        if ev.kind == "reconfigure":
            lc.word_bits = ev.word_bits
            lc.rows = ev.rows
        elif ev.kind == "layer_exec":
            lc.executions += ev.count
        elif ev.kind == "search":
            entry = table.lookup(ev.rows, ev.word_bits)
            lc.searches += ev.count
            lc.search_cycles += ev.count * entry.search_cycles
            lc.energy_pj += ev.count * entry.search_energy_pj
            lc.rows = ev.rows
            lc.word_bits = ev.word_bits
        elif ev.kind == "write":
            entry = table.lookup(ev.rows, ev.word_bits)
            lc.writes += ev.count
            lc.write_cycles += ev.count * entry.write_cycles_per_row
            lc.energy_pj += ev.count * entry.write_energy_pj
        elif ev.kind == "tile":
            lc.tiles += ev.count
            lc._tile_fill += ev.count * (ev.valid_rows / ev.rows)
        elif ev.kind == "transform":
            lc.transforms += ev.count
            lc.energy_pj += ev.count * (
                table.transform_base_energy_pj
                + table.transform_energy_pj_per_bit * ev.word_bits
            )
            lc.cycles += ev.count * table.transform_cycles
        elif ev.kind == "dot":
            lc.dots += ev.count
            lc.energy_pj += ev.count * table.dot_energy_pj
            lc.cycles += ev.count * table.dot_cycles
        elif ev.kind == "post":
            lc.post_elements += ev.count
            lc.energy_pj += ev.count * table.post_energy_pj_per_element
            lc.cycles += ev.count * table.post_cycles_per_element

    layers = [per_layer[k] for k in sorted(per_layer)]
    report = CostReport(layers=layers)
    total_fill = 0.0
    for lc in layers:
        lc.cycles += lc.search_cycles + lc.write_cycles
        lc.utilization = lc._tile_fill / lc.tiles if lc.tiles else 0.0
        if lc.executions and lc.rows:
            stored_per_exec = lc.writes / lc.executions
            lc.utilization_paper = min(1.0, stored_per_exec / lc.rows)
        report.searches += lc.searches
        report.writes += lc.writes
        report.transforms += lc.transforms
        report.dots += lc.dots
        report.post_elements += lc.post_elements
        report.tiles += lc.tiles
        report.search_cycles += lc.search_cycles
        report.write_cycles += lc.write_cycles
        report.cycles += lc.cycles
        report.energy_pj += lc.energy_pj
        total_fill += lc._tile_fill
    report.utilization = total_fill / report.tiles if report.tiles else 0.0
    if layers:
        weights = [lc.executions * lc.rows for lc in layers if lc.rows]
        stored = [lc.utilization_paper * lc.rows * lc.executions for lc in layers if lc.rows]
        if weights and sum(weights):
            report.utilization_paper = sum(stored) / sum(weights)
    return report


# ---------------------------------------------------------------------------
# analytic MAC-array baseline
# ---------------------------------------------------------------------------

def systolic_cycles(
    patches: int,
    kernels: int,
    depth: int,
    array_rows: int = 14,
    array_cols: int = 12,
) -> int:
    """Cycles for a patches x kernels matmul of dot depth ``depth`` on an
    output-stationary MAC array (default 14 x 12).

    Each (array_rows x array_cols) output tile needs depth cycles of
    accumulation plus (rows + cols - 2) fill/drain skew.
    """
    if patches < 1 or kernels < 1 or depth < 1:
        raise CostModelError("geometry counts must be positive")
    if array_rows < 1 or array_cols < 1:
        raise CostModelError("array dimensions must be positive")
    tiles = math.ceil(kernels / array_cols) * math.ceil(patches / array_rows)
    return tiles * (depth + array_rows + array_cols - 2)


@dataclass(frozen=True)
class LayerComparison:
    layer: int
    cam_cycles: float          # search + write
    baseline_cycles: int
    speedup: float


@dataclass(frozen=True)
class ComparisonReport:
    layers: tuple[LayerComparison, ...]
    cam_cycles: float
    baseline_cycles: int
    speedup: float


def compare(report: CostReport, baseline: dict[int, int]) -> ComparisonReport:
    """Pair a CAM report with per-layer baseline cycles.

    ``baseline`` maps layer index to MAC-array cycles; every baseline layer
    must appear in the report. The headline ratio divides baseline cycles by
    CAM search+write cycles (loading included, post-processing pipelined).
    """
    rows = []
    cam_total = 0.0
    base_total = 0
    for layer, base_cycles in sorted(baseline.items()):
        lc = report.layer_by_index(layer)
        cam = lc.search_cycles + lc.write_cycles
        rows.append(LayerComparison(
            layer=layer,
            cam_cycles=cam,
            baseline_cycles=base_cycles,
            speedup=base_cycles / cam if cam else math.inf,
        ))
        cam_total += cam
        base_total += base_cycles
    return ComparisonReport(
        layers=tuple(rows),
        cam_cycles=cam_total,
        baseline_cycles=base_total,
        speedup=base_total / cam_total if cam_total else math.inf,
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "layer", "dataflow", "rows", "word_bits", "searches", "writes", "cycles",
    "utilization", "energy_pj", "baseline_cycles",
    # extensions past the fixed prefix:
    "search_cycles", "write_cycles", "utilization_paper", "transforms",
    "dots", "tiles",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_to_csv(
    report: CostReport,
    dataflow: str,
    baseline: dict[int, int] | None = None,
) -> str:
    """Render a report as CSV text with a trailing total row."""
    baseline = baseline or {}
    lines = [",".join(CSV_COLUMNS)]
    for lc in report.layers:
        lines.append(",".join(_fmt(v) for v in (
            lc.layer, dataflow, lc.rows, lc.word_bits, lc.searches, lc.writes,
            lc.cycles, lc.utilization, lc.energy_pj,
            baseline.get(lc.layer, 0), lc.search_cycles, lc.write_cycles,
            lc.utilization_paper, lc.transforms, lc.dots, lc.tiles,
        )))
    lines.append(",".join(_fmt(v) for v in (
        "total", dataflow, "", "", report.searches, report.writes,
        report.cycles, report.utilization, report.energy_pj,
        sum(baseline.values()), report.search_cycles, report.write_cycles,
        report.utilization_paper, report.transforms, report.dots, report.tiles,
    )))
    return "\n".join(lines) + "\n"
