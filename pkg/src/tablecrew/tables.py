"""Structured table domain types plus bit-exact Markdown pipe-table round-tripping.

Workers exchange results as pipe tables inside workboard slots, so parsing and
rendering must be inverses at the cell level: ``parse_table(render_table(t))``
reproduces ``t`` exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import HeaderMismatch, NoTableFound

logger = logging.getLogger(__name__)

CELL_KINDS = frozenset({"text", "numeric", "url", "date", "categorical"})

#: Single missing-value sentinel (exact, case-sensitive).
NA = "NA"


def fold_name(name: str) -> str:
    """Case-fold and whitespace-collapse a column name for alignment."""
    return " ".join(name.casefold().split())


@dataclass(frozen=True)
class Query:
    """A natural-language table request."""

    text: str
    language: str = "en"
    requested_columns: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")
        if self.requested_columns is not None:
            folded = [fold_name(c) for c in self.requested_columns]
            if len(set(folded)) != len(folded):
                raise ValueError("requested columns must be unique after case-folding")


@dataclass(frozen=True)
class TableSchema:
    """Ordered column names with a kind per column; kinds drive comparator dispatch."""

    columns: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.columns:
            raise ValueError("schema needs at least one column")
        folded = [fold_name(name) for name, _ in self.columns]
        if len(set(folded)) != len(folded):
            raise ValueError("column names must be unique after case-fold and whitespace-collapse")
        for name, kind in self.columns:
            if kind not in CELL_KINDS:
                raise ValueError(f"unknown column kind {kind!r} for {name!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(kind for _, kind in self.columns)

    def kind_of(self, name: str) -> str:
        folded = fold_name(name)
        for col, kind in self.columns:
            if fold_name(col) == folded:
                return kind
        raise KeyError(name)

    @classmethod
    def of(cls, *cols: tuple[str, str]) -> "TableSchema":
        return cls(columns=tuple(cols))


@dataclass(frozen=True)
class Cell:
    """One extracted value. ``raw == "NA"`` means not found.

    raw must carry no leading/trailing whitespace: pipe-table padding is
    formatting, not content, so untrimmed values cannot round-trip.
    """

    raw: str
    kind: str

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        if self.raw != self.raw.strip():
            raise ValueError("cell raw value must be trimmed")

    @property
    def is_na(self) -> bool:
        return self.raw == NA


@dataclass(frozen=True)
class Table:
    """A schema plus rows of cells, in source order."""

    schema: TableSchema
    rows: tuple[tuple[Cell, ...], ...] = ()

    def __post_init__(self):
        width = len(self.schema.columns)
        kinds = self.schema.kinds
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, schema has {width} columns")
            for cell, kind in zip(row, kinds):
                if cell.kind != kind:
                    raise ValueError(f"row {i} cell kind {cell.kind!r} != column kind {kind!r}")

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def row_values(self, i: int) -> tuple[str, ...]:
        return tuple(c.raw for c in self.rows[i])

    @classmethod
    def from_values(cls, schema: TableSchema, rows: list[list[str]]) -> "Table":
        kinds = schema.kinds
        built = tuple(
            tuple(Cell(raw=v, kind=k) for v, k in zip(row, kinds)) for row in rows
        )
        return cls(schema=schema, rows=built)


@dataclass
class ValidationReport:
    """Report-only consistency check over a parsed table."""

    row_count: int
    column_coverage: dict[str, float]
    duplicate_rows: int
    warnings: list[str] = field(default_factory=list)


# -- cell escaping -----------------------------------------------------------
# "|" inside cells renders as "\|", newlines as the two-character sequence
# "\n"; backslash itself doubles so the inverse mapping is unambiguous.

def escape_cell(raw: str) -> str:
    return raw.replace("\\", "\\\\").replace("|", "\\|").replace("\n", "\\n")


def unescape_cell(escaped: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(escaped):
        ch = escaped[i]
        if ch == "\\" and i + 1 < len(escaped):
            nxt = escaped[i + 1]
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
            if nxt == "|":
                out.append("|")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def _split_row(line: str) -> list[str]:
    """Split one pipe-table line into escaped cell strings.

    Leading/trailing pipe delimiters are dropped; unescaped pipes separate
    cells; cell padding is trimmed.
    """
    body = line.strip()
    if body.startswith("|"):
        body = body[1:]
    if body.endswith("|") and not body.endswith("\\|"):
        body = body[:-1]
    cells: list[str] = []
    current: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            current.append(ch)
            current.append(body[i + 1])
            i += 2
            continue
        if ch == "|":
            cells.append("".join(current).strip())
            current = []
            i += 1
            continue
        current.append(ch)
        i += 1
    cells.append("".join(current).strip())
    return cells


def _is_separator(cells: list[str]) -> bool:
    if not cells:
        return False
    return all(
        c and set(c) <= set("-: ") and "-" in c
        for c in cells
    )


def find_pipe_table(text: str) -> list[str] | None:
    """Return the lines of the first pipe table block, or None.

    A table block is a run of consecutive lines containing "|" whose second
    line is a separator row.
    """
    lines = text.split("\n")
    i = 0
    while i < len(lines):
        if "|" in lines[i]:
            block = [lines[i]]
            j = i + 1
            while j < len(lines) and "|" in lines[j]:
                block.append(lines[j])
                j += 1
            if len(block) >= 2 and _is_separator(_split_row(block[1])):
                return block
            i = j
        else:
            i += 1
    return None


def parse_table(markdown_text: str, schema: TableSchema) -> Table:
    """Parse the first pipe table in *markdown_text* against *schema*.

    Header cells align to schema columns by case-folded, whitespace-collapsed
    name; unmatched predicted columns are dropped with a warning. Missing
    cells are filled with "NA"; rows keep document order.
    """
    block = find_pipe_table(markdown_text)
    if block is None:
        raise NoTableFound("no pipe-delimited table with a separator row found")

    header = [unescape_cell(c) for c in _split_row(block[0])]
    folded_schema = {fold_name(name): idx for idx, name in enumerate(schema.names)}
    # position in parsed row -> schema column index
    alignment: dict[int, int] = {}
    for pos, cell in enumerate(header):
        key = fold_name(cell)
        if key in folded_schema:
            alignment[pos] = folded_schema[key]
        else:
            logger.warning("dropping unmatched column %r", cell)
    if not alignment:
        raise HeaderMismatch(f"no header cell aligns to schema columns {schema.names}")

    kinds = schema.kinds
    width = len(schema.columns)
    rows: list[tuple[Cell, ...]] = []
    for line in block[2:]:
        raw_cells = [unescape_cell(c).strip() for c in _split_row(line)]
        values = [NA] * width
        for pos, value in enumerate(raw_cells):
            col = alignment.get(pos)
            if col is not None:
                values[col] = value
        rows.append(tuple(Cell(raw=v, kind=k) for v, k in zip(values, kinds)))
    return Table(schema=schema, rows=tuple(rows))


def render_table(table: Table) -> str:
    """Render *table* as canonical pipe-delimited Markdown (inverse of parse)."""
    names = table.schema.names
    lines = [
        "| " + " | ".join(escape_cell(n) for n in names) + " |",
        "| " + " | ".join("---" for _ in names) + " |",
    ]
    for row in table.rows:
        lines.append("| " + " | ".join(escape_cell(c.raw) for c in row) + " |")
    return "\n".join(lines)


def validate_against_schema(table: Table, schema: TableSchema) -> ValidationReport:
    """Report column coverage, row count, and exact-duplicate rows."""
    warnings: list[str] = []
    table_cols = {fold_name(n) for n in table.schema.names}
    for name in schema.names:
        if fold_name(name) not in table_cols:
            warnings.append(f"schema column {name!r} absent from table")

    coverage: dict[str, float] = {}
    n = table.row_count
    for idx, name in enumerate(table.schema.names):
        if n == 0:
            coverage[name] = 0.0
        else:
            filled = sum(1 for row in table.rows if not row[idx].is_na)
            coverage[name] = filled / n

    seen: set[tuple[str, ...]] = set()
    duplicates = 0
    for row in table.rows:
        key = tuple(c.raw.strip() for c in row)
        if key in seen:
            duplicates += 1
        else:
            seen.add(key)
    return ValidationReport(
        row_count=n,
        column_coverage=coverage,
        duplicate_rows=duplicates,
        warnings=warnings,
    )
