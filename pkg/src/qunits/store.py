"""Embedded relational store: schema, tuple ingestion and the value index.

The schema file is line oriented::

    table person
    col id int pk
    col name text
    fk cast.person_id -> person.id

Data files are tab separated with a header row naming the columns.
"""

from __future__ import annotations

import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from qunits.errors import IntegrityError, NotFoundError, ParseError

KINDS = ("integer", "text")
_KIND_ALIASES = {"int": "integer", "integer": "integer", "text": "text"}
_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it on every non-alphanumeric character."""
    return _TOKEN_RE.findall(str(text).lower())


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[Column, ...]
    primary_key: str

    def __post_init__(self) -> None:
        if self.primary_key not in self.column_names:
            raise IntegrityError(
                f"table {self.name}: primary key {self.primary_key!r} is not a column"
            )

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise NotFoundError(f"no column {self.name}.{name}")

    def index_of(self, name: str) -> int:
        return self.column_names.index(name)


@dataclass(frozen=True)
class ForeignKey:
    table: str
    column: str
    ref_table: str
    ref_column: str

    @property
    def source(self) -> str:
        return f"{self.table}.{self.column}"

    @property
    def target(self) -> str:
        return f"{self.ref_table}.{self.ref_column}"

    def touches(self, a: str, b: str) -> bool:
        return {self.table, self.ref_table} == {a, b}

    def __str__(self) -> str:
        return f"{self.source} -> {self.target}"


def split_element(element: str) -> tuple[str, str | None]:
    """``"movie.title"`` -> ``("movie", "title")``; a bare table gives ``(t, None)``."""
    table, _, column = element.partition(".")
    return table, (column or None)


@dataclass(frozen=True)
class Schema:
    tables: tuple[TableDef, ...]
    fk_edges: tuple[ForeignKey, ...]
    _by_name: Mapping[str, TableDef] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.tables:
            raise IntegrityError("schema has no tables")
        by_name: dict[str, TableDef] = {}
        for t in self.tables:
            if t.name in by_name:
                raise IntegrityError(f"duplicate table name {t.name!r}")
            if len(set(t.column_names)) != len(t.column_names):
                raise IntegrityError(f"duplicate column name in table {t.name!r}")
            by_name[t.name] = t
        object.__setattr__(self, "_by_name", MappingProxyType(by_name))
        for fk in self.fk_edges:
            for table, column in ((fk.table, fk.column), (fk.ref_table, fk.ref_column)):
                if table not in by_name:
                    raise IntegrityError(f"foreign key {fk}: unknown table {table!r}")
                if column not in by_name[table].column_names:
                    raise IntegrityError(f"foreign key {fk}: unknown column {table}.{column}")

    @property
    def table_names(self) -> tuple[str, ...]:
        return tuple(self._by_name)

    def table(self, name: str) -> TableDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise NotFoundError(f"no table {name!r}") from None

    def has_table(self, name: str) -> bool:
        return name in self._by_name

    def has_element(self, element: str) -> bool:
        table, column = split_element(element)
        if table not in self._by_name:
            return False
        return column is None or column in self._by_name[table].column_names

    def column(self, element: str) -> Column:
        table, column = split_element(element)
        if column is None:
            raise NotFoundError(f"{element!r} names a table, not a column")
        return self.table(table).column(column)

    def key_columns(self, table: str) -> set[str]:
        """Primary key plus every foreign-key column of ``table``."""
        keys = {self.table(table).primary_key}
        keys.update(fk.column for fk in self.fk_edges if fk.table == table)
        return keys

    def content_columns(self, table: str) -> list[str]:
        """Non-key columns in schema order; internal ids are never content."""
        keys = self.key_columns(table)
        return [c.name for c in self.table(table).columns if c.name not in keys]

    def text_columns(self, table: str) -> list[str]:
        t = self.table(table)
        return [c for c in self.content_columns(table) if t.column(c).kind == "text"]

    def fk_degree(self, table: str) -> int:
        return sum((fk.table == table) + (fk.ref_table == table) for fk in self.fk_edges)

    def neighbors(self, table: str) -> list[str]:
        out = set()
        for fk in self.fk_edges:
            if fk.table == table and fk.ref_table != table:
                out.add(fk.ref_table)
            elif fk.ref_table == table and fk.table != table:
                out.add(fk.table)
        return sorted(out)

    def edges_between(self, a: str, b: str) -> list[ForeignKey]:
        return [fk for fk in self.fk_edges if fk.touches(a, b)]

    def fk_path(self, start: str, goal: str, max_len: int | None = None) -> list[str] | None:
        """Shortest table path ``[start, ..., goal]`` over FK edges.

        Neighbors are expanded in name order, so among equal-length paths the
        lexicographically smallest one wins.
        """
        self.table(start)
        self.table(goal)
        prev: dict[str, str | None] = {start: None}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            if cur == goal:
                break
            for nxt in self.neighbors(cur):
                if nxt not in prev:
                    prev[nxt] = cur
                    queue.append(nxt)
        if goal not in prev:
            return None
        path = [goal]
        while prev[path[-1]] is not None:
            path.append(prev[path[-1]])  # type: ignore[arg-type]
        path.reverse()
        if max_len is not None and len(path) - 1 > max_len:
            return None
        return path


def load_schema(schema_text: str) -> Schema:
    """Parse the line-oriented schema format into a validated :class:`Schema`."""
    tables: list[TableDef] = []
    fks: list[ForeignKey] = []
    current: str | None = None
    columns: list[Column] = []
    pks: list[str] = []

    def close() -> None:
        if current is None:
            return
        if not pks:
            raise IntegrityError(f"table {current!r} has no primary key")
        if len(pks) > 1:
            raise IntegrityError(f"table {current!r} declares {len(pks)} primary keys")
        tables.append(TableDef(current, tuple(columns), pks[0]))

    for lineno, raw in enumerate(schema_text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        directive = parts[0]
        if directive == "table":
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: expected 'table <name>'")
            close()
            current, columns, pks = parts[1], [], []
        elif directive == "col":
            if current is None:
                raise ParseError(f"line {lineno}: column outside of a table")
            if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "pk"):
                raise ParseError(f"line {lineno}: expected 'col <name> <int|text> [pk]'")
            kind = _KIND_ALIASES.get(parts[2])
            if kind is None:
                raise ParseError(f"line {lineno}: unknown column kind {parts[2]!r}")
            columns.append(Column(parts[1], kind))
            if len(parts) == 4:
                pks.append(parts[1])
        elif directive == "fk":
            m = re.fullmatch(r"fk\s+(\w+)\.(\w+)\s*->\s*(\w+)\.(\w+)", line)
            if not m:
                raise ParseError(f"line {lineno}: expected 'fk <table.col> -> <table.col>'")
            fks.append(ForeignKey(*m.groups()))
        else:
            raise ParseError(f"line {lineno}: unknown directive {directive!r}")
    close()
    if not tables:
        raise ParseError("schema defines no tables")
    return Schema(tuple(tables), tuple(fks))


Row = tuple


def _convert(value: str, kind: str, where: str) -> int | str:
    if kind == "integer":
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"{where}: {value!r} is not an integer") from None
    return value


def ingest_table(schema: Schema, table: str, rows_text: str) -> list[Row]:
    """Parse one tab-separated data file into typed rows in schema column order.

    The header may list the columns in any order. Duplicate primary keys
    within the file are rejected here; cross-table checks happen in
    :func:`finalize`.
    """
    tdef = schema.table(table)
    lines = rows_text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError(f"{table}: missing header row")
    header = lines[0].split("\t")
    if sorted(header) != sorted(tdef.column_names):
        raise ParseError(
            f"{table}: header {header} does not match columns {list(tdef.column_names)}"
        )
    order = [header.index(c) for c in tdef.column_names]
    pk_pos = tdef.index_of(tdef.primary_key)
    seen: set = set()
    rows: list[Row] = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise ParseError(
                f"{table} line {lineno}: expected {len(header)} fields, got {len(fields)}"
            )
        row = tuple(
            _convert(fields[i], col.kind, f"{table} line {lineno}")
            for i, col in zip(order, tdef.columns)
        )
        if row[pk_pos] in seen:
            raise IntegrityError(
                f"{table} line {lineno}: duplicate primary key {row[pk_pos]!r}"
            )
        seen.add(row[pk_pos])
        rows.append(row)
    return rows


@dataclass(frozen=True)
class Dataset:
    """Finalized, immutable tuples for every table of ``schema``."""

    schema: Schema
    rows: Mapping[str, tuple[Row, ...]]

    def table_rows(self, table: str) -> tuple[Row, ...]:
        self.schema.table(table)
        return self.rows.get(table, ())

    def cardinality(self, table: str) -> int:
        return len(self.table_rows(table))

    @property
    def tuple_count(self) -> int:
        return sum(len(r) for r in self.rows.values())

    def column_values(self, element: str) -> list:
        table, column = split_element(element)
        i = self.schema.table(table).index_of(column or "")
        return [r[i] for r in self.table_rows(table)]

    def distinct_ratio(self, element: str) -> float:
        values = self.column_values(element)
        return len(set(values)) / len(values) if values else 0.0

    def row_dict(self, table: str, row: Row) -> dict:
        return dict(zip(self.schema.table(table).column_names, row))


def finalize(schema: Schema, fragments: Mapping[str, Sequence[Row]]) -> Dataset:
    """Assemble ingested tables and enforce keys and referential integrity."""
    rows: dict[str, tuple[Row, ...]] = {}
    for name in schema.table_names:
        tdef = schema.table(name)
        data = tuple(tuple(r) for r in fragments.get(name, ()))
        pk = tdef.index_of(tdef.primary_key)
        keys = [r[pk] for r in data]
        for r in data:
            if len(r) != len(tdef.columns):
                raise IntegrityError(f"{name}: row {r!r} has wrong arity")
        if len(set(keys)) != len(keys):
            raise IntegrityError(f"{name}: duplicate primary key values")
        rows[name] = data
    for unknown in set(fragments) - set(rows):
        raise NotFoundError(f"data for unknown table {unknown!r}")
    for fk in schema.fk_edges:
        src = schema.table(fk.table).index_of(fk.column)
        dst = schema.table(fk.ref_table).index_of(fk.ref_column)
        targets = {r[dst] for r in rows[fk.ref_table]}
        for r in rows[fk.table]:
            if r[src] not in targets:
                raise IntegrityError(f"dangling foreign key {fk}: value {r[src]!r}")
    return Dataset(schema, MappingProxyType(rows))


def load_dataset(schema: Schema, data_dir: str | Path) -> Dataset:
    """Read ``<table>.tsv`` for every schema table from ``data_dir``."""
    data_dir = Path(data_dir)
    fragments = {}
    for name in schema.table_names:
        path = data_dir / f"{name}.tsv"
        if not path.exists():
            raise NotFoundError(f"missing data file {path}")
        fragments[name] = ingest_table(schema, name, path.read_text(encoding="utf-8"))
    return finalize(schema, fragments)


@dataclass(frozen=True)
class ValueMatch:
    span: tuple[int, int]
    schema_element: str
    matched_text: str

    @property
    def is_value(self) -> bool:
        return "." in self.schema_element

    def __len__(self) -> int:
        return self.span[1] - self.span[0]


class ValueIndex:
    """Map lowercase token sequences to the schema elements they name.

    Every non-key column value and every table name is indexed. The elements
    stored under one key are ordered by preference: value columns first, the
    more distinct column first (entity names beat repeated labels), then the
    bare table name.
    """

    def __init__(self, entries: Mapping[tuple[str, ...], Sequence[str]]):
        self._entries = {k: tuple(v) for k, v in entries.items() if k}
        self.max_len = max((len(k) for k in self._entries), default=0)
        self.table_names = frozenset(
            e for els in self._entries.values() for e in els if "." not in e
        )
        self.columns = frozenset(
            e for els in self._entries.values() for e in els if "." in e
        )

    def __contains__(self, tokens: object) -> bool:
        return tuple(tokens) in self._entries  # type: ignore[arg-type]

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self) -> Iterable[tuple[str, ...]]:
        return self._entries.keys()

    def lookup(self, tokens: Sequence[str]) -> tuple[str, ...]:
        return self._entries.get(tuple(tokens), ())

    def candidates(self, tokens: Sequence[str]) -> list[tuple[ValueMatch, int]]:
        """Every indexed span of ``tokens`` with each element's preference rank."""
        out = []
        n = len(tokens)
        for i in range(n):
            for j in range(i + 1, min(n, i + self.max_len) + 1):
                for rank, element in enumerate(self.lookup(tokens[i:j])):
                    out.append((ValueMatch((i, j), element, " ".join(tokens[i:j])), rank))
        return out


def build_value_index(dataset: Dataset) -> ValueIndex:
    schema = dataset.schema
    values: dict[tuple[str, ...], set[str]] = defaultdict(set)
    ratio: dict[str, float] = {}
    for table in schema.table_names:
        for column in schema.content_columns(table):
            element = f"{table}.{column}"
            ratio[element] = dataset.distinct_ratio(element)
            for v in dataset.column_values(element):
                key = tuple(tokenize(v))
                if key:
                    values[key].add(element)
    entries: dict[tuple[str, ...], list[str]] = {
        k: sorted(els, key=lambda e: (-ratio[e], e)) for k, els in values.items()
    }
    for table in schema.table_names:
        key = tuple(tokenize(table))
        if key:
            entries.setdefault(key, []).append(table)
    return ValueIndex(entries)


def match_values(query: Sequence[str], index: ValueIndex) -> list[ValueMatch]:
    """Leftmost-longest, non-overlapping matches of ``query`` against ``index``."""
    tokens = list(query)
    out: list[ValueMatch] = []
    i = 0
    while i < len(tokens):
        for j in range(min(len(tokens), i + index.max_len), i, -1):
            elements = index.lookup(tokens[i:j])
            if elements:
                out.append(ValueMatch((i, j), elements[0], " ".join(tokens[i:j])))
                i = j
                break
        else:
            i += 1
    return out
