"""Qunit definitions, their validation, instantiation and rendering.

A definition pairs a base expression (a conjunctive query over FK equi-joins
with one parameterized text anchor) with a conversion expression (a label
plus ordered ``foreach`` groups). Definition files look like::

    qunit cast utility 1.0
    from person cast movie
    join cast.movie_id = movie.id
    join cast.person_id = person.id
    anchor movie.title
    label cast
    foreach person: person.name
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from qunits.errors import IntegrityError, NotFoundError, ParseError
from qunits.store import Dataset, Row, Schema, split_element, tokenize

PROVENANCES = ("manual", "schema_data", "query_log", "external_evidence")


class DefinitionError(IntegrityError):
    """A qunit definition does not fit the schema it is checked against."""


@dataclass(frozen=True)
class Join:
    left: str
    right: str

    def tables(self) -> tuple[str, str]:
        return split_element(self.left)[0], split_element(self.right)[0]

    def __str__(self) -> str:
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class BaseExpression:
    tables: tuple[str, ...]
    joins: tuple[Join, ...]
    anchors: tuple[str, ...]

    @property
    def anchor(self) -> str:
        if len(self.anchors) != 1:
            raise DefinitionError(f"expected exactly one anchor, found {len(self.anchors)}")
        return self.anchors[0]

    @property
    def anchor_table(self) -> str:
        return split_element(self.anchor)[0]


@dataclass(frozen=True)
class ForEachGroup:
    name: str
    columns: tuple[str, ...]


@dataclass(frozen=True)
class ConversionExpression:
    label: str
    groups: tuple[ForEachGroup, ...] = ()


@dataclass(frozen=True)
class QunitDefinition:
    id: str
    base: BaseExpression
    conversion: ConversionExpression
    utility: float = 1.0
    provenance: str = "manual"

    def elements(self) -> frozenset[str]:
        """Anchor column, its table, joined tables and projected columns."""
        out = {self.base.anchor, self.base.anchor_table, *self.base.tables}
        for g in self.conversion.groups:
            out.update(g.columns)
        return frozenset(out)


def validate_definition(defn: QunitDefinition, schema: Schema) -> QunitDefinition:
    """Check ``defn`` against ``schema``; returns it unchanged when valid."""
    base = defn.base
    where = f"qunit {defn.id}"
    if not defn.id or any(ch.isspace() for ch in defn.id):
        raise DefinitionError(f"{where}: invalid identifier")
    if not (defn.utility >= 0):
        raise DefinitionError(f"{where}: utility must be >= 0")
    if defn.provenance not in PROVENANCES:
        raise DefinitionError(f"{where}: unknown provenance {defn.provenance!r}")
    if not base.tables:
        raise DefinitionError(f"{where}: no tables")
    if len(set(base.tables)) != len(base.tables):
        raise DefinitionError(f"{where}: a table is listed twice")
    for t in base.tables:
        if not schema.has_table(t):
            raise DefinitionError(f"{where}: unknown table {t!r}")
    tables = set(base.tables)

    def check_column(element: str, what: str) -> None:
        table, column = split_element(element)
        if column is None or not schema.has_element(element):
            raise DefinitionError(f"{where}: unknown column {element!r} in {what}")
        if table not in tables:
            raise DefinitionError(f"{where}: {what} column {element} is not in a base table")

    adjacency: dict[str, set[str]] = defaultdict(set)
    for j in base.joins:
        check_column(j.left, "join")
        check_column(j.right, "join")
        if not _is_fk_join(schema, j):
            raise DefinitionError(f"{where}: join {j} is not a foreign-key edge")
        a, b = j.tables()
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = {base.tables[0]}
    queue = deque(seen)
    while queue:
        for nxt in adjacency[queue.popleft()] - seen:
            seen.add(nxt)
            queue.append(nxt)
    if seen != tables:
        raise DefinitionError(f"{where}: join graph is disconnected ({sorted(tables - seen)})")

    if len(base.anchors) != 1:
        raise DefinitionError(f"{where}: expected exactly one anchor, found {len(base.anchors)}")
    check_column(base.anchor, "anchor")
    if schema.column(base.anchor).kind != "text":
        raise DefinitionError(f"{where}: anchor {base.anchor} is not a text column")

    if not defn.conversion.label:
        raise DefinitionError(f"{where}: conversion has no label")
    for g in defn.conversion.groups:
        if not g.columns:
            raise DefinitionError(f"{where}: foreach {g.name!r} projects nothing")
        for c in g.columns:
            check_column(c, f"foreach {g.name}")
    return defn


def _is_fk_join(schema: Schema, join: Join) -> bool:
    pair = {join.left, join.right}
    return any({fk.source, fk.target} == pair for fk in schema.fk_edges)


# -- evaluation ---------------------------------------------------------------


def _column_getter(schema: Schema, element: str):
    table, column = split_element(element)
    i = schema.table(table).index_of(column or "")
    return table, i


def evaluate_base(
    base: BaseExpression, dataset: Dataset, binding: str | None = None
) -> list[dict[str, Row]]:
    """Evaluate ``base`` with hash joins, optionally binding the anchor.

    Returns one ``{table: row}`` mapping per joined tuple, sorted by the
    primary keys of the joined tables in ``base.tables`` order.
    """
    schema = dataset.schema
    anchor_table, anchor_pos = _column_getter(schema, base.anchor)
    seed = [
        r for r in dataset.table_rows(anchor_table)
        if binding is None or r[anchor_pos] == binding
    ]
    partial: list[dict[str, Row]] = [{anchor_table: r} for r in seed]
    joined = {anchor_table}
    pending = list(base.joins)
    # Grow a spanning tree of joins from the anchor table; leftover joins
    # (cycles) become filters.
    while len(joined) < len(base.tables):
        for j in pending:
            a, b = j.tables()
            if (a in joined) != (b in joined):
                break
        else:  # pragma: no cover - excluded by validation
            raise DefinitionError("join graph is disconnected")
        pending.remove(j)
        known, new = (j.left, j.right) if a in joined else (j.right, j.left)
        k_table, k_pos = _column_getter(schema, known)
        n_table, n_pos = _column_getter(schema, new)
        buckets: dict[object, list[Row]] = defaultdict(list)
        for r in dataset.table_rows(n_table):
            buckets[r[n_pos]].append(r)
        partial = [
            {**combo, n_table: r}
            for combo in partial
            for r in buckets.get(combo[k_table][k_pos], ())
        ]
        joined.add(n_table)
    for j in pending:
        lt, lp = _column_getter(schema, j.left)
        rt, rp = _column_getter(schema, j.right)
        partial = [c for c in partial if c[lt][lp] == c[rt][rp]]

    pks = [(t, schema.table(t).index_of(schema.table(t).primary_key)) for t in base.tables]
    partial.sort(key=lambda c: tuple(c[t][p] for t, p in pks))
    return partial


@dataclass(frozen=True)
class GroupContent:
    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]


@dataclass(frozen=True)
class QunitInstance:
    definition_id: str
    anchor_value: str
    label: str
    anchor_column: str
    groups: tuple[GroupContent, ...] = field(default=())

    @property
    def id(self) -> str:
        return f"{self.definition_id}:{self.anchor_value}"

    @property
    def anchor_attribute(self) -> str:
        return split_element(self.anchor_column)[0]

    def elements(self) -> frozenset[str]:
        """Schema elements that actually carry information in this instance."""
        out = {self.anchor_column}
        for g in self.groups:
            if g.rows:
                out.update(g.columns)
        return frozenset(out)

    def to_dict(self) -> dict:
        return {
            "definition_id": self.definition_id,
            "anchor_value": self.anchor_value,
            "label": self.label,
            "anchor_column": self.anchor_column,
            "groups": [
                {"name": g.name, "columns": list(g.columns), "rows": [list(r) for r in g.rows]}
                for g in self.groups
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QunitInstance":
        return cls(
            data["definition_id"],
            data["anchor_value"],
            data["label"],
            data["anchor_column"],
            tuple(
                GroupContent(g["name"], tuple(g["columns"]), tuple(tuple(r) for r in g["rows"]))
                for g in data["groups"]
            ),
        )


def project_groups(
    defn: QunitDefinition, schema: Schema, combos: Sequence[dict[str, Row]]
) -> tuple[GroupContent, ...]:
    """Project joined tuples onto each foreach group.

    A group keeps one tuple per distinct combination of primary keys of the
    tables it projects from, in first-seen order.
    """
    out = []
    for g in defn.conversion.groups:
        getters = [_column_getter(schema, c) for c in g.columns]
        owners = sorted({t for t, _ in getters})
        owner_pk = [
            (t, schema.table(t).index_of(schema.table(t).primary_key)) for t in owners
        ]
        seen = set()
        rows = []
        for combo in combos:
            key = tuple(combo[t][p] for t, p in owner_pk)
            if key in seen:
                continue
            seen.add(key)
            rows.append(tuple(combo[t][i] for t, i in getters))
        out.append(GroupContent(g.name, g.columns, tuple(rows)))
    return tuple(out)


def instantiate(defn: QunitDefinition, binding: str, dataset: Dataset) -> QunitInstance:
    values = set(dataset.column_values(defn.base.anchor))
    if binding not in values:
        raise NotFoundError(f"qunit {defn.id}: no {defn.base.anchor} equal to {binding!r}")
    combos = evaluate_base(defn.base, dataset, binding)
    return QunitInstance(
        defn.id,
        binding,
        defn.conversion.label,
        defn.base.anchor,
        project_groups(defn, dataset.schema, combos),
    )


def enumerate_instances(defn: QunitDefinition, dataset: Dataset) -> list[QunitInstance]:
    """One instance per distinct anchor value, in anchor-value order."""
    anchors = sorted(set(dataset.column_values(defn.base.anchor)))
    return [instantiate(defn, a, dataset) for a in anchors]


def render(instance: QunitInstance) -> tuple[str, list[str]]:
    """Return ``(display_text, index_tokens)`` for an instance."""
    lines = [f"{instance.label} {instance.anchor_attribute}={instance.anchor_value}"]
    tokens = tokenize(instance.anchor_value) + tokenize(instance.label)
    for g in instance.groups:
        for row in g.rows:
            lines.append(f"  {g.name}: " + ", ".join(str(v) for v in row))
            for v in row:
                tokens.extend(tokenize(v))
    return "\n".join(lines), tokens


# -- definition files -------------------------------------------------------


def parse_definitions(text: str) -> list[QunitDefinition]:
    """Parse definition-file text; validation against a schema is separate."""
    defs: list[QunitDefinition] = []
    cur: dict | None = None

    def close() -> None:
        if cur is None:
            return
        if cur["label"] is None:
            raise ParseError(f"qunit {cur['id']}: missing label")
        if not cur["tables"]:
            raise ParseError(f"qunit {cur['id']}: missing 'from' line")
        defs.append(
            QunitDefinition(
                cur["id"],
                BaseExpression(tuple(cur["tables"]), tuple(cur["joins"]), tuple(cur["anchors"])),
                ConversionExpression(cur["label"], tuple(cur["groups"])),
                cur["utility"],
                cur["provenance"],
            )
        )

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "qunit":
            close()
            parts = rest.split()
            if len(parts) not in (3, 5) or parts[1] != "utility" or (
                len(parts) == 5 and parts[3] != "provenance"
            ):
                raise ParseError(
                    f"line {lineno}: expected 'qunit <id> utility <real> [provenance <p>]'"
                )
            try:
                utility = float(parts[2])
            except ValueError:
                raise ParseError(f"line {lineno}: bad utility {parts[2]!r}") from None
            cur = {
                "id": parts[0], "utility": utility,
                "provenance": parts[4] if len(parts) == 5 else "manual",
                "tables": [], "joins": [], "anchors": [], "label": None, "groups": [],
            }
            continue
        if cur is None:
            raise ParseError(f"line {lineno}: {head!r} before any 'qunit' line")
        if head == "from":
            cur["tables"].extend(rest.split())
        elif head == "join":
            left, eq, right = rest.partition("=")
            if not eq or not left.strip() or not right.strip():
                raise ParseError(f"line {lineno}: expected 'join <t.c> = <t.c>'")
            cur["joins"].append(Join(left.strip(), right.strip()))
        elif head == "anchor":
            if len(rest.split()) != 1:
                raise ParseError(f"line {lineno}: expected 'anchor <t.c>'")
            cur["anchors"].append(rest)
        elif head == "label":
            if len(rest.split()) != 1:
                raise ParseError(f"line {lineno}: expected 'label <name>'")
            cur["label"] = rest
        elif head == "foreach":
            name, colon, cols = rest.partition(":")
            if not colon or not name.strip():
                raise ParseError(f"line {lineno}: expected 'foreach <name>: <t.c>,...'")
            columns = tuple(c.strip() for c in cols.split(",") if c.strip())
            cur["groups"].append(ForEachGroup(name.strip(), columns))
        else:
            raise ParseError(f"line {lineno}: unknown directive {head!r}")
    close()
    ids = [d.id for d in defs]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ParseError(f"duplicate qunit ids: {', '.join(dupes)}")
    return defs


def format_definitions(defs: Iterable[QunitDefinition]) -> str:
    blocks = []
    for d in defs:
        lines = [f"qunit {d.id} utility {round(d.utility, 6)!r} provenance {d.provenance}"]
        lines.append("from " + " ".join(d.base.tables))
        lines.extend(f"join {j}" for j in d.base.joins)
        lines.extend(f"anchor {a}" for a in d.base.anchors)
        lines.append(f"label {d.conversion.label}")
        lines.extend(
            f"foreach {g.name}: {','.join(g.columns)}" for g in d.conversion.groups
        )
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def load_definitions(paths: Iterable[str | Path], schema: Schema) -> list[QunitDefinition]:
    """Read and validate definitions from files and directories of ``*.qunit``."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.qunit")))
        elif p.exists():
            files.append(p)
        else:
            raise NotFoundError(f"definition path {p} does not exist")
    defs: list[QunitDefinition] = []
    seen: set[str] = set()
    for f in files:
        for d in parse_definitions(f.read_text(encoding="utf-8")):
            if d.id in seen:
                raise ParseError(f"{f}: qunit id {d.id!r} already defined")
            seen.add(d.id)
            defs.append(validate_definition(d, schema))
    return defs
