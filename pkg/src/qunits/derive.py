"""Automatic qunit derivation from schema+data, query logs and external pages."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from qunits.errors import ParseError
from qunits.qunit import (
    BaseExpression,
    ConversionExpression,
    ForEachGroup,
    Join,
    QunitDefinition,
    validate_definition,
)
from qunits.store import (
    Dataset,
    Schema,
    ValueIndex,
    build_value_index,
    match_values,
    split_element,
    tokenize,
)

log = logging.getLogger(__name__)

MAX_JOIN_PATH = 2
GROUP_FACTOR = 2.0

QueryLog = Sequence[tuple[str, int]]


@dataclass(frozen=True)
class DerivationConfig:
    k1: int = 3
    k2: int = 3
    min_template_frequency: int = 1
    min_signature_support: int = 2

    def __post_init__(self) -> None:
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("k1 and k2 must be non-negative")
        if self.min_template_frequency < 1 or self.min_signature_support < 1:
            raise ValueError("thresholds must be positive")


# -- queriability -----------------------------------------------------------


@dataclass(frozen=True)
class QueriabilityScore:
    tables: Mapping[str, float]
    columns: Mapping[str, float]

    def ranking(self) -> list[str]:
        """Tables by descending score, ties by name."""
        return sorted(self.tables, key=lambda t: (-self.tables[t], t))


def queriability(dataset: Dataset) -> QueriabilityScore:
    """Score tables as ``(|T| / max |T'|) * (1 + fk_degree(T))``.

    Column scores are distinct-value ratios. An all-empty dataset scores 0.
    """
    schema = dataset.schema
    biggest = max(dataset.cardinality(t) for t in schema.table_names)
    tables = {
        t: (dataset.cardinality(t) / biggest if biggest else 0.0) * (1 + schema.fk_degree(t))
        for t in schema.table_names
    }
    columns = {
        f"{t}.{c}": dataset.distinct_ratio(f"{t}.{c}")
        for t in schema.table_names
        for c in schema.table(t).column_names
    }
    return QueriabilityScore(tables, columns)


def anchor_column(dataset: Dataset, table: str, scores: QueriabilityScore | None = None) -> str | None:
    """Most distinct text column of ``table``; internal ids never qualify."""
    text = dataset.schema.text_columns(table)
    if not text:
        return None
    ratio = (scores.columns if scores else {})
    return min(
        (f"{table}.{c}" for c in text),
        key=lambda e: (-ratio.get(e, dataset.distinct_ratio(e)), e),
    )


def _assemble(
    def_id: str,
    anchor: str,
    groups: Sequence[tuple[str, tuple[str, ...]]],
    schema: Schema,
    utility: float,
    provenance: str,
    max_path: int | None = MAX_JOIN_PATH,
    skip_unreachable: bool = True,
) -> QunitDefinition | None:
    """Build a definition whose base joins every group table to the anchor.

    Groups whose table has no FK path of at most ``max_path`` edges are dropped
    with a warning, or abort the whole definition when ``skip_unreachable`` is
    false.
    """
    anchor_table = split_element(anchor)[0]
    tables = [anchor_table]
    joins: list[Join] = []
    kept = []
    for name, columns in groups:
        target = split_element(columns[0])[0]
        path = schema.fk_path(anchor_table, target, max_path)
        if path is None:
            log.warning("%s: no FK path from %s to %s; dropping %s",
                        def_id, anchor_table, target, name)
            if not skip_unreachable:
                return None
            continue
        for a, b in zip(path, path[1:]):
            if b in tables:
                continue
            fk = min(schema.edges_between(a, b), key=str)
            tables.append(b)
            joins.append(Join(fk.source, fk.target))
        kept.append(ForEachGroup(name, columns))
    defn = QunitDefinition(
        def_id,
        BaseExpression(tuple(tables), tuple(joins), (anchor,)),
        ConversionExpression(anchor_table, tuple(kept)),
        utility,
        provenance,
    )
    return validate_definition(defn, schema)


def _unique_id(prefix: str, table: str, taken: set[str]) -> str:
    base = f"{prefix}-{table}"
    candidate, n = base, 2
    while candidate in taken:
        candidate, n = f"{base}-{n}", n + 1
    taken.add(candidate)
    return candidate


def _element_group(schema: Schema, element: str) -> tuple[str, tuple[str, ...]] | None:
    table, column = split_element(element)
    if column is not None:
        return table, (element,)
    cols = tuple(f"{table}.{c}" for c in schema.text_columns(table))
    return (table, cols) if cols else None


def derive_from_schema(dataset: Dataset, config: DerivationConfig = DerivationConfig()) -> list[QunitDefinition]:
    """Top-k1 tables by queriability, each joined to its top-k2 neighbors."""
    schema = dataset.schema
    scores = queriability(dataset)
    rank = {t: i for i, t in enumerate(scores.ranking())}
    anchored = [t for t in scores.ranking() if schema.text_columns(t)][: config.k1]
    if not anchored:
        return []
    top = max(scores.tables[t] for t in anchored)
    out = []
    taken: set[str] = set()
    for table in anchored:
        neighbors = sorted(
            (n for n in schema.neighbors(table) if schema.text_columns(n)), key=rank.__getitem__
        )[: config.k2]
        groups = [(n, tuple(f"{n}.{c}" for c in schema.text_columns(n))) for n in neighbors]
        utility = scores.tables[table] / top if top else 1.0
        defn = _assemble(
            _unique_id("schema", table, taken),
            anchor_column(dataset, table, scores),  # type: ignore[arg-type]
            groups, schema, utility, "schema_data", max_path=1,
        )
        if defn is not None:
            out.append(defn)
    return out


# -- query logs -------------------------------------------------------------


@dataclass(frozen=True)
class TypedTemplate:
    """A query with value spans replaced by ``[table.column]`` slots."""

    pattern: tuple[str, ...]
    frequency: int = 1

    @property
    def text(self) -> str:
        return " ".join(self.pattern)

    @property
    def slots(self) -> list[str]:
        return [p[1:-1] for p in self.pattern if is_slot(p)]

    @property
    def literals(self) -> list[str]:
        return [p for p in self.pattern if not is_slot(p)]

    def __str__(self) -> str:
        return self.text


def is_slot(item: str) -> bool:
    return item.startswith("[") and item.endswith("]")


def type_query(query: str, value_index: ValueIndex) -> TypedTemplate:
    """Replace matched value spans with schema-type slots.

    Table-name matches stay literal: they describe the wanted structure,
    not an entity.
    """
    tokens = tokenize(query)
    pattern: list[str] = []
    i = 0
    for m in match_values(tokens, value_index):
        pattern.extend(tokens[i:m.span[0]])
        if m.is_value:
            pattern.append(f"[{m.schema_element}]")
        else:
            pattern.extend(tokens[m.span[0]:m.span[1]])
        i = m.span[1]
    pattern.extend(tokens[i:])
    return TypedTemplate(tuple(pattern), 1)


@dataclass(frozen=True)
class SchemaLinkWeights:
    source: str
    weights: tuple[tuple[str, int], ...]

    @property
    def total(self) -> int:
        return sum(c for _, c in self.weights)

    def as_dict(self) -> dict[str, int]:
        return dict(self.weights)


def rollup(
    query_log: QueryLog, dataset: Dataset, value_index: ValueIndex | None = None
) -> dict[str, SchemaLinkWeights]:
    """Frequency-weighted links from each recognized entity's table.

    Within one query every (source table, target element) pair counts once;
    targets in the source table itself are ignored.
    """
    index = value_index or build_value_index(dataset)
    counts: dict[str, Counter] = defaultdict(Counter)
    for query, freq in query_log:
        matches = match_values(tokenize(query), index)
        elements = {m.schema_element for m in matches}
        sources = {split_element(m.schema_element)[0] for m in matches if m.is_value}
        for src in sources:
            for target in elements:
                if split_element(target)[0] != src:
                    counts[src][target] += freq
    return {
        src: SchemaLinkWeights(src, tuple(sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))))
        for src, c in sorted(counts.items())
        if c
    }


def derive_from_log(
    query_log: QueryLog,
    dataset: Dataset,
    config: DerivationConfig = DerivationConfig(),
    value_index: ValueIndex | None = None,
) -> list[QunitDefinition]:
    """Roll up logged specializations into one qunit per entity table."""
    schema = dataset.schema
    links = rollup(query_log, dataset, value_index)
    anchored = {t: w for t, w in links.items() if anchor_column(dataset, t)}
    if not anchored:
        return []
    top = max(w.total for w in anchored.values())
    out = []
    taken: set[str] = set()
    for table, weights in anchored.items():
        groups = []
        for element, count in weights.weights:
            if count < config.min_template_frequency:
                continue
            group = _element_group(schema, element)
            if group is not None:
                groups.append(group)
        defn = _assemble(
            _unique_id("log", table, taken),
            anchor_column(dataset, table),  # type: ignore[arg-type]
            groups, schema, weights.total / top, "query_log",
        )
        if defn is not None:
            out.append(defn)
    return out


def read_query_log(text: str) -> list[tuple[str, int]]:
    """Parse ``query<TAB>frequency`` lines."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        query, tab, freq = line.rpartition("\t")
        if not tab:
            raise ParseError(f"query log line {lineno}: expected 'query<TAB>frequency'")
        try:
            n = int(freq)
        except ValueError:
            raise ParseError(f"query log line {lineno}: bad frequency {freq!r}") from None
        if n < 1:
            raise ParseError(f"query log line {lineno}: frequency must be positive")
        out.append((query, n))
    return out


def format_query_log(query_log: QueryLog) -> str:
    return "".join(f"{q}\t{f}\n" for q, f in query_log)


# -- external evidence ------------------------------------------------------


@dataclass(frozen=True)
class DocNode:
    name: str
    text: str = ""
    children: tuple["DocNode", ...] = ()

    def walk(self) -> Iterable["DocNode"]:
        yield self
        for c in self.children:
            yield from c.walk()


def parse_document(text: str) -> DocNode:
    """Parse the indented ``element-name: text`` tree format.

    Several top-level lines are wrapped under a synthetic ``document`` node.
    """
    root_children: list = []
    # stack of (indent, name, text, children)
    stack: list[tuple[int, str, str, list]] = [(-1, "document", "", root_children)]

    def pop() -> None:
        _, name, body, kids = stack.pop()
        stack[-1][3].append(DocNode(name, body, tuple(kids)))

    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        expanded = raw.expandtabs(4)
        indent = len(expanded) - len(expanded.lstrip(" "))
        name, colon, body = expanded.strip().partition(":")
        if not colon or not name.strip():
            raise ParseError(f"document line {lineno}: expected 'element-name: text'")
        while stack[-1][0] >= indent:
            pop()
        stack.append((indent, name.strip(), body.strip(), []))
    while len(stack) > 1:
        pop()
    if len(root_children) == 1:
        return root_children[0]
    return DocNode("document", "", tuple(root_children))


def format_document(node: DocNode, depth: int = 0) -> str:
    out = f"{'  ' * depth}{node.name}: {node.text}".rstrip() + "\n"
    return out + "".join(format_document(c, depth + 1) for c in node.children)


@dataclass(frozen=True)
class TypeSignature:
    counts: tuple[tuple[str, int], ...] = ()

    @classmethod
    def of(cls, counter: Mapping[str, int]) -> "TypeSignature":
        return cls(tuple(sorted((e, n) for e, n in counter.items() if n > 0)))

    def as_dict(self) -> dict[str, int]:
        return dict(self.counts)

    @property
    def elements(self) -> frozenset[str]:
        return frozenset(e for e, _ in self.counts)

    def __add__(self, other: "TypeSignature") -> "TypeSignature":
        total = Counter(self.as_dict())
        total.update(other.as_dict())
        return TypeSignature.of(total)

    def __str__(self) -> str:
        ordered = sorted(self.counts, key=lambda kv: (kv[1], kv[0]))
        return "".join(f"({e}:{n})" for e, n in ordered)


def signature(document: DocNode, value_index: ValueIndex) -> TypeSignature:
    """Count value matches per schema column over every text node."""
    counts: Counter = Counter()
    for node in document.walk():
        if node.text:
            for m in match_values(tokenize(node.text), value_index):
                if m.is_value:
                    counts[m.schema_element] += 1
    return TypeSignature.of(counts)


def aggregate_signatures(signatures: Iterable[TypeSignature]) -> TypeSignature:
    total: Counter = Counter()
    for s in signatures:
        total.update(s.as_dict())
    return TypeSignature.of(total)


def derive_from_evidence(
    documents: Sequence[DocNode],
    dataset: Dataset,
    config: DerivationConfig = DerivationConfig(),
    value_index: ValueIndex | None = None,
) -> list[QunitDefinition]:
    """Learn label/foreach structure from clusters of similar pages.

    Pages cluster by the set of columns their signature mentions. In each
    supported cluster the column with the smallest mean count becomes the
    label; columns at least twice as frequent become foreach groups.
    """
    schema = dataset.schema
    index = value_index or build_value_index(dataset)
    clusters: dict[tuple[str, ...], list[TypeSignature]] = defaultdict(list)
    for doc in documents:
        sig = signature(doc, index)
        if sig.counts:
            clusters[tuple(sorted(sig.elements))].append(sig)
    out = []
    taken: set[str] = set()
    for key in sorted(clusters):
        members = clusters[key]
        if len(members) < config.min_signature_support:
            continue
        total = aggregate_signatures(members).as_dict()
        mean = {e: n / len(members) for e, n in total.items()}
        labels = [e for e in key if schema.column(e).kind == "text"]
        if not labels:
            continue
        label = min(labels, key=lambda e: (mean[e], e))
        grouped = sorted(
            (e for e in key if e != label and mean[e] >= GROUP_FACTOR * mean[label]),
            key=lambda e: (-mean[e], e),
        )
        groups = [(split_element(e)[0], (e,)) for e in grouped]
        table = split_element(label)[0]
        def_id = _unique_id("evidence", table, taken)
        defn = _assemble(
            def_id, label, groups, schema, len(members) / len(documents),
            "external_evidence", skip_unreachable=False,
        )
        if defn is None:
            log.warning("%s: cluster %s skipped, no connecting FK path", def_id, key)
            taken.discard(def_id)
            continue
        out.append(defn)
    return out


def load_documents(path: str | Path) -> list[DocNode]:
    """Read one document file, or every ``*.txt`` file of a directory."""
    path = Path(path)
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    return [parse_document(f.read_text(encoding="utf-8")) for f in files]
