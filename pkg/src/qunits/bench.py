"""Benchmark construction from query logs and rubric-based result scoring.

Human relevance ratings are replaced by a mechanical rubric: a gold spec
names the expected anchor and the schema elements a good answer must (and
must not) contain, and every result maps to one of the three rating levels.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from qunits.baselines import DataGraph, XmlTree, lca_search, mlca_search, spanning_tree_search
from qunits.derive import QueryLog, TypedTemplate, type_query
from qunits.errors import ParseError
from qunits.qunit import QunitDefinition, QunitInstance
from qunits.search import InvertedIndex, SearchConfig, search
from qunits.store import Dataset, Schema, ValueIndex, match_values, split_element, tokenize

log = logging.getLogger(__name__)


def extract_templates(query_log: QueryLog, value_index: ValueIndex) -> list[TypedTemplate]:
    """Type every logged query and sum frequencies per distinct pattern."""
    totals: Counter = Counter()
    for query, freq in query_log:
        totals[type_query(query, value_index).pattern] += freq
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], " ".join(kv[0])))
    return [TypedTemplate(p, f) for p, f in ranked]


# -- gold specs -------------------------------------------------------------


@dataclass(frozen=True)
class GoldEntry:
    """One line of the gold-mapping file, keyed by template text."""

    template: str
    definition_id: str
    required: frozenset[str] = frozenset()
    forbidden: frozenset[str] = frozenset()


@dataclass(frozen=True)
class GoldSpec:
    definition_id: str
    anchor_column: str | None
    anchor_value: str | None
    required: frozenset[str] = frozenset()
    forbidden: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.required & self.forbidden:
            raise ValueError(
                f"elements both required and forbidden: {sorted(self.required & self.forbidden)}"
            )


def read_gold(text: str) -> dict[str, GoldEntry]:
    """Parse ``template<TAB>definition-id<TAB>required:a,b<TAB>forbidden:c,d`` lines."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4 or not parts[2].startswith("required:") or not parts[3].startswith("forbidden:"):
            raise ParseError(
                f"gold line {lineno}: expected template, definition, required:..., forbidden:..."
            )

        def elements(field_text: str) -> frozenset[str]:
            return frozenset(e.strip() for e in field_text.split(":", 1)[1].split(",") if e.strip())

        template = " ".join(parts[0].split())
        required, forbidden = elements(parts[2]), elements(parts[3])
        if required & forbidden:
            raise ParseError(f"gold line {lineno}: {sorted(required & forbidden)} both required and forbidden")
        out[template] = GoldEntry(template, parts[1].strip(), required, forbidden)
    return out


def _normalize(value: object) -> str:
    return " ".join(tokenize(str(value)))


def gold_for_query(
    query: str, entry: GoldEntry, defs: Mapping[str, QunitDefinition], value_index: ValueIndex
) -> GoldSpec:
    """Resolve the expected anchor value from the query's matching slot."""
    defn = defs.get(entry.definition_id)
    anchor_column = defn.base.anchor if defn else None
    anchor_value = None
    if anchor_column:
        for m in match_values(tokenize(query), value_index):
            if m.schema_element == anchor_column:
                anchor_value = m.matched_text
                break
    return GoldSpec(entry.definition_id, anchor_column, anchor_value, entry.required, entry.forbidden)


# -- benchmark --------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkQuery:
    text: str
    template: str
    gold: GoldSpec | None = None


@dataclass(frozen=True)
class Benchmark:
    queries: tuple[BenchmarkQuery, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.queries)


def make_benchmark(
    templates: Sequence[TypedTemplate],
    query_log: QueryLog,
    value_index: ValueIndex,
    top_templates: int = 3,
    per_template: int = 2,
    seed: int = 0,
    gold: Mapping[str, GoldEntry] | None = None,
    defs: Mapping[str, QunitDefinition] | None = None,
) -> Benchmark:
    """Sample ``per_template`` distinct logged queries for each top template."""
    if per_template < 1:
        raise ValueError("per_template must be at least 1")
    rng = random.Random(seed)
    by_pattern: dict[tuple[str, ...], set[str]] = {}
    for query, _ in query_log:
        by_pattern.setdefault(type_query(query, value_index).pattern, set()).add(query)
    out = []
    for tpl in templates[:top_templates]:
        pool = sorted(by_pattern.get(tpl.pattern, ()))
        if not pool:
            log.warning("template %r has no matching queries; skipped", tpl.text)
            continue
        for query in rng.sample(pool, min(per_template, len(pool))):
            spec = None
            if gold is not None and tpl.text in gold:
                spec = gold_for_query(query, gold[tpl.text], defs or {}, value_index)
            out.append(BenchmarkQuery(query, tpl.text, spec))
    return Benchmark(tuple(out), seed)


# -- rubric -----------------------------------------------------------------


@dataclass(frozen=True)
class ResultSummary:
    """What a top result shows: its schema elements and (column, value) anchors."""

    elements: frozenset[str] = frozenset()
    anchors: frozenset[tuple[str, str]] = frozenset()


RUBRIC = {
    "incorrect": 0.0,
    "no_information": 0.0,
    "incomplete": 0.5,
    "excessive": 0.5,
    "correct": 1.0,
}


def rubric_branch(result: ResultSummary | None, gold: GoldSpec) -> str:
    """Which rating option a result earns against ``gold``."""
    if result is None or not result.elements:
        return "no_information"
    if gold.anchor_value is not None:
        wanted = (gold.anchor_column, _normalize(gold.anchor_value))
        if wanted not in {(c, _normalize(v)) for c, v in result.anchors}:
            return "incorrect"
    covered = gold.required & result.elements
    if gold.required and not covered:
        return "no_information"
    if covered != gold.required:
        return "incomplete"
    if gold.forbidden & result.elements:
        return "excessive"
    return "correct"


def score_result(result: ResultSummary | None, gold: GoldSpec) -> float:
    return RUBRIC[rubric_branch(result, gold)]


Adapter = Callable[[str], "ResultSummary | None"]


@dataclass(frozen=True)
class ScoreReport:
    algorithms: tuple[str, ...]
    queries: tuple[str, ...]
    scores: Mapping[str, tuple[float, ...]]
    branches: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def means(self) -> dict[str, float]:
        return {
            a: (sum(self.scores[a]) / len(self.scores[a]) if self.scores[a] else 0.0)
            for a in self.algorithms
        }

    def format(self) -> str:
        """Tab-separated matrix: one row per query, one column per algorithm, then means."""
        lines = ["query\t" + "\t".join(self.algorithms)]
        for i, q in enumerate(self.queries):
            lines.append(q + "\t" + "\t".join(f"{self.scores[a][i]:.2f}" for a in self.algorithms))
        means = self.means
        lines.append("mean\t" + "\t".join(f"{means[a]:.3f}" for a in self.algorithms))
        return "\n".join(lines) + "\n"


def run_comparison(
    benchmark: Benchmark, algorithms: Sequence[tuple[str, Adapter]]
) -> ScoreReport:
    """Score every algorithm's top result on every gold-annotated query."""
    queries = [q for q in benchmark.queries if q.gold is not None]
    skipped = len(benchmark.queries) - len(queries)
    if skipped:
        log.warning("%d benchmark queries have no gold spec and are not scored", skipped)
    scores: dict[str, tuple[float, ...]] = {}
    branches: dict[str, tuple[str, ...]] = {}
    for name, adapter in algorithms:
        row, why = [], []
        for q in queries:
            try:
                branch = rubric_branch(adapter(q.text), q.gold)  # type: ignore[arg-type]
            except Exception:
                log.exception("%s failed on %r; scored 0", name, q.text)
                branch = "incorrect"
            why.append(branch)
            row.append(RUBRIC[branch])
        scores[name] = tuple(row)
        branches[name] = tuple(why)
    return ScoreReport(
        tuple(n for n, _ in algorithms), tuple(q.text for q in queries), scores, branches
    )


# -- adapters ---------------------------------------------------------------


def summarize_instance(instance: QunitInstance) -> ResultSummary:
    return ResultSummary(
        instance.elements(), frozenset({(instance.anchor_column, instance.anchor_value)})
    )


def qunit_adapter(
    index: InvertedIndex,
    defs: Sequence[QunitDefinition],
    value_index: ValueIndex,
    config: SearchConfig = SearchConfig(),
) -> Adapter:
    def run(query: str) -> ResultSummary | None:
        results = search(query, index, defs, value_index, config)
        if not results:
            return None
        return summarize_instance(index.instances[results[0].instance_id])

    return run


def spanning_tree_adapter(graph: DataGraph, schema: Schema) -> Adapter:
    """Flatten the smallest tuple tree into its columns and text values."""

    def run(query: str) -> ResultSummary | None:
        results = spanning_tree_search(query, graph, limit=1)
        if not results:
            return None
        elements, anchors = set(), set()
        for node_id in results[0].nodes:
            node = graph.nodes[node_id]
            text = set(schema.text_columns(node.table))
            for col, value in node.values.items():
                elements.add(f"{node.table}.{col}")
                if col in text:
                    anchors.add((f"{node.table}.{col}", str(value)))
        return ResultSummary(frozenset(elements), frozenset(anchors))

    return run


def xml_adapter(tree: XmlTree, algorithm: Callable = lca_search) -> Adapter:
    """Flatten the first XML result subtree into its leaf columns and texts."""

    def run(query: str) -> ResultSummary | None:
        results = algorithm(query, tree)
        if not results:
            return None
        elements, anchors = set(), set()
        for node_id in tree.subtree(results[0].root):
            node = tree.nodes[node_id]
            if node.element and split_element(node.element)[1]:
                elements.add(node.element)
                anchors.add((node.element, node.text))
        return ResultSummary(frozenset(elements), frozenset(anchors))

    return run


def mlca_adapter(tree: XmlTree) -> Adapter:
    return xml_adapter(tree, mlca_search)


# -- synthetic query log ----------------------------------------------------

QUERY_SHAPE = {
    "single_entity": 0.38,
    "entity_attribute": 0.20,
    "multi_entity": 0.02,
    "complex": 0.02,
}
AGGREGATE_WORDS = frozenset(
    {"highest", "lowest", "most", "least", "top", "best", "worst", "average", "total", "biggest"}
)
ENTITY_COLUMNS = ("person.name", "movie.title", "genre.name", "locations.place")
FREE_WORDS = ("trailer", "posters", "soundtrack", "quotes", "pictures", "biography", "news", "wallpaper")
COMPLEX_QUERIES = (
    "highest box office revenue",
    "top grossing films",
    "best movies of all time",
    "most popular actors",
)


def _structural(token: str, schema: Schema) -> bool:
    names = set(schema.table_names)
    for t in schema.table_names:
        names.update(schema.table(t).column_names)
    return token in names or (token.endswith("s") and token[:-1] in names)


def classify_query(template: TypedTemplate, schema: Schema) -> str:
    """Bucket a typed query into the query-log shape classes."""
    literals = template.literals
    if any(tok in AGGREGATE_WORDS for tok in literals):
        return "complex"
    slots = template.slots
    if len(slots) >= 2:
        return "multi_entity"
    if len(slots) == 1:
        if not literals:
            return "single_entity"
        if all(_structural(t, schema) for t in literals):
            return "entity_attribute"
    return "other"


def generate_query_log(
    dataset: Dataset,
    n_distinct: int = 50,
    seed: int = 7,
    shape: Mapping[str, float] = QUERY_SHAPE,
    entity_columns: Sequence[str] = ENTITY_COLUMNS,
) -> list[tuple[str, int]]:
    """Synthesize a log of ``n_distinct`` queries with the given class proportions.

    Class counts are ``round(p * n_distinct)``; the remainder is free-text
    queries. Frequencies are drawn per class so entity lookups dominate.
    """
    rng = random.Random(seed)
    schema = dataset.schema
    entities = {c: sorted({str(v) for v in dataset.column_values(c)}) for c in entity_columns}
    people = entities.get("person.name", [])
    titles = entities.get("movie.title", [])
    movie_attrs = [w for w in ("cast", "genre", "plot", "locations", "year") if _structural(w, schema)]

    pools = {
        "single_entity": sorted({v for vals in entities.values() for v in vals}),
        "entity_attribute": sorted(
            [f"{t} {w}" for t in titles for w in movie_attrs]
            + [f"{p} movies" for p in people]
            + [f"{g} movies" for g in entities.get("genre.name", [])]
        ),
        "multi_entity": sorted(f"{p} {t}" for p in people for t in titles),
        "complex": sorted(COMPLEX_QUERIES),
        "other": sorted(
            [f"{t} {w}" for t in titles for w in FREE_WORDS[:4]]
            + [f"{p} {w}" for p in people for w in FREE_WORDS[4:]]
        ),
    }
    counts = {cls: round(p * n_distinct) for cls, p in shape.items()}
    counts["other"] = n_distinct - sum(counts.values())
    freq_range = {
        "single_entity": (20, 60),
        "entity_attribute": (8, 30),
        "multi_entity": (1, 5),
        "complex": (1, 5),
        "other": (1, 8),
    }
    out = []
    for cls in ("single_entity", "entity_attribute", "multi_entity", "complex", "other"):
        if counts[cls] > len(pools[cls]):
            raise ValueError(f"not enough distinct {cls} queries ({len(pools[cls])} < {counts[cls]})")
        lo, hi = freq_range[cls]
        for q in rng.sample(pools[cls], counts[cls]):
            out.append((q, rng.randint(lo, hi)))
    out.sort(key=lambda qf: (-qf[1], qf[0]))
    return out


def query_shape(query_log: QueryLog, value_index: ValueIndex, schema: Schema) -> dict[str, float]:
    """Fraction of distinct queries per class."""
    distinct = sorted({q for q, _ in query_log})
    classes = Counter(classify_query(type_query(q, value_index), schema) for q in distinct)
    return {c: classes.get(c, 0) / len(distinct) if distinct else 0.0
            for c in ("single_entity", "entity_attribute", "multi_entity", "complex", "other")}


def load_gold(path: str | Path) -> dict[str, GoldEntry]:
    return read_gold(Path(path).read_text(encoding="utf-8"))


def templates_text(templates: Iterable[TypedTemplate]) -> str:
    return "".join(f"{t.text}\t{t.frequency}\n" for t in templates)
