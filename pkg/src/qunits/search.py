"""Keyword search over materialized qunit instances.

The pipeline: segment the query against the value index, score qunit
definitions by their overlap with the typed segments, then rank instances of
the best definitions with tf-idf.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from qunits.errors import IntegrityError
from qunits.qunit import QunitDefinition, QunitInstance, render
from qunits.store import ValueIndex, ValueMatch, tokenize


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.5
    top_k: int = 10
    candidate_definitions: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.top_k < 1 or self.candidate_definitions < 1:
            raise ValueError("top_k and candidate_definitions must be positive")


class InvertedIndex:
    """Token postings over rendered instances, each an independent document."""

    def __init__(self, instances: Iterable[QunitInstance]):
        self.instances: dict[str, QunitInstance] = {}
        self.displays: dict[str, str] = {}
        self.term_freqs: dict[str, Counter] = {}
        for inst in instances:
            if inst.id in self.instances:
                raise IntegrityError(f"duplicate instance id {inst.id!r}")
            display, tokens = render(inst)
            self.instances[inst.id] = inst
            self.displays[inst.id] = display
            self.term_freqs[inst.id] = Counter(tokens)
        postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
        for iid in sorted(self.term_freqs):
            for tok, tf in self.term_freqs[iid].items():
                postings[tok].append((iid, tf))
        self.postings = {t: tuple(p) for t, p in sorted(postings.items())}
        self.df = {t: len(p) for t, p in self.postings.items()}
        self.doc_count = len(self.instances)
        self.definition_of = {iid: i.definition_id for iid, i in self.instances.items()}

    def idf(self, token: str) -> float:
        df = self.df.get(token, 0)
        return math.log(1 + self.doc_count / df) if df else 0.0

    def tfidf(self, tokens: Sequence[str], instance_id: str) -> float:
        tf = self.term_freqs[instance_id]
        return sum(tf[t] * self.idf(t) for t in tokens)

    def instance_ids(self, definition_id: str) -> list[str]:
        return sorted(i for i, d in self.definition_of.items() if d == definition_id)

    def dump(self) -> str:
        """``token<TAB>df<TAB>id=tf;id=tf`` lines sorted by token."""
        return "".join(
            f"{tok}\t{self.df[tok]}\t" + ";".join(f"{iid}={tf}" for iid, tf in post) + "\n"
            for tok, post in self.postings.items()
        )


def build_index(instances: Iterable[QunitInstance]) -> InvertedIndex:
    return InvertedIndex(instances)


# -- segmentation -----------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    element: str | None
    text: str

    def __str__(self) -> str:
        return f"[{self.element}]" if self.element else f'"{self.text}"'


@dataclass(frozen=True)
class Segmentation:
    segments: tuple[Segment, ...]
    score: float

    @property
    def elements(self) -> frozenset[str]:
        return frozenset(s.element for s in self.segments if s.element)

    def __str__(self) -> str:
        return "".join(map(str, self.segments))


def _structural_references(
    tokens: Sequence[str], index: ValueIndex
) -> list[tuple[ValueMatch, int]]:
    """Mentions of structure the value index does not hold verbatim.

    Plural table names (``movies`` -> ``movie``) and column names (``plot`` ->
    ``info.plot``) become extra single-token candidates ranked after any
    indexed reading of the same token.
    """
    by_column: dict[str, list[str]] = defaultdict(list)
    for element in sorted(index.columns):
        by_column[element.split(".", 1)[1]].append(element)
    out = []
    for i, tok in enumerate(tokens):
        rank = len(index.lookup([tok]))
        targets = []
        stem = tok[:-1] if tok.endswith("s") else None
        if stem in index.table_names and tok not in index.table_names:
            targets.append(stem)
        targets.extend(by_column.get(tok, ()))
        if stem:
            targets.extend(by_column.get(stem, ()))
        for element in dict.fromkeys(targets):
            out.append((ValueMatch((i, i + 1), element, tok), rank))
            rank += 1
    return out


def _maximal_sets(cands: list[tuple[ValueMatch, int]]) -> list[list[tuple[ValueMatch, int]]]:
    """All maximal sets of pairwise non-overlapping candidate spans."""
    cands = sorted(cands, key=lambda c: (c[0].span, c[1], c[0].schema_element))
    out = []

    def extend(pos: int, chosen: list) -> None:
        later = [c for c in cands if c[0].span[0] >= pos]
        if not later:
            out.append(list(chosen))
            return
        # The next pick must start before every later candidate ends;
        # otherwise a skipped candidate could still be added.
        horizon = min(c[0].span[1] for c in later)
        for c in later:
            if c[0].span[0] < horizon:
                chosen.append(c)
                extend(c[0].span[1], chosen)
                chosen.pop()

    extend(0, [])
    return out


def _build(tokens: Sequence[str], chosen: Sequence[tuple[ValueMatch, int]]) -> Segmentation:
    segs: list[Segment] = []
    pos = 0
    for m, _ in chosen:
        a, b = m.span
        if a > pos:
            segs.append(Segment(pos, a, None, " ".join(tokens[pos:a])))
        segs.append(Segment(a, b, m.schema_element, " ".join(tokens[a:b])))
        pos = b
    if pos < len(tokens):
        segs.append(Segment(pos, len(tokens), None, " ".join(tokens[pos:])))
    covered = sum(len(m) for m, _ in chosen)
    return Segmentation(tuple(segs), covered / len(tokens) if tokens else 0.0)


def segment(query: str | Sequence[str], value_index: ValueIndex) -> list[Segmentation]:
    """Rank every maximal segmentation of ``query``.

    Order: covered-token fraction descending, then fewer segments, then the
    sequence of (span, element preference) so the value index's preferred
    reading of an ambiguous span comes first.
    """
    tokens = tokenize(query) if isinstance(query, str) else list(query)
    cands = value_index.candidates(tokens) + _structural_references(tokens, value_index)
    ranked = []
    for chosen in _maximal_sets(cands):
        seg = _build(tokens, chosen)
        lex = tuple((m.span, rank, m.schema_element) for m, rank in chosen)
        ranked.append(((-seg.score, len(seg.segments), lex), seg))
    ranked.sort(key=lambda kv: kv[0])
    return [seg for _, seg in ranked]


# -- definition matching and ranking ----------------------------------------


def defmatch_score(seg: Segmentation, defn: QunitDefinition) -> float:
    query_elements = seg.elements
    def_elements = defn.elements()
    union = query_elements | def_elements
    jaccard = len(query_elements & def_elements) / len(union) if union else 0.0
    return jaccard * (1 + defn.utility) / 2


def match_definitions(
    seg: Segmentation, defs: Iterable[QunitDefinition]
) -> list[tuple[QunitDefinition, float]]:
    scored = [(d, defmatch_score(seg, d)) for d in defs]
    scored.sort(key=lambda ds: (-ds[1], ds[0].id))
    return scored


def candidate_definitions(
    seg: Segmentation, matches: Sequence[tuple[QunitDefinition, float]]
) -> list[tuple[QunitDefinition, float]]:
    """Definitions the query can parameterize, in match order.

    A definition is compatible when the segmentation types a span as its
    anchor column. Without any compatible definition all matches qualify.
    """
    typed = seg.elements
    compatible = [(d, s) for d, s in matches if d.base.anchor in typed]
    return compatible or list(matches)


@dataclass(frozen=True)
class RankedResult:
    instance_id: str
    definition_id: str
    anchor_value: str
    combined: float
    defmatch: float
    tfidf: float


@dataclass(frozen=True)
class Explanation:
    query: str
    tokens: tuple[str, ...]
    segmentations: tuple[Segmentation, ...]
    matches: tuple[tuple[str, float], ...]
    results: tuple[RankedResult, ...]


def explain(
    query: str,
    index: InvertedIndex,
    defs: Sequence[QunitDefinition],
    value_index: ValueIndex,
    config: SearchConfig = SearchConfig(),
) -> Explanation:
    """Run the full pipeline and keep every intermediate score."""
    tokens = tokenize(query)
    segs = segment(tokens, value_index)
    if not segs or index.doc_count == 0:
        return Explanation(query, tuple(tokens), tuple(segs), (), ())
    matches = match_definitions(segs[0], defs)
    results = []
    for defn, dm in candidate_definitions(segs[0], matches)[: config.candidate_definitions]:
        for iid in index.instance_ids(defn.id):
            tfidf = index.tfidf(tokens, iid)
            combined = config.alpha * dm + (1 - config.alpha) * (tfidf / (tfidf + 1))
            results.append(
                RankedResult(iid, defn.id, index.instances[iid].anchor_value, combined, dm, tfidf)
            )
    results.sort(key=lambda r: (-r.combined, r.definition_id, r.instance_id))
    return Explanation(
        query,
        tuple(tokens),
        tuple(segs),
        tuple((d.id, s) for d, s in matches),
        tuple(results[: config.top_k]),
    )


def search(
    query: str,
    index: InvertedIndex,
    defs: Sequence[QunitDefinition],
    value_index: ValueIndex,
    config: SearchConfig = SearchConfig(),
) -> list[RankedResult]:
    return list(explain(query, index, defs, value_index, config).results)
