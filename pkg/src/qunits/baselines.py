"""Competitor keyword-search algorithms used for comparison.

* spanning-tree search over the tuple graph,
* LCA: smallest XML elements containing every keyword,
* MLCA: LCA results whose keyword matches choose each other as nearest.

All three are exact; they are meant for desk-scale fixtures.
"""

from __future__ import annotations

import itertools
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from qunits.errors import IntegrityError
from qunits.store import Dataset, Schema, tokenize

NodeId = tuple  # (table, primary key)


@dataclass(frozen=True)
class TreeResult:
    """A result subtree; ``root`` is set for XML results, ``None`` for graph trees."""

    nodes: tuple
    edges: tuple = ()
    root: int | None = None

    @property
    def size(self) -> int:
        return len(self.nodes)


# -- tuple graph ------------------------------------------------------------


@dataclass(frozen=True)
class GraphNode:
    table: str
    key: object
    values: Mapping[str, object]
    tokens: frozenset[str]

    @property
    def id(self) -> NodeId:
        return (self.table, self.key)


@dataclass
class DataGraph:
    nodes: dict[NodeId, GraphNode]
    adjacency: dict[NodeId, set[NodeId]] = field(default_factory=dict)

    @property
    def edges(self) -> set[frozenset]:
        return {frozenset((a, b)) for a, nbrs in self.adjacency.items() for b in nbrs}

    def keyword_nodes(self, keyword: str) -> list[NodeId]:
        return sorted(n for n, node in self.nodes.items() if keyword in node.tokens)


def to_data_graph(dataset: Dataset) -> DataGraph:
    """One node per tuple, one undirected edge per FK-linked tuple pair.

    A node's tokens are those of its non-key values plus its table name.
    """
    schema = dataset.schema
    nodes: dict[NodeId, GraphNode] = {}
    for table in schema.table_names:
        tdef = schema.table(table)
        pk = tdef.index_of(tdef.primary_key)
        content = schema.content_columns(table)
        for row in dataset.table_rows(table):
            values = dataset.row_dict(table, row)
            toks = set(tokenize(table))
            for c in content:
                toks.update(tokenize(values[c]))
            node = GraphNode(table, row[pk], {c: values[c] for c in content}, frozenset(toks))
            nodes[node.id] = node
    adjacency: dict[NodeId, set[NodeId]] = {n: set() for n in nodes}
    for fk in schema.fk_edges:
        src = schema.table(fk.table)
        dst = schema.table(fk.ref_table)
        col = src.index_of(fk.column)
        ref = dst.index_of(fk.ref_column)
        by_value = defaultdict(list)
        for row in dataset.table_rows(fk.ref_table):
            by_value[row[ref]].append((fk.ref_table, row[dst.index_of(dst.primary_key)]))
        for row in dataset.table_rows(fk.table):
            a = (fk.table, row[src.index_of(src.primary_key)])
            for b in by_value.get(row[col], ()):
                if a != b:
                    adjacency[a].add(b)
                    adjacency[b].add(a)
    return DataGraph(nodes, adjacency)


def _spanning_edges(graph: DataGraph, nodes: frozenset) -> tuple:
    start = min(nodes)
    seen = {start}
    queue = deque([start])
    edges = []
    while queue:
        cur = queue.popleft()
        for nxt in sorted(graph.adjacency[cur] & nodes):
            if nxt not in seen:
                seen.add(nxt)
                edges.append((cur, nxt))
                queue.append(nxt)
    return tuple(edges)


def spanning_tree_search(
    query: str, graph: DataGraph, limit: int = 10, max_size: int = 6
) -> list[TreeResult]:
    """Minimal connected tuple sets covering every query keyword.

    Connected sets grow level by level from the nodes of the rarest keyword;
    covers are never extended, so every set of size ``s`` that covers is
    minimal unless it contains a smaller cover found earlier.
    """
    keywords = sorted(set(tokenize(query)))
    if not keywords or limit < 1:
        return []
    hits = {k: set(graph.keyword_nodes(k)) for k in keywords}
    if any(not h for h in hits.values()):
        return []
    seeds = min(hits.values(), key=len)

    def covers(nodes: frozenset) -> bool:
        return all(h & nodes for h in hits.values())

    found: list[frozenset] = []
    level = {frozenset([s]) for s in seeds}
    size = 1
    while level and size <= max_size:
        covering = sorted(
            (s for s in level if covers(s) and not any(f < s for f in found)),
            key=sorted,
        )
        found.extend(covering)
        if len(found) >= limit:
            break
        level = {
            s | {n}
            for s in level
            if not covers(s)
            for v in s
            for n in graph.adjacency[v] - s
        }
        size += 1
    found.sort(key=lambda s: (len(s), sorted(s)))
    return [
        TreeResult(tuple(sorted(s)), _spanning_edges(graph, s)) for s in found[:limit]
    ]


# -- XML view ---------------------------------------------------------------


@dataclass(frozen=True)
class Nesting:
    """Root table plus parent -> children nesting along FK edges."""

    root: str
    children: Mapping[str, Sequence[str]]


MOVIE_NESTING = Nesting("movie", {"movie": ("cast", "genre", "locations", "info")})


class NestingError(IntegrityError):
    pass


@dataclass
class XmlNode:
    id: int
    tag: str
    parent: int | None
    depth: int
    text: str = ""
    element: str | None = None
    children: list[int] = field(default_factory=list)

    @property
    def tokens(self) -> set[str]:
        if self.parent is None:  # synthetic root carries no data
            return set()
        return set(tokenize(self.tag)) | set(tokenize(self.text))


@dataclass
class XmlTree:
    nodes: list[XmlNode]

    @property
    def root(self) -> XmlNode:
        return self.nodes[0]

    def subtree(self, node_id: int) -> list[int]:
        out = []
        stack = [node_id]
        while stack:
            cur = stack.pop()
            out.append(cur)
            stack.extend(reversed(self.nodes[cur].children))
        return out

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when ``a`` is a proper ancestor of ``b``."""
        p = self.nodes[b].parent
        while p is not None:
            if p == a:
                return True
            p = self.nodes[p].parent
        return False

    def dump(self) -> str:
        lines = []
        for node_id in self.subtree(0):
            node = self.nodes[node_id]
            lines.append("  " * node.depth + node.tag)
            if node.text:
                lines.append("  " * (node.depth + 1) + f"#text {node.text}")
        return "\n".join(lines) + "\n"


def _check_nesting(schema: Schema, nesting: Nesting) -> dict[str, tuple[str, str]]:
    """Validate ``nesting``; returns child -> (fk column, parent key column)."""
    schema.table(nesting.root)
    parent_of: dict[str, str] = {}
    for parent, kids in nesting.children.items():
        schema.table(parent)
        for kid in kids:
            schema.table(kid)
            if kid == nesting.root or kid in parent_of:
                raise NestingError(f"nesting is not a tree: {kid!r} has two parents")
            parent_of[kid] = parent
    reached = {nesting.root}
    frontier = [nesting.root]
    while frontier:
        for kid in nesting.children.get(frontier.pop(), ()):
            reached.add(kid)
            frontier.append(kid)
    if (set(parent_of) | set(nesting.children)) - reached:
        raise NestingError("nesting is not a tree: unreachable or cyclic tables")
    links = {}
    for kid, parent in parent_of.items():
        fks = [fk for fk in schema.fk_edges if fk.table == kid and fk.ref_table == parent]
        if not fks:
            raise NestingError(f"no foreign key from {kid} to {parent}")
        links[kid] = (fks[0].column, fks[0].ref_column)
    return links


def to_xml_tree(dataset: Dataset, nesting: Nesting = MOVIE_NESTING) -> XmlTree:
    """Nest rows along FK edges; references to other tables are inlined as text."""
    schema = dataset.schema
    links = _check_nesting(schema, nesting)
    nested = {nesting.root, *links}
    nodes: list[XmlNode] = [XmlNode(0, "root", None, 0)]

    def add(tag: str, parent: int, text: str = "", element: str | None = None) -> int:
        node = XmlNode(len(nodes), tag, parent, nodes[parent].depth + 1, text, element)
        nodes.append(node)
        nodes[parent].children.append(node.id)
        return node.id

    refs: dict[tuple[str, str], tuple[str, dict, list[str]]] = {}
    for fk in schema.fk_edges:
        if fk.table in nested and fk.ref_table not in nested:
            dst = schema.table(fk.ref_table)
            key = dst.index_of(fk.ref_column)
            rows = {r[key]: dataset.row_dict(fk.ref_table, r) for r in dataset.table_rows(fk.ref_table)}
            refs[(fk.table, fk.column)] = (fk.ref_table, rows, schema.text_columns(fk.ref_table))

    def emit_row(table: str, row: tuple, parent: int) -> None:
        values = dataset.row_dict(table, row)
        me = add(table, parent, element=table)
        content = set(schema.content_columns(table))
        for col in schema.table(table).column_names:
            if col in content:
                add(col, me, str(values[col]), f"{table}.{col}")
            elif (table, col) in refs:
                ref_table, ref_rows, text_cols = refs[(table, col)]
                target = ref_rows.get(values[col])
                if target is not None and text_cols:
                    text = " ".join(str(target[c]) for c in text_cols)
                    add(ref_table, me, text, f"{ref_table}.{text_cols[0]}")
        pk = values[schema.table(table).primary_key]
        for kid in nesting.children.get(table, ()):
            fk_col, parent_col = links[kid]
            if parent_col != schema.table(table).primary_key:
                match = values[parent_col]
            else:
                match = pk
            pos = schema.table(kid).index_of(fk_col)
            kid_pk = schema.table(kid).index_of(schema.table(kid).primary_key)
            for r in sorted(dataset.table_rows(kid), key=lambda r: r[kid_pk]):
                if r[pos] == match:
                    emit_row(kid, r, me)

    root_pk = schema.table(nesting.root).index_of(schema.table(nesting.root).primary_key)
    for row in sorted(dataset.table_rows(nesting.root), key=lambda r: r[root_pk]):
        emit_row(nesting.root, row, 0)
    return XmlTree(nodes)


def _keyword_masks(tree: XmlTree, keywords: Sequence[str]) -> list[int]:
    """Bitmask of keywords present in each node's subtree (post-order)."""
    masks = [0] * len(tree.nodes)
    for node in reversed(tree.nodes):  # children always have larger ids
        toks = node.tokens
        m = sum(1 << i for i, k in enumerate(keywords) if k in toks)
        for c in node.children:
            m |= masks[c]
        masks[node.id] = m
    return masks


def lca_search(query: str, tree: XmlTree) -> list[TreeResult]:
    """Smallest elements whose subtree holds every keyword, in document order."""
    keywords = sorted(set(tokenize(query)))
    if not keywords:
        return []
    full = (1 << len(keywords)) - 1
    masks = _keyword_masks(tree, keywords)
    out = []
    for node in tree.nodes:
        if masks[node.id] == full and not any(masks[c] == full for c in node.children):
            out.append(TreeResult((node.id,), (), node.id))
    return out


def _lca(tree: XmlTree, a: int, b: int) -> int:
    na, nb = tree.nodes[a], tree.nodes[b]
    while na.depth > nb.depth:
        na = tree.nodes[na.parent]  # type: ignore[index]
    while nb.depth > na.depth:
        nb = tree.nodes[nb.parent]  # type: ignore[index]
    while na.id != nb.id:
        na = tree.nodes[na.parent]  # type: ignore[index]
        nb = tree.nodes[nb.parent]  # type: ignore[index]
    return na.id


def mlca_search(query: str, tree: XmlTree) -> list[TreeResult]:
    """LCA results reachable from a combination of mutually nearest matches.

    A combination (one match per keyword) is meaningful when, for every pair
    of its matches, no other match of either keyword has a strictly deeper
    LCA with the partner.
    """
    keywords = sorted(set(tokenize(query)))
    lcas = lca_search(query, tree)
    if len(keywords) < 2 or not lcas:
        return lcas
    matches = [[n.id for n in tree.nodes if k in n.tokens] for k in keywords]
    depth = [n.depth for n in tree.nodes]
    # best[i][m][j]: deepest LCA depth between match m of keyword i and any match of keyword j
    best: list[dict[int, list[int]]] = []
    for i, mi in enumerate(matches):
        best.append({
            m: [max(depth[_lca(tree, m, o)] for o in matches[j]) if j != i else 0
                for j in range(len(keywords))]
            for m in mi
        })
    meaningful_roots = set()
    for combo in itertools.product(*matches):
        ok = True
        for i, j in itertools.combinations(range(len(combo)), 2):
            d = depth[_lca(tree, combo[i], combo[j])]
            if best[i][combo[i]][j] > d or best[j][combo[j]][i] > d:
                ok = False
                break
        if ok:
            root = combo[0]
            for m in combo[1:]:
                root = _lca(tree, root, m)
            meaningful_roots.add(root)
    return [r for r in lcas if r.root in meaningful_roots]
