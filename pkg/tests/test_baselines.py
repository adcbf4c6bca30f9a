from __future__ import annotations

import itertools

import pytest

from oracles import exhaustive_lca, exhaustive_minimal_covers, exhaustive_mlca
from qunits.baselines import (
    MOVIE_NESTING,
    Nesting,
    NestingError,
    lca_search,
    mlca_search,
    spanning_tree_search,
    to_data_graph,
    to_xml_tree,
)
from qunits.fixtures import mini_imdb_schema
from qunits.store import finalize, load_schema


def _node(tree, tag, text):
    return next(n.id for n in tree.nodes if n.tag == tag and n.text == text)


def _ancestor_of_tag(tree, node_id, tag):
    while tree.nodes[node_id].tag != tag:
        node_id = tree.nodes[node_id].parent
    return node_id


# -- data graph -------------------------------------------------------------


def test_graph_counts(dataset, graph):
    assert len(graph.nodes) == dataset.tuple_count
    # each cast row links a person and a movie; each genre, location and plot links a movie
    assert len(graph.edges) == 4 * 2 + 3 + 3 + 3


def test_graph_without_fks():
    schema = load_schema("table t\ncol id int pk\ncol v text\n")
    graph = to_data_graph(finalize(schema, {"t": [(1, "a"), (2, "b")]}))
    assert len(graph.nodes) == 2 and graph.edges == set()


def test_cast_node_degree(graph):
    assert graph.adjacency[("cast", 1)] == {("movie", 1), ("person", 1)}


def test_spanning_tree_three_nodes(graph):
    results = spanning_tree_search("hamill star wars", graph)
    assert results[0].size == 3
    assert set(results[0].nodes) == {("person", 1), ("cast", 1), ("movie", 1)}
    assert len(results[0].edges) == 2


def test_spanning_tree_role_shortcut(graph):
    # clooney's cast row carries the role "batman", so the tuple pair suffices
    results = spanning_tree_search("clooney batman", graph)
    assert results[0].nodes == (("cast", 4), ("person", 4))


def test_spanning_tree_single_tuple(graph):
    results = spanning_tree_search("mark hamill", graph)
    assert [r.nodes for r in results] == [(("person", 1),)]


def test_spanning_tree_absent(graph):
    assert spanning_tree_search("zzz", graph) == []


def test_spanning_tree_minimal_by_deletion(graph):
    for q in ("hamill fisher", "tunisia fiction", "ford science fiction"):
        results = spanning_tree_search(q, graph, limit=50, max_size=5)
        assert results, q
        for r in results:
            smaller = exhaustive_minimal_covers(q, graph, r.size - 1)
            assert not any(set(c) < set(r.nodes) for c in smaller)


def test_spanning_tree_matches_oracle(graph):
    for q in ("hamill fisher", "tunisia fiction", "star wars", "drama fiji", "actor batman"):
        got = [r.nodes for r in spanning_tree_search(q, graph, limit=1000, max_size=4)]
        assert got == exhaustive_minimal_covers(q, graph, 4)


# -- XML --------------------------------------------------------------------


def test_xml_every_tuple_once(dataset, xml_tree):
    rows = [n for n in xml_tree.nodes if n.parent is not None and n.element in dataset.schema.table_names]
    nested = ("movie", "cast", "genre", "locations", "info")
    assert len(rows) == sum(dataset.cardinality(t) for t in nested)


def test_xml_movie_contains_children(xml_tree):
    movie = _ancestor_of_tag(xml_tree, _node(xml_tree, "title", "star wars"), "movie")
    tags = [xml_tree.nodes[c].tag for c in xml_tree.nodes[movie].children]
    assert tags == ["title", "year", "cast", "cast", "cast", "genre", "locations", "info"]


def test_xml_person_inlined(xml_tree):
    leaf = _node(xml_tree, "person", "mark hamill")
    assert xml_tree.nodes[xml_tree.nodes[leaf].parent].tag == "cast"


def test_xml_empty_dataset():
    tree = to_xml_tree(finalize(mini_imdb_schema(), {}), MOVIE_NESTING)
    assert len(tree.nodes) == 1


def test_xml_nesting_not_a_tree(dataset):
    bad = Nesting("movie", {"movie": ("cast",), "genre": ("cast",)})
    with pytest.raises(NestingError):
        to_xml_tree(dataset, bad)


def test_xml_dump(xml_tree):
    lines = xml_tree.dump().splitlines()
    assert lines[0] == "root"
    assert "      #text star wars" in lines


def test_lca_same_movie(xml_tree):
    results = lca_search("tunisia fiction", xml_tree)
    movie = _ancestor_of_tag(xml_tree, _node(xml_tree, "title", "star wars"), "movie")
    assert [r.root for r in results] == [movie]


def test_lca_single_leaf(xml_tree):
    results = lca_search("los angeles", xml_tree)
    assert [r.root for r in results] == [_node(xml_tree, "place", "los angeles")]


def test_lca_absent(xml_tree):
    assert lca_search("zzz", xml_tree) == []


def test_lca_not_nested(xml_tree):
    for q in ("actor", "star", "drama fiji", "ford"):
        roots = [r.root for r in lca_search(q, xml_tree)]
        for a, b in itertools.permutations(roots, 2):
            assert not xml_tree.is_ancestor(a, b)


def _two_movies():
    schema = mini_imdb_schema()
    rows = {
        "movie": [(1, "first", 2000), (2, "second", 2001)],
        "genre": [(1, 1, "alpha beta"), (2, 2, "beta")],
    }
    return to_xml_tree(finalize(schema, rows), MOVIE_NESTING)


def test_mlca_two_movies():
    tree = _two_movies()
    movie1 = _ancestor_of_tag(tree, _node(tree, "title", "first"), "movie")
    assert [r.root for r in mlca_search("alpha beta", tree)] == [_node(tree, "name", "alpha beta")]
    # keywords in different children of movie 1; the second movie's "beta" pairs only at the root
    assert [r.root for r in mlca_search("first beta", tree)] == [movie1]
    assert [r.root for r in lca_search("first beta", tree)] == [movie1]


def test_mlca_drops_non_meaningful_lca():
    # three genres pair the keywords cyclically, so every combination meeting
    # at the movie has a match with a strictly closer partner
    rows = {
        "movie": [(1, "only", 2000)],
        "genre": [(1, 1, "alpha beta"), (2, 1, "beta gamma"), (3, 1, "gamma alpha")],
    }
    tree = to_xml_tree(finalize(mini_imdb_schema(), rows), MOVIE_NESTING)
    movie = _ancestor_of_tag(tree, _node(tree, "title", "only"), "movie")
    assert [r.root for r in lca_search("alpha beta gamma", tree)] == [movie]
    assert mlca_search("alpha beta gamma", tree) == []
    assert exhaustive_mlca("alpha beta gamma", tree) == []


def test_mlca_single_keyword(xml_tree):
    assert mlca_search("actor", xml_tree) == lca_search("actor", xml_tree)


def test_mlca_absent(xml_tree):
    assert mlca_search("zzz star", xml_tree) == []


def test_mlca_results_contain_keywords(xml_tree):
    for q in ("actor star", "drama fiji", "ford hamill"):
        for r in mlca_search(q, xml_tree):
            assert r.root in exhaustive_lca(q, xml_tree)


def test_xml_oracles(xml_tree):
    for q in ("actor star", "drama fiji", "ford hamill", "batman", "wars fiction tunisia"):
        assert [r.root for r in lca_search(q, xml_tree)] == exhaustive_lca(q, xml_tree)
        assert [r.root for r in mlca_search(q, xml_tree)] == exhaustive_mlca(q, xml_tree)


def test_deterministic(graph, xml_tree):
    assert spanning_tree_search("hamill fisher", graph) == spanning_tree_search("hamill fisher", graph)
    assert lca_search("actor", xml_tree) == lca_search("actor", xml_tree)
    assert mlca_search("actor star", xml_tree) == mlca_search("actor star", xml_tree)
