"""One check per acceptance criterion; the summary hook prints a PASS/FAIL line each."""

from __future__ import annotations

import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    brute_force_groups,
    exhaustive_lca,
    exhaustive_minimal_covers,
    exhaustive_mlca,
)
from qunits.baselines import (
    MOVIE_NESTING,
    lca_search,
    mlca_search,
    spanning_tree_search,
    to_data_graph,
    to_xml_tree,
)
from qunits.bench import (
    GoldSpec,
    ResultSummary,
    extract_templates,
    generate_query_log,
    load_gold,
    make_benchmark,
    mlca_adapter,
    qunit_adapter,
    query_shape,
    run_comparison,
    score_result,
    spanning_tree_adapter,
    xml_adapter,
)
from qunits.derive import (
    DerivationConfig,
    derive_from_evidence,
    derive_from_log,
    derive_from_schema,
    format_document,
    load_documents,
    queriability,
    read_query_log,
    rollup,
    signature,
)
from qunits.fixtures import (
    DOCS_DIR,
    GOLD_PATH,
    MANUAL_DEFS_PATH,
    QUERY_LOG_PATH,
    mini_imdb,
    person_page,
    synthetic_imdb,
    synthetic_person_pages,
)
from qunits.qunit import GroupContent, QunitInstance, enumerate_instances, instantiate, load_definitions
from qunits.search import build_index, search, segment
from qunits.store import build_value_index, finalize, tokenize

ROLLUP_LOG = [("george clooney actor", 1), ("george clooney batman", 1), ("tom hanks castaway", 1)]
PROPERTY_CASES = 1000


def all_definitions(dataset, value_index):
    defs = list(load_definitions([MANUAL_DEFS_PATH], dataset.schema))
    cfg = DerivationConfig()
    defs += derive_from_schema(dataset, cfg)
    defs += derive_from_log(generate_query_log(dataset), dataset, cfg, value_index)
    defs += derive_from_evidence(synthetic_person_pages(dataset), dataset, cfg, value_index)
    return defs


# -- 1 ----------------------------------------------------------------------


@pytest.mark.criterion(1, "'star wars cast' returns cast:star wars at rank 1 in < 1 s")
def test_worked_example_rank_one(dataset, value_index, record_property):
    start = time.perf_counter()
    defs = load_definitions([MANUAL_DEFS_PATH], dataset.schema)
    index = build_index([i for d in defs for i in enumerate_instances(d, dataset)])
    results = search("star wars cast", index, defs, value_index)
    elapsed = time.perf_counter() - start
    record_property("detail", f"rank1={results[0].instance_id}, {elapsed * 1000:.1f} ms")
    assert results[0].definition_id == "cast"
    assert results[0].anchor_value == "star wars"
    assert elapsed < 1.0


# -- 2 ----------------------------------------------------------------------


@pytest.mark.criterion(2, "rollup links movie.title:2, cast.role:1; person qunit groups in that order")
def test_rollup_example(dataset, value_index, record_property):
    links = rollup(ROLLUP_LOG, dataset, value_index)
    person = links["person"].as_dict()
    defs = derive_from_log(ROLLUP_LOG, dataset, DerivationConfig(), value_index)
    person_def = next(d for d in defs if d.base.anchor == "person.name")
    order = [c for g in person_def.conversion.groups for c in g.columns]
    record_property("detail", f"links={person}, groups={order}")
    assert person == {"movie.title": 2, "cast.role": 1}
    assert order == ["movie.title", "cast.role"]


# -- 3 ----------------------------------------------------------------------


@pytest.mark.criterion(3, "person page signature (person.name:1)(movie.title:40); 10 pages -> person qunit")
def test_signature_example(dataset, value_index, record_property):
    titles = sorted(set(dataset.column_values("movie.title")))
    rng = random.Random(0)
    page = person_page("george clooney", [rng.choice(titles) for _ in range(40)])
    sig = signature(page, value_index)
    pages = synthetic_person_pages(dataset, n_pages=10, titles_per_page=40)
    defs = derive_from_evidence(pages, dataset, DerivationConfig(), value_index)
    record_property("detail", f"signature={sig}, derived={[d.id for d in defs]}")
    assert str(sig) == "(person.name:1)(movie.title:40)"
    assert len(defs) == 1
    (d,) = defs
    assert d.base.anchor == "person.name"
    assert d.conversion.label == "person"
    assert [g.columns for g in d.conversion.groups] == [("movie.title",)]


# -- 4 ----------------------------------------------------------------------


@pytest.mark.criterion(4, "benchmark sizes: 14x2 -> 28 on a rich log, 3x2 -> 6 on the fixture")
def test_benchmark_arithmetic(dataset, value_index, record_property):
    rich = synthetic_imdb(n_people=60, n_movies=30, seed=1)
    rich_vi = build_value_index(rich)
    rich_log = generate_query_log(rich, n_distinct=200)
    big = make_benchmark(extract_templates(rich_log, rich_vi), rich_log, rich_vi,
                         top_templates=14, per_template=2, seed=0)
    log = read_query_log(QUERY_LOG_PATH.read_text(encoding="utf-8"))
    small = make_benchmark(extract_templates(log, value_index), log, value_index, seed=0)
    record_property("detail", f"rich={len(big)}, desk={len(small)}")
    assert len(big) == 28
    assert len(small) == 6


# -- 5 ----------------------------------------------------------------------


def _join_fixtures():
    yield "mini-imdb", mini_imdb()
    for seed in range(4):
        yield f"synthetic-{seed}", synthetic_imdb(n_people=8, n_movies=4, cast_per_movie=3, seed=seed)


def _baseline_fixtures():
    yield mini_imdb()
    for seed in (0, 1):
        yield synthetic_imdb(n_people=6, n_movies=3, cast_per_movie=2, seed=seed)


@pytest.mark.criterion(5, "instantiate equals the cross-product oracle for every definition and anchor")
def test_join_oracle_equivalence(record_property):
    start = time.perf_counter()
    checked = 0
    for name, ds in _join_fixtures():
        assert ds.tuple_count <= 50, name
        vi = build_value_index(ds)
        for defn in all_definitions(ds, vi):
            for anchor in sorted(set(ds.column_values(defn.base.anchor))):
                inst = instantiate(defn, anchor, ds)
                expected = brute_force_groups(defn, ds, anchor)
                assert [list(g.rows) for g in inst.groups] == expected, (name, defn.id, anchor)
                checked += 1
    elapsed = time.perf_counter() - start
    record_property("detail", f"{checked} instances, {elapsed:.2f} s")
    assert elapsed < 10.0


# -- 6 ----------------------------------------------------------------------


def _baseline_queries(ds, n_pairs: int, seed: int) -> list[str]:
    vocab = sorted({t for n in to_data_graph(ds).nodes.values() for t in n.tokens})
    rng = random.Random(seed)
    pairs = [" ".join(rng.sample(vocab, 2)) for _ in range(n_pairs)]
    triples = [" ".join(rng.sample(vocab, 3)) for _ in range(n_pairs // 4)]
    fixed = ["hamill star wars", "clooney batman", "mark hamill", "zzz", "star wars actor"]
    return vocab + pairs + triples + fixed


@pytest.mark.criterion(6, "spanning-tree, LCA and MLCA agree with exhaustive enumerators")
def test_baseline_oracle_equivalence(record_property):
    checked = 0
    for seed, ds in enumerate(_baseline_fixtures()):
        assert ds.tuple_count <= 30
        graph = to_data_graph(ds)
        tree = to_xml_tree(ds, MOVIE_NESTING)
        assert len(tree.nodes) <= 200
        for q in _baseline_queries(ds, n_pairs=40, seed=seed):
            got = [r.nodes for r in spanning_tree_search(q, graph, limit=10_000, max_size=4)]
            assert got == exhaustive_minimal_covers(q, graph, max_size=4), q
            assert [r.root for r in lca_search(q, tree)] == exhaustive_lca(q, tree), q
            assert [r.root for r in mlca_search(q, tree)] == exhaustive_mlca(q, tree), q
            checked += 1
    record_property("detail", f"{checked} queries x 3 algorithms")


# -- 7 ----------------------------------------------------------------------


def _random_instances(rng: random.Random, vocab: list[str]) -> list[QunitInstance]:
    out = []
    for i in range(rng.randint(2, 8)):
        rows = tuple((" ".join(rng.choices(vocab, k=rng.randint(1, 3))),) for _ in range(rng.randint(0, 4)))
        out.append(QunitInstance("d", f"a{i}", "lbl", "t.c", (GroupContent("g", ("t.c",), rows),)))
    return out


def _add_occurrence(inst: QunitInstance, token: str) -> QunitInstance:
    g = inst.groups[0]
    return QunitInstance(
        inst.definition_id, inst.anchor_value, inst.label, inst.anchor_column,
        (GroupContent(g.name, g.columns, g.rows + ((token,),)),),
    )


@pytest.mark.criterion(7, "tf-idf monotonicity over >= 1000 seeded cases")
def test_property_tfidf_monotonicity(record_property):
    rng = random.Random(7)
    vocab = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
    for _ in range(PROPERTY_CASES):
        instances = _random_instances(rng, vocab)
        target = rng.randrange(len(instances))
        index = build_index(instances)
        present = sorted(index.term_freqs[instances[target].id])
        query_tokens = rng.sample(vocab, rng.randint(1, 3))
        candidates = [t for t in query_tokens if t in present]
        if not candidates:
            continue
        token = rng.choice(candidates)
        before = index.tfidf(query_tokens, instances[target].id)
        rank_before = sorted(index.instances, key=lambda i: -index.tfidf(query_tokens, i)).index(instances[target].id)
        bumped = list(instances)
        bumped[target] = _add_occurrence(instances[target], token)
        after_index = build_index(bumped)
        after = after_index.tfidf(query_tokens, instances[target].id)
        assert after > before
        scores = {i: after_index.tfidf(query_tokens, i) for i in after_index.instances}
        strictly_better = sum(s > scores[instances[target].id] for s in scores.values())
        assert strictly_better <= rank_before
    record_property("detail", f"{PROPERTY_CASES} cases")


def _random_query(rng: random.Random, vi, noise: list[str]) -> str:
    keys = sorted(" ".join(k) for k in vi.keys())
    parts = [rng.choice(keys) if rng.random() < 0.6 else rng.choice(noise) for _ in range(rng.randint(1, 5))]
    return " ".join(parts)


@pytest.mark.criterion(7, "segmentation partition property over >= 1000 seeded cases")
def test_property_segmentation_partition(dataset, value_index, record_property):
    rng = random.Random(11)
    noise = ["movies", "plot", "cast", "zzz", "year", "the", "names"]
    segs_checked = 0
    for _ in range(PROPERTY_CASES):
        q = _random_query(rng, value_index, noise)
        tokens = tokenize(q)
        for seg in segment(q, value_index):
            pos = 0
            for s in seg.segments:
                assert s.start == pos and s.end > s.start
                assert s.text == " ".join(tokens[s.start:s.end])
                pos = s.end
            assert pos == len(tokens)
            segs_checked += 1
    record_property("detail", f"{PROPERTY_CASES} queries, {segs_checked} segmentations")


@pytest.mark.criterion(7, "search determinism over >= 1000 seeded cases")
def test_property_search_determinism(dataset, value_index, manual_defs, index, record_property):
    rng = random.Random(13)
    noise = ["movies", "plot", "cast", "trailer", "genre"]
    rebuilt = build_index([i for d in manual_defs for i in enumerate_instances(d, dataset)])
    for _ in range(PROPERTY_CASES):
        q = _random_query(rng, value_index, noise)
        first = search(q, index, manual_defs, value_index)
        assert first == search(q, index, manual_defs, value_index)
        assert first == search(q, rebuilt, manual_defs, value_index)
    record_property("detail", f"{PROPERTY_CASES} queries")


def _scaled(ds, factor: int):
    """Each table repeated ``factor`` times under fresh ids; FKs keep valid targets."""
    schema = ds.schema
    rows = {}
    for t in schema.table_names:
        pk = schema.table(t).index_of(schema.table(t).primary_key)
        base = max((r[pk] for r in ds.table_rows(t)), default=0)
        rows[t] = [
            tuple(v + k * base if i == pk else v for i, v in enumerate(r))
            for k in range(factor)
            for r in ds.table_rows(t)
        ]
    return finalize(schema, rows)


@pytest.mark.criterion(7, "queriability scale invariance over >= 1000 seeded cases")
def test_property_queriability_scale_invariance(record_property):
    rng = random.Random(17)
    for case in range(PROPERTY_CASES):
        ds = synthetic_imdb(
            n_people=rng.randint(1, 12), n_movies=rng.randint(1, 8),
            cast_per_movie=rng.randint(0, 4), seed=case,
        )
        factor = rng.randint(2, 5)
        before, after = queriability(ds), queriability(_scaled(ds, factor))
        assert before.ranking() == after.ranking()
        for t, v in before.tables.items():
            assert after.tables[t] == pytest.approx(v)
    record_property("detail", f"{PROPERTY_CASES} datasets")


# -- 8 ----------------------------------------------------------------------


@pytest.mark.criterion(8, "qunit mean rubric score >= each baseline on the 6-query benchmark")
def test_benchmark_ordering(dataset, value_index, manual_defs, defs_by_id, index, graph, xml_tree, record_property):
    log = read_query_log(QUERY_LOG_PATH.read_text(encoding="utf-8"))
    benchmark = make_benchmark(
        extract_templates(log, value_index), log, value_index, seed=0,
        gold=load_gold(GOLD_PATH), defs=defs_by_id,
    )
    assert len(benchmark) == 6 and all(q.gold for q in benchmark.queries)
    report = run_comparison(benchmark, [
        ("qunits", qunit_adapter(index, manual_defs, value_index)),
        ("spanning_tree", spanning_tree_adapter(graph, dataset.schema)),
        ("lca", xml_adapter(xml_tree)),
        ("mlca", mlca_adapter(xml_tree)),
    ])
    means = report.means
    record_property("detail", ", ".join(f"{a}={m:.3f}" for a, m in means.items()))
    for name in ("spanning_tree", "lca", "mlca"):
        assert means["qunits"] >= means[name]


# -- 9 ----------------------------------------------------------------------

ELEMENTS = ["person.name", "movie.title", "cast.role", "genre.name", "info.plot"]
element_sets = st.frozensets(st.sampled_from(ELEMENTS))
anchors = st.frozensets(st.tuples(st.sampled_from(ELEMENTS), st.sampled_from(["a", "b", "A "])))


@st.composite
def gold_specs(draw):
    required = draw(element_sets)
    forbidden = draw(element_sets) - required
    value = draw(st.one_of(st.none(), st.sampled_from(["a", "b"])))
    return GoldSpec("d", draw(st.sampled_from(ELEMENTS)), value, required, forbidden)


@pytest.mark.criterion(9, "score_result is total over {0, 0.5, 1}")
@settings(max_examples=PROPERTY_CASES, deadline=None)
@given(result=st.one_of(st.none(), st.builds(ResultSummary, element_sets, anchors)), gold=gold_specs())
def test_rubric_totality(result, gold):
    assert score_result(result, gold) in (0.0, 0.5, 1.0)


@pytest.mark.criterion(9, "the three tagged rubric examples score 1.0, 0.5 and 0")
def test_rubric_examples(record_property):
    gold = GoldSpec("cast", "movie.title", "star wars", frozenset({"person.name", "cast.role"}))
    anchor = frozenset({("movie.title", "star wars")})
    exact = ResultSummary(frozenset({"movie.title", "person.name", "cast.role"}), anchor)
    missing = ResultSummary(frozenset({"movie.title", "person.name"}), anchor)
    wrong = ResultSummary(exact.elements, frozenset({("movie.title", "batman")}))
    scores = (score_result(exact, gold), score_result(missing, gold), score_result(wrong, gold))
    record_property("detail", f"scores={scores}")
    assert scores == (1.0, 0.5, 0.0)


# -- 10 ---------------------------------------------------------------------


@pytest.mark.criterion(10, "synthetic log shape within 2 points of the target proportions")
def test_query_log_shape(dataset, value_index, record_property):
    shapes = []
    for seed in range(5):
        log = generate_query_log(dataset, seed=seed)
        shapes.append(query_shape(log, value_index, dataset.schema))
    shipped = query_shape(read_query_log(QUERY_LOG_PATH.read_text(encoding="utf-8")), value_index, dataset.schema)
    shapes.append(shipped)
    record_property("detail", ", ".join(f"{k}={v:.2f}" for k, v in shipped.items()))
    for shape in shapes:
        assert shape["single_entity"] >= 0.36
        assert abs(shape["entity_attribute"] - 0.20) <= 0.02
        assert abs(shape["multi_entity"] - 0.02) <= 0.02
        assert abs(shape["complex"] - 0.02) <= 0.02


def test_docs_fixture_matches_generator(dataset):
    # The shipped evidence pages are the generator's default output.
    shipped = [format_document(d) for d in load_documents(DOCS_DIR)]
    assert shipped == [format_document(p) for p in synthetic_person_pages(dataset)]
