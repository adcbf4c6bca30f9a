"""Command-line entry point: ingest, derive, index, search, explain, bench.

Every stage reads its inputs from files and writes its outputs to the work
directory, so a later command never depends on in-process state.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from qunits import bench, fixtures
from qunits.baselines import MOVIE_NESTING, to_data_graph, to_xml_tree
from qunits.derive import (
    DerivationConfig,
    derive_from_evidence,
    derive_from_log,
    derive_from_schema,
    load_documents,
    read_query_log,
)
from qunits.errors import IntegrityError, NotFoundError, ParseError, QunitsError
from qunits.qunit import (
    QunitDefinition,
    QunitInstance,
    enumerate_instances,
    format_definitions,
    load_definitions,
)
from qunits.search import InvertedIndex, SearchConfig, build_index, explain, search
from qunits.store import Dataset, ValueIndex, build_value_index, load_dataset, load_schema

COMMANDS = ("ingest", "derive", "index", "search", "bench", "explain")
STRATEGIES = ("schema", "log", "evidence")
EXIT_CODES = {ParseError: 2, IntegrityError: 3, NotFoundError: 4}
FAILURE_CLASS = {ParseError: "parse error", IntegrityError: "integrity error", NotFoundError: "not found"}


@dataclass(frozen=True)
class CliConfig:
    schema: Path = fixtures.SCHEMA_PATH
    data_dir: Path = fixtures.DATA_DIR
    query_log: Path = fixtures.QUERY_LOG_PATH
    docs: Path = fixtures.DOCS_DIR
    defs: tuple[Path, ...] = ()
    gold: Path = fixtures.GOLD_PATH
    work_dir: Path = Path(".qunits")
    derivation: DerivationConfig = field(default_factory=DerivationConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    seed: int = 0

    @property
    def derived_dir(self) -> Path:
        return self.work_dir / "defs"

    @property
    def index_dir(self) -> Path:
        return self.work_dir / "index"

    def definition_paths(self) -> list[Path]:
        """Explicit ``--defs``, else the bundled manual set plus anything derived."""
        if self.defs:
            return list(self.defs)
        paths = [fixtures.MANUAL_DEFS_PATH]
        if self.derived_dir.is_dir():
            paths.append(self.derived_dir)
        return paths


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise NotFoundError(f"{what} {path} does not exist")
    return path


def _dataset(cfg: CliConfig) -> Dataset:
    schema_text = _require(cfg.schema, "schema file").read_text(encoding="utf-8")
    return load_dataset(load_schema(schema_text), _require(cfg.data_dir, "data directory"))


# -- commands ---------------------------------------------------------------


def cmd_ingest(cfg: CliConfig, out) -> None:
    ds = _dataset(cfg)
    for table in ds.schema.table_names:
        print(f"{table}\t{ds.cardinality(table)}", file=out)
    print(f"total\t{ds.tuple_count}", file=out)


def cmd_derive(cfg: CliConfig, strategy: str, out) -> None:
    ds = _dataset(cfg)
    vi = build_value_index(ds)
    chosen = STRATEGIES if strategy == "all" else (strategy,)
    cfg.derived_dir.mkdir(parents=True, exist_ok=True)
    for name in chosen:
        if name == "schema":
            defs = derive_from_schema(ds, cfg.derivation)
        elif name == "log":
            text = _require(cfg.query_log, "query log").read_text(encoding="utf-8")
            defs = derive_from_log(read_query_log(text), ds, cfg.derivation, vi)
        else:
            defs = derive_from_evidence(
                load_documents(_require(cfg.docs, "documents path")), ds, cfg.derivation, vi
            )
        text = format_definitions(defs)
        (cfg.derived_dir / f"{name}.qunit").write_text(text, encoding="utf-8")
        print(f"# strategy {name}: {len(defs)} definitions", file=out)
        out.write(text)


def cmd_index(cfg: CliConfig, out) -> None:
    ds = _dataset(cfg)
    defs = load_definitions(cfg.definition_paths(), ds.schema)
    instances = [inst for d in defs for inst in enumerate_instances(d, ds)]
    index = build_index(instances)
    cfg.index_dir.mkdir(parents=True, exist_ok=True)
    (cfg.index_dir / "definitions.qunit").write_text(format_definitions(defs), encoding="utf-8")
    with open(cfg.index_dir / "instances.jsonl", "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict(), sort_keys=True) + "\n")
    (cfg.index_dir / "postings.tsv").write_text(index.dump(), encoding="utf-8")
    for d in defs:
        print(f"{d.id}\t{len(index.instance_ids(d.id))}", file=out)
    print(f"instances\t{index.doc_count}\ntokens\t{len(index.df)}", file=out)


@dataclass(frozen=True)
class Loaded:
    dataset: Dataset
    value_index: ValueIndex
    defs: list[QunitDefinition]
    index: InvertedIndex


def _load_index(cfg: CliConfig) -> Loaded:
    path = cfg.index_dir / "instances.jsonl"
    defs_path = cfg.index_dir / "definitions.qunit"
    if not path.exists() or not defs_path.exists():
        raise NotFoundError(f"index not built (run 'index' first; looked in {cfg.index_dir})")
    ds = _dataset(cfg)
    defs = load_definitions([defs_path], ds.schema)
    instances = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        try:
            instances.append(QunitInstance.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"{path} line {lineno}: {exc}") from None
    return Loaded(ds, build_value_index(ds), defs, build_index(instances))


def cmd_search(cfg: CliConfig, query: str, out) -> None:
    ld = _load_index(cfg)
    results = search(query, ld.index, ld.defs, ld.value_index, cfg.search)
    if not results:
        print("no results", file=out)
    for rank, r in enumerate(results, 1):
        print(f"{rank}\t{r.combined:.6f}\t{r.definition_id}\t{r.anchor_value}", file=out)
        for line in ld.index.displays[r.instance_id].splitlines():
            print(f"    {line}", file=out)


def cmd_explain(cfg: CliConfig, query: str, out) -> None:
    ld = _load_index(cfg)
    ex = explain(query, ld.index, ld.defs, ld.value_index, cfg.search)
    print(f"query\t{ex.query}\ntokens\t{' '.join(ex.tokens)}", file=out)
    print("segmentations", file=out)
    for seg in ex.segmentations:
        print(f"  {seg.score:.4f}\t{seg}", file=out)
    print("definitions", file=out)
    for def_id, score in ex.matches:
        print(f"  {score:.6f}\t{def_id}", file=out)
    print(f"results\talpha={cfg.search.alpha}", file=out)
    for rank, r in enumerate(ex.results, 1):
        print(
            f"  {rank}\t{r.combined:.6f}\t{r.definition_id}\t{r.anchor_value}"
            f"\tdefmatch={r.defmatch:.6f}\ttfidf={r.tfidf:.6f}",
            file=out,
        )


def cmd_bench(cfg: CliConfig, out) -> None:
    ld = _load_index(cfg)
    text = _require(cfg.query_log, "query log").read_text(encoding="utf-8")
    query_log = read_query_log(text)
    gold = bench.load_gold(_require(cfg.gold, "gold file"))
    templates = bench.extract_templates(query_log, ld.value_index)
    benchmark = bench.make_benchmark(
        templates, query_log, ld.value_index, seed=cfg.seed,
        gold=gold, defs={d.id: d for d in ld.defs},
    )
    ds = ld.dataset
    tree = to_xml_tree(ds, MOVIE_NESTING)
    algorithms = [
        ("qunits", bench.qunit_adapter(ld.index, ld.defs, ld.value_index, cfg.search)),
        ("spanning_tree", bench.spanning_tree_adapter(to_data_graph(ds), ds.schema)),
        ("lca", bench.xml_adapter(tree)),
        ("mlca", bench.mlca_adapter(tree)),
    ]
    report = bench.run_comparison(benchmark, algorithms)
    out.write(report.format())


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    defaults = CliConfig()
    parser = argparse.ArgumentParser(prog="qunits", description="Qunit-based keyword search.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("query", nargs="*", help="query text for search and explain")
    parser.add_argument("--schema", type=Path, default=defaults.schema)
    parser.add_argument("--data-dir", type=Path, default=defaults.data_dir)
    parser.add_argument("--query-log", type=Path, default=defaults.query_log)
    parser.add_argument("--docs", type=Path, default=defaults.docs)
    parser.add_argument(
        "--defs", type=Path, action="append", default=[],
        help="definition file or directory (repeatable); default: bundled set plus derived",
    )
    parser.add_argument("--gold", type=Path, default=defaults.gold)
    parser.add_argument("--work-dir", type=Path, default=defaults.work_dir)
    parser.add_argument("--strategy", choices=STRATEGIES + ("all",), default="all")
    parser.add_argument("--k1", type=int, default=defaults.derivation.k1)
    parser.add_argument("--k2", type=int, default=defaults.derivation.k2)
    parser.add_argument("--alpha", type=float, default=defaults.search.alpha)
    parser.add_argument("--top-k", type=int, default=defaults.search.top_k)
    parser.add_argument("--seed", type=int, default=defaults.seed)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> CliConfig:
    try:
        derivation = DerivationConfig(k1=args.k1, k2=args.k2)
        search_cfg = SearchConfig(alpha=args.alpha, top_k=args.top_k)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return CliConfig(
        schema=args.schema,
        data_dir=args.data_dir,
        query_log=args.query_log,
        docs=args.docs,
        defs=tuple(args.defs),
        gold=args.gold,
        work_dir=args.work_dir,
        derivation=derivation,
        search=search_cfg,
        seed=args.seed,
    )


def run(argv: Sequence[str], out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
        stream=err,
    )
    try:
        cfg = config_from_args(args)
        query = " ".join(args.query)
        if args.command in ("search", "explain") and not query:
            raise ParseError(f"{args.command} needs a query argument")
        if args.command == "ingest":
            cmd_ingest(cfg, out)
        elif args.command == "derive":
            cmd_derive(cfg, args.strategy, out)
        elif args.command == "index":
            cmd_index(cfg, out)
        elif args.command == "search":
            cmd_search(cfg, query, out)
        elif args.command == "explain":
            cmd_explain(cfg, query, out)
        else:
            cmd_bench(cfg, out)
    except QunitsError as exc:
        kind = next((k for k in EXIT_CODES if isinstance(exc, k)), None)
        label = FAILURE_CLASS.get(kind, "error")
        print(f"qunits: {label}: {exc}", file=err)
        return EXIT_CODES.get(kind, 1)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
