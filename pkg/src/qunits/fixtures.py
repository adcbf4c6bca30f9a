"""The bundled mini-imdb dataset and generators for synthetic evidence pages."""

from __future__ import annotations

import random
from functools import lru_cache
from pathlib import Path

from qunits.derive import DocNode
from qunits.store import Dataset, Schema, finalize, load_dataset, load_schema

DATA_DIR = Path(__file__).parent / "data" / "mini_imdb"
SCHEMA_PATH = DATA_DIR / "schema.txt"
MANUAL_DEFS_PATH = DATA_DIR / "manual.qunit"
QUERY_LOG_PATH = DATA_DIR / "query_log.tsv"
GOLD_PATH = DATA_DIR / "gold.tsv"
DOCS_DIR = DATA_DIR / "docs"


def mini_imdb_schema() -> Schema:
    return load_schema(SCHEMA_PATH.read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def mini_imdb() -> Dataset:
    """The bundled dataset; immutable, so one cached copy is shared."""
    return load_dataset(mini_imdb_schema(), DATA_DIR)


def person_page(name: str, titles: list[str]) -> DocNode:
    """A filmography page: one name heading and one entry per title mention."""
    entries = tuple(DocNode("entry", t) for t in titles)
    return DocNode(
        "page", "",
        (DocNode("heading", name), DocNode("filmography", "", entries)),
    )


def synthetic_person_pages(
    dataset: Dataset, n_pages: int = 10, titles_per_page: int = 40, seed: int = 3
) -> list[DocNode]:
    """``n_pages`` person pages, each naming one person and ``titles_per_page`` titles."""
    rng = random.Random(seed)
    names = sorted(set(dataset.column_values("person.name")))
    titles = sorted(set(dataset.column_values("movie.title")))
    pages = []
    for i in range(n_pages):
        picks = [rng.choice(titles) for _ in range(titles_per_page)]
        pages.append(person_page(names[i % len(names)], picks))
    return pages



FIRST_NAMES = ("ada", "bruno", "clara", "dmitri", "elena", "farid", "greta", "hugo", "ines", "jonas",
               "kira", "luca", "mira", "nils", "olga", "pavel", "quinn", "rosa", "soren", "tara")
LAST_NAMES = ("abbott", "berg", "castell", "dunmore", "ekwall", "falk", "grimaldi", "holm", "ivers",
              "janssen", "kowal", "lindqvist", "moreau", "novak", "okafor", "petrov", "quist", "rahman")
TITLE_WORDS = ("silent", "crimson", "midnight", "northern", "broken", "golden", "hidden", "last",
               "electric", "frozen", "wild", "distant")
TITLE_NOUNS = ("harbor", "empire", "garden", "voyage", "signal", "river", "machine", "kingdom",
               "letter", "frontier", "orchard", "lantern")
GENRES = ("comedy", "thriller", "western", "documentary", "romance", "horror", "musical", "animation")
PLACES = ("lisbon", "oslo", "nairobi", "kyoto", "lima", "dublin", "quebec", "hobart", "tbilisi")
ROLES = ("lead", "sidekick", "villain", "narrator", "detective", "pilot")
PLOT_WORDS = ("a", "the", "journey", "secret", "family", "storm", "war", "love", "city", "island",
              "stranger", "returns", "home", "after", "years")


def synthetic_imdb(
    n_people: int = 30, n_movies: int = 15, cast_per_movie: int = 3, seed: int = 0
) -> Dataset:
    """A random dataset over the bundled schema, for scale and property tests.

    Values are drawn from vocabularies disjoint from the schema's own names,
    so no value token doubles as a table or column reference.
    """
    rng = random.Random(seed)
    names = [f"{f} {l}" for f in FIRST_NAMES for l in LAST_NAMES]
    titles = [f"{a} {b}" for a in TITLE_WORDS for b in TITLE_NOUNS]
    if n_people > len(names) or n_movies > len(titles):
        raise ValueError("requested more entities than the vocabularies allow")
    people = rng.sample(names, n_people)
    movies = rng.sample(titles, n_movies)
    rows: dict[str, list[tuple]] = {t: [] for t in ("person", "movie", "cast", "genre", "locations", "info")}
    rows["person"] = [(i + 1, n) for i, n in enumerate(people)]
    rows["movie"] = [(i + 1, t, rng.randint(1950, 2020)) for i, t in enumerate(movies)]
    for m in range(1, n_movies + 1):
        for p in rng.sample(range(1, n_people + 1), min(cast_per_movie, n_people)):
            rows["cast"].append((len(rows["cast"]) + 1, m, p, rng.choice(ROLES)))
        for g in rng.sample(GENRES, rng.randint(1, 2)):
            rows["genre"].append((len(rows["genre"]) + 1, m, g))
        rows["locations"].append((len(rows["locations"]) + 1, m, rng.choice(PLACES)))
        plot = " ".join(rng.choice(PLOT_WORDS) for _ in range(6))
        rows["info"].append((len(rows["info"]) + 1, m, plot))
    return finalize(mini_imdb_schema(), rows)
