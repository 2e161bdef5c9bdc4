"""Synthetic restaurant knowledge base: generation, queries, entity typing.

Every restaurant is one cell of the (cuisine x location x price x rating)
grid plus a randomly drawn party size.  Phone and address are derived from
the name, so the whole KB is a pure function of (cuisines, locations, seed).
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np

PRICES = ("cheap", "moderate", "expensive")
RATINGS = tuple(range(1, 9))
PARTY_SIZES = (2, 4, 6, 8)
PARTY_WORDS = {2: "two", 4: "four", 6: "six", 8: "eight"}
WORD_TO_PARTY = {w: n for n, w in PARTY_WORDS.items()}

# relation order used when a restaurant is expanded into facts
RELATIONS = (
    "r_phone",
    "r_address",
    "r_cuisine",
    "r_location",
    "r_number",
    "r_price",
    "r_rating",
)

_NAME_RE = re.compile(r"^[a-z][a-z_]*$")

# Default entity lists.  The first half of each list feeds the plain KB, the
# second half the OOV KB, so the two share only prices, ratings and party
# sizes.
DEFAULT_CUISINES = (
    "british", "cantonese", "french", "indian", "italian",
    "spanish", "thai", "vietnamese", "korean", "japanese",
)
DEFAULT_LOCATIONS = (
    "london", "madrid", "paris", "rome", "tokyo",
    "bombay", "hanoi", "seoul", "bangkok", "beijing",
)


def default_kb_pair(seed: int) -> tuple["KnowledgeBase", "KnowledgeBase"]:
    """(plain, oov) KBs built from the default entity lists."""
    half_c = len(DEFAULT_CUISINES) // 2
    half_l = len(DEFAULT_LOCATIONS) // 2
    rng = np.random.default_rng(seed)
    plain_seed, oov_seed = (int(s) for s in rng.integers(0, 2**31 - 1, size=2))
    plain = generate_kb(list(DEFAULT_CUISINES[:half_c]), list(DEFAULT_LOCATIONS[:half_l]), plain_seed)
    oov = generate_kb(list(DEFAULT_CUISINES[half_c:]), list(DEFAULT_LOCATIONS[half_l:]), oov_seed)
    return plain, oov


class EntityType(enum.Enum):
    CUISINE = "cuisine"
    LOCATION = "location"
    PRICE = "price"
    RATING = "rating"
    PARTY_SIZE = "party_size"
    PHONE = "phone"
    ADDRESS = "address"


RELATION_TO_TYPE = {
    "r_cuisine": EntityType.CUISINE,
    "r_location": EntityType.LOCATION,
    "r_price": EntityType.PRICE,
    "r_rating": EntityType.RATING,
    "r_number": EntityType.PARTY_SIZE,
    "r_phone": EntityType.PHONE,
    "r_address": EntityType.ADDRESS,
}


@dataclass(frozen=True)
class Fact:
    subject: str
    relation: str
    value: str

    def render(self) -> str:
        return f"{self.subject} {self.relation} {self.value}"


@dataclass(frozen=True)
class Restaurant:
    name: str
    cuisine: str
    location: str
    price: str
    rating: int
    party_size: int

    @property
    def phone(self) -> str:
        return self.name + "_phone"

    @property
    def address(self) -> str:
        return self.name + "_address"

    @property
    def party_word(self) -> str:
        return PARTY_WORDS[self.party_size]

    def facts(self) -> list[Fact]:
        values = {
            "r_phone": self.phone,
            "r_address": self.address,
            "r_cuisine": self.cuisine,
            "r_location": self.location,
            "r_number": self.party_word,
            "r_price": self.price,
            "r_rating": str(self.rating),
        }
        return [Fact(self.name, rel, values[rel]) for rel in RELATIONS]


@dataclass(frozen=True)
class ApiQuery:
    cuisine: str
    location: str
    price: str
    party_size: int

    def render(self) -> str:
        return (
            f"api_call {self.cuisine} {self.location} "
            f"{PARTY_WORDS[self.party_size]} {self.price}"
        )


@dataclass
class KnowledgeBase:
    restaurants: list[Restaurant]
    entity_index: dict[str, EntityType] = field(default_factory=dict)

    def __post_init__(self):
        self.by_name = {r.name: r for r in self.restaurants}
        self.names_sorted = sorted(self.by_name)
        if not self.entity_index:
            self.entity_index = _build_entity_index(self.restaurants)

    def query(self, q: ApiQuery) -> list[Fact]:
        """All facts of every restaurant matching the four query fields.

        Matches are grouped per restaurant, groups sorted by descending
        rating then ascending name.  No match is a valid empty result.
        """
        hits = [
            r
            for r in self.restaurants
            if r.cuisine == q.cuisine
            and r.location == q.location
            and r.price == q.price
            and r.party_size == q.party_size
        ]
        hits.sort(key=lambda r: (-r.rating, r.name))
        facts: list[Fact] = []
        for r in hits:
            facts.extend(r.facts())
        return facts

    def facts(self) -> list[Fact]:
        out: list[Fact] = []
        for r in self.restaurants:
            out.extend(r.facts())
        return out

    @property
    def cuisines(self) -> list[str]:
        return sorted({r.cuisine for r in self.restaurants})

    @property
    def locations(self) -> list[str]:
        return sorted({r.location for r in self.restaurants})


def _build_entity_index(restaurants: list[Restaurant]) -> dict[str, EntityType]:
    index: dict[str, EntityType] = {}

    def put(word: str, etype: EntityType):
        prev = index.get(word)
        if prev is not None and prev is not etype:
            raise ValueError(f"entity word {word!r} maps to both {prev} and {etype}")
        index[word] = etype

    for r in restaurants:
        put(r.cuisine, EntityType.CUISINE)
        put(r.location, EntityType.LOCATION)
        put(r.price, EntityType.PRICE)
        put(str(r.rating), EntityType.RATING)
        put(r.party_word, EntityType.PARTY_SIZE)
        put(r.phone, EntityType.PHONE)
        put(r.address, EntityType.ADDRESS)
    return index


def generate_kb(cuisines: list[str], locations: list[str], seed: int) -> KnowledgeBase:
    """Build the full cuisine x location x price x rating grid of restaurants.

    Party sizes are i.i.d. uniform over {2,4,6,8} from the seeded generator,
    so a 4-field query matches a Binomial(8, 1/4) number of restaurants.
    """
    if not cuisines or not locations:
        raise ValueError("cuisines and locations must be non-empty")
    if len(set(cuisines)) != len(cuisines):
        raise ValueError("duplicate entries in cuisines")
    if len(set(locations)) != len(locations):
        raise ValueError("duplicate entries in locations")
    for word in list(cuisines) + list(locations):
        if not _NAME_RE.match(word):
            raise ValueError(f"entity word {word!r} must be lowercase [a-z_]")

    rng = np.random.default_rng(seed)
    restaurants = []
    for cuisine in cuisines:
        for location in locations:
            for price in PRICES:
                for rating in RATINGS:
                    party = PARTY_SIZES[rng.integers(0, len(PARTY_SIZES))]
                    name = f"resto_{location}_{price}_{cuisine}_{rating}stars"
                    restaurants.append(
                        Restaurant(name, cuisine, location, price, rating, party)
                    )
    return KnowledgeBase(restaurants)


def entity_type_of(kbs: list[KnowledgeBase], word: str) -> EntityType | None:
    """Type of `word` if it is an attribute value in any supplied KB."""
    for kb in kbs:
        etype = kb.entity_index.get(word)
        if etype is not None:
            return etype
    return None


def restaurant_named(kbs: list[KnowledgeBase], name: str) -> Restaurant | None:
    for kb in kbs:
        r = kb.by_name.get(name)
        if r is not None:
            return r
    return None


def write_kb(path, kb: KnowledgeBase) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for fact in kb.facts():
            f.write(fact.render() + "\n")


def read_kb(path) -> KnowledgeBase:
    """Rebuild a KB from its fact-triple file (7 facts per restaurant)."""
    rows: dict[str, dict[str, str]] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected '<name> <relation> <value>'")
            subject, relation, value = parts
            if relation not in RELATION_TO_TYPE:
                raise ValueError(f"{path}:{lineno}: unknown relation {relation!r}")
            if subject not in rows:
                rows[subject] = {}
                order.append(subject)
            rows[subject][relation] = value
    restaurants = []
    for name in order:
        vals = rows[name]
        missing = set(RELATIONS) - set(vals)
        if missing:
            raise ValueError(f"restaurant {name!r} missing relations {sorted(missing)}")
        restaurants.append(
            Restaurant(
                name=name,
                cuisine=vals["r_cuisine"],
                location=vals["r_location"],
                price=vals["r_price"],
                rating=int(vals["r_rating"]),
                party_size=WORD_TO_PARTY[vals["r_number"]],
            )
        )
    return KnowledgeBase(restaurants)
