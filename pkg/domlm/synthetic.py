"""
Synthetic templated websites with gold labels for all three tasks.

Every site belongs to one domain and renders its pages from a few templates.
A template fixes the layout family (key-value table, definition list or
heading + paragraph) and the attribute order; the site fixes the label
wording, the CSS class prefix and the wrapper depth. Page content (entity
name and attribute values) is drawn from its own random stream so the noise
knobs never change the gold values.
"""
import dataclasses
import html
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from domlm.config import CleanConfig
from domlm.corpus import (
    DATASET_FILE, LABEL_FILES, MANIFEST_FILE, AttrLabel, ManifestEntry, PairLabel, QAItem, write_jsonl,
    write_manifest,
)
from domlm.dom_ingest import clean, parse_html
from domlm.errors import ConfigInvalid, MissingFile

logger = logging.getLogger(__name__)

GOLD_ATTR = "data-gold"
LAYOUTS = ("table", "dl", "heading")

FIRST_NAMES = (
    "Ada", "Bruno", "Carmen", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas",
    "Keiko", "Lars", "Mara", "Nikos", "Olga", "Pavel", "Rosa", "Sven", "Tomas", "Vera",
)
LAST_NAMES = (
    "Almeida", "Brandt", "Castillo", "Dubois", "Eriksen", "Fischer", "Galli", "Horvat", "Ivanova",
    "Jensen", "Kowalski", "Lindqvist", "Moreau", "Novak", "Ortega", "Petrov", "Quinn", "Rossi",
)
ADJECTIVES = (
    "Silent", "Golden", "Broken", "Hidden", "Crimson", "Distant", "Frozen", "Hollow", "Last",
    "Midnight", "Quiet", "Restless", "Secret", "Wandering", "Wild",
)
NOUNS = (
    "River", "Garden", "Harbor", "Mirror", "Orchard", "Signal", "Lantern", "Bridge", "Forest",
    "Island", "Letter", "Summer", "Tower", "Voyage", "Winter",
)
GENRES = ("Drama", "Comedy", "Thriller", "Documentary", "Western", "Animation", "Horror", "Romance")
LANGUAGES = ("English", "French", "German", "Spanish", "Italian", "Polish", "Swedish", "Portuguese")
CITIES = ("Lisbon", "Oslo", "Krakow", "Lyon", "Porto", "Turin", "Gdansk", "Bergen", "Leipzig", "Seville")
COMPANY_SUFFIXES = ("Press", "Works", "Labs", "House", "Group", "Media")
LEVELS = ("Junior", "Senior", "Lead", "Principal", "Staff")
ROLES = ("Data Analyst", "Backend Engineer", "Product Designer", "Accountant", "Nurse", "Translator")
EMPLOYMENT = ("Full time", "Part time", "Contract", "Internship")
FILLER = (
    "home", "news", "about", "contact", "help", "privacy", "terms", "login", "archive",
    "popular", "latest", "newsletter", "careers", "sitemap",
)
SITE_PREFIXES = ("acme", "nova", "zen", "orbit", "pixel", "delta", "vista", "ember", "lumen", "atlas")


def _choice(rng: np.random.Generator, items: Sequence[str]) -> str:
    return items[int(rng.integers(len(items)))]


VALUE_GENERATORS: Dict[str, Callable[[np.random.Generator], str]] = {
    "person": lambda rng: f"{_choice(rng, FIRST_NAMES)} {_choice(rng, LAST_NAMES)}",
    "year": lambda rng: str(int(rng.integers(1950, 2024))),
    "genre": lambda rng: _choice(rng, GENRES),
    "runtime": lambda rng: f"{int(rng.integers(80, 181))} min",
    "rating": lambda rng: f"{int(rng.integers(10, 100)) / 10:.1f}",
    "company": lambda rng: f"{_choice(rng, NOUNS)} {_choice(rng, COMPANY_SUFFIXES)}",
    "pages": lambda rng: f"{int(rng.integers(90, 900))} pages",
    "language": lambda rng: _choice(rng, LANGUAGES),
    "city": lambda rng: _choice(rng, CITIES),
    "salary": lambda rng: f"$ {int(rng.integers(30, 200))},000",
    "employment": lambda rng: _choice(rng, EMPLOYMENT),
}

ENTITY_GENERATORS: Dict[str, Callable[[np.random.Generator], str]] = {
    "movie": lambda rng: f"The {_choice(rng, ADJECTIVES)} {_choice(rng, NOUNS)}",
    "book": lambda rng: f"{_choice(rng, ADJECTIVES)} {_choice(rng, NOUNS)}s",
    "job": lambda rng: f"{_choice(rng, LEVELS)} {_choice(rng, ROLES)}",
}

# attribute name -> value generator, per built-in domain
DOMAINS: Dict[str, Dict[str, str]] = {
    "movie": {"director": "person", "year": "year", "genre": "genre", "runtime": "runtime", "rating": "rating"},
    "book": {"author": "person", "publisher": "company", "pages": "pages", "year": "year", "language": "language"},
    "job": {"company": "company", "location": "city", "salary": "salary", "employment": "employment"},
}

LABEL_SYNONYMS: Dict[str, Tuple[str, ...]] = {
    "director": ("Director", "Directed by", "Filmmaker"),
    "year": ("Year", "Released", "Year of release"),
    "genre": ("Genre", "Category", "Style"),
    "runtime": ("Runtime", "Running time", "Duration"),
    "rating": ("Rating", "Score", "User rating"),
    "author": ("Author", "Written by", "Writer"),
    "publisher": ("Publisher", "Published by", "Imprint"),
    "pages": ("Pages", "Page count", "Length"),
    "language": ("Language", "Written in", "Original language"),
    "company": ("Company", "Employer", "Hiring company"),
    "location": ("Location", "City", "Based in"),
    "salary": ("Salary", "Pay", "Compensation"),
    "employment": ("Employment", "Job type", "Contract type"),
}


@dataclass(frozen=True)
class SyntheticSiteConfig:
    n_sites: int = 8
    templates_per_site: int = 3
    pages_per_template: int = 20
    domains: Tuple[str, ...] = ("movie", "book", "job")
    # domain -> {attribute name: value generator}; built-in domains need no entry
    attributes: Dict[str, Dict[str, str]] = field(default_factory=dict)
    layouts: Tuple[str, ...] = LAYOUTS
    boilerplate: float = 0.3
    reorder: float = 0.0
    distractors: float = 0.2
    # zero-shot split: the last sites are held out for testing
    test_sites: int = 3
    # few-shot split: the first pages of every template are for training
    fewshot_pages: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("n_sites", "templates_per_site", "pages_per_template"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("boilerplate", "reorder", "distractors"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigInvalid(f"{name} must be within [0, 1], got {getattr(self, name)}")
        if not self.domains:
            raise ConfigInvalid("at least one domain is required")
        if not self.layouts or any(layout not in LAYOUTS for layout in self.layouts):
            raise ConfigInvalid(f"layouts must be a non-empty subset of {LAYOUTS}, got {self.layouts}")
        if self.test_sites < 0 or self.fewshot_pages < 0:
            raise ConfigInvalid("test_sites and fewshot_pages must be >= 0")
        for domain in self.domains:
            attrs = self.domain_attributes(domain)
            if not attrs:
                raise ConfigInvalid(f"domain '{domain}' has no attributes")
            unknown = sorted(set(attrs.values()) - set(VALUE_GENERATORS))
            if unknown:
                raise ConfigInvalid(f"domain '{domain}' uses unknown value generator(s) {unknown}")

    def domain_attributes(self, domain: str) -> Dict[str, str]:
        if domain in self.attributes:
            return dict(self.attributes[domain])
        if domain not in DOMAINS:
            raise ConfigInvalid(f"unknown domain '{domain}' without an attribute definition")
        return dict(DOMAINS[domain])

    @property
    def attribute_names(self) -> Tuple[str, ...]:
        """Attribute types across all domains, first occurrence order."""
        names: List[str] = []
        for domain in self.domains:
            names.extend(a for a in self.domain_attributes(domain) if a not in names)
        return tuple(names)

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)


def synthetic_config_from_dict(data: Dict) -> SyntheticSiteConfig:
    """
    Build a generator config from parsed JSON.

    Raises:
        ConfigInvalid: On unknown keys or invalid values.
    """
    known = {f.name for f in dataclasses.fields(SyntheticSiteConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigInvalid(f"unknown synthetic config key(s): {unknown}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return SyntheticSiteConfig(**values)
    except TypeError as e:
        raise ConfigInvalid(f"invalid synthetic config: {e}") from e


def load_synthetic_config(path: Optional[str]) -> SyntheticSiteConfig:
    if not path:
        return SyntheticSiteConfig()
    config_path = Path(path)
    if not config_path.is_file():
        raise MissingFile(f"Config file not found: {config_path}")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"{config_path}: invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{config_path}: expected a JSON object")
    # a run config may carry the generator settings in its own section
    return synthetic_config_from_dict(data.get("synthetic", data))


@dataclass(frozen=True)
class SyntheticPage:
    entry: ManifestEntry
    html: str


@dataclass
class SyntheticCorpus:
    config: SyntheticSiteConfig
    pages: List[SyntheticPage] = field(default_factory=list)
    attr: List[AttrLabel] = field(default_factory=list)
    pairs: List[PairLabel] = field(default_factory=list)
    qa: List[QAItem] = field(default_factory=list)

    @property
    def attributes(self) -> Tuple[str, ...]:
        return self.config.attribute_names


@dataclass(frozen=True)
class _SiteStyle:
    name: str
    domain: str
    prefix: str
    labels: Dict[str, str]
    colon: bool
    wrappers: int


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def _site_style(cfg: SyntheticSiteConfig, site: int) -> _SiteStyle:
    rng = _rng(cfg.seed, site, 0)
    domain = cfg.domains[site % len(cfg.domains)]
    labels = {}
    for attribute in cfg.domain_attributes(domain):
        synonyms = LABEL_SYNONYMS.get(attribute, (attribute.replace("_", " ").capitalize(),))
        labels[attribute] = _choice(rng, synonyms)
    return _SiteStyle(
        name=f"site{site:02d}",
        domain=domain,
        prefix=f"{_choice(rng, SITE_PREFIXES)}{site}",
        labels=labels,
        colon=bool(rng.integers(2)),
        wrappers=int(rng.integers(1, 4)),
    )


def _gold(kind: str, attribute: str, marked: bool) -> str:
    return f' {GOLD_ATTR}="{kind}:{attribute}"' if marked else ""


def _render_fields(layout: str, style: _SiteStyle, fields: List[Tuple[str, str, str]], marked: bool) -> str:
    esc = html.escape
    p = style.prefix
    if layout == "table":
        rows = "".join(
            f'<tr><th{_gold("label", a, marked)}>{esc(label)}</th><td{_gold("value", a, marked)}>{esc(value)}</td></tr>'
            for a, label, value in fields
        )
        return f'<table class="{p}-facts"><tbody>{rows}</tbody></table>'
    if layout == "dl":
        items = "".join(
            f'<dt{_gold("label", a, marked)}>{esc(label)}</dt><dd{_gold("value", a, marked)}>{esc(value)}</dd>'
            for a, label, value in fields
        )
        return f'<dl class="{p}-facts">{items}</dl>'
    sections = "".join(
        f'<div class="{p}-section"><h3{_gold("label", a, marked)}>{esc(label)}</h3>'
        f'<p{_gold("value", a, marked)}>{esc(value)}</p></div>'
        for a, label, value in fields
    )
    return f'<div class="{p}-facts">{sections}</div>'


def _render_page(
    cfg: SyntheticSiteConfig,
    style: _SiteStyle,
    layout: str,
    entity: str,
    fields: List[Tuple[str, str, str]],
    noise: np.random.Generator,
    marked: bool,
) -> str:
    esc = html.escape
    p = style.prefix
    n_links = int(round(cfg.boilerplate * 6))
    n_footer = int(round(cfg.boilerplate * 4))
    # noise draws happen in the same order for the marked and unmarked rendering
    links = "".join(f'<a class="nav">{_choice(noise, FILLER)}</a>' for _ in range(n_links))
    footer = "".join(
        f"<p>{' '.join(_choice(noise, FILLER) for _ in range(4))}</p>" for _ in range(n_footer)
    )
    extra_spacers = "".join('<div class="spacer"></div>' for _ in range(n_footer))
    distractor = ""
    if noise.random() < cfg.distractors:
        distractor = (
            f'<p class="{p}-note">Updated {int(noise.integers(1990, 2024))} , '
            f"{int(noise.integers(10, 5000))} views</p>"
        )
    body = f'<h1 class="title">{esc(entity)}</h1>' + _render_fields(layout, style, fields, marked) + distractor
    for depth in reversed(range(style.wrappers)):
        body = f'<div class="{p}-wrap{depth}">{body}</div>'
    return (
        f"<!DOCTYPE html><html><head><title>{esc(entity)} | {style.name}</title></head><body>"
        f'<div id="{p}-header"><a class="nav">home</a>{links}</div>'
        f'<div class="spacer"></div>{extra_spacers}'
        f"{body}"
        f'<div class="{p}-footer">{footer}<p>{esc(style.name)} ©</p></div>'
        "</body></html>"
    )


def _forms(label_text: str) -> Tuple[str, ...]:
    base = label_text.rstrip(":").strip()
    return tuple(sorted({label_text, base, base + ":"}))


def generate_synthetic(cfg: SyntheticSiteConfig, clean_cfg: CleanConfig = CleanConfig()) -> SyntheticCorpus:
    """
    Generate pages and gold labels for attribute extraction, OpenIE and QA.

    Gold node ids are located by rendering every page a second time with
    marker attributes and cleaning it with the same settings, so they agree
    with what load_dataset computes for the unmarked page.

    Args:
        cfg (SyntheticSiteConfig): Generator settings.
        clean_cfg (CleanConfig): Cleaning the labels are expressed against.

    Returns:
        SyntheticCorpus: HTML pages, manifest entries and labels.

    Raises:
        ConfigInvalid: If cleaning removes a gold node.
    """
    corpus = SyntheticCorpus(config=cfg)
    marker_cfg = dataclasses.replace(clean_cfg, kept_attrs=tuple(clean_cfg.kept_attrs) + (GOLD_ATTR,))
    n_test = min(cfg.test_sites, cfg.n_sites - 1)
    for site in range(cfg.n_sites):
        style = _site_style(cfg, site)
        attributes = list(cfg.domain_attributes(style.domain))
        split = "test" if site >= cfg.n_sites - n_test else "train"
        for template in range(cfg.templates_per_site):
            template_rng = _rng(cfg.seed, site, template + 1, 0)
            layout = _choice(template_rng, cfg.layouts)
            order = [attributes[i] for i in template_rng.permutation(len(attributes))]
            for page in range(cfg.pages_per_template):
                values_rng = _rng(cfg.seed, site, template + 1, page + 1, 1)
                entity = ENTITY_GENERATORS.get(style.domain, ENTITY_GENERATORS["movie"])(values_rng)
                domain_attrs = cfg.domain_attributes(style.domain)
                values = {a: VALUE_GENERATORS[domain_attrs[a]](values_rng) for a in attributes}

                page_order = list(order)
                noise_seed = (cfg.seed, site, template + 1, page + 1, 2)
                if _rng(*noise_seed, 0).random() < cfg.reorder:
                    page_order = [page_order[i] for i in _rng(*noise_seed, 1).permutation(len(page_order))]
                suffix = ":" if style.colon else ""
                fields = [(a, style.labels[a] + suffix, values[a]) for a in page_order]

                plain = _render_page(cfg, style, layout, entity, fields, _rng(*noise_seed, 2), marked=False)
                marked = _render_page(cfg, style, layout, entity, fields, _rng(*noise_seed, 2), marked=True)

                doc_id = f"{style.name}-t{template}-p{page:03d}"
                entry = ManifestEntry(
                    doc_id=doc_id,
                    path=f"pages/{doc_id}.html",
                    website=style.name,
                    domain=style.domain,
                    split=split,
                    fewshot_split="train" if page < cfg.fewshot_pages else "test",
                )
                corpus.pages.append(SyntheticPage(entry=entry, html=plain))
                _add_labels(corpus, entry, marked, marker_cfg, entity, values)
    logger.info(
        f"Generated {len(corpus.pages)} pages over {cfg.n_sites} sites with {len(corpus.attr)} attribute labels"
    )
    return corpus


def _add_labels(
    corpus: SyntheticCorpus,
    entry: ManifestEntry,
    marked_html: str,
    marker_cfg: CleanConfig,
    entity: str,
    values: Dict[str, str],
) -> None:
    tree = clean(parse_html(marked_html.encode("utf-8")), marker_cfg)
    located: Dict[Tuple[str, str], int] = {}
    for node in tree.nodes:
        for name, value in node.attrs:
            if name == GOLD_ATTR:
                kind, attribute = value.split(":", 1)
                located[(kind, attribute)] = node.node_id

    for k, (attribute, value) in enumerate(values.items()):
        if ("value", attribute) not in located or ("label", attribute) not in located:
            raise ConfigInvalid(f"cleaning removed the gold nodes of '{attribute}' in {entry.doc_id}")
        value_node = located[("value", attribute)]
        label_node = located[("label", attribute)]
        if tree[value_node].text != value:
            raise ConfigInvalid(f"gold value of '{attribute}' in {entry.doc_id} does not survive cleaning")
        value_path = tree.tag_path(value_node)
        label_path = tree.tag_path(label_node)
        corpus.attr.append(AttrLabel(entry.doc_id, value_node, value_path, attribute, value))
        corpus.pairs.append(PairLabel(
            entry.doc_id, label_node, label_path, value_node, value_path, _forms(tree[label_node].text), attribute,
        ))
        corpus.qa.append(QAItem(
            question_id=f"{entry.doc_id}-q{k}",
            doc_id=entry.doc_id,
            question=f"what is the {attribute.replace('_', ' ')} of {entity}?",
            answers=(value,),
            node_id=value_node,
            tag_path=value_path,
        ))


def split_entries(corpus: SyntheticCorpus) -> Dict[str, List[ManifestEntry]]:
    """Zero-shot (site held out) and few-shot (first pages per template) split manifests."""
    entries = [p.entry for p in corpus.pages]
    return {
        "zeroshot-train": [e for e in entries if e.split == "train"],
        "zeroshot-test": [e for e in entries if e.split == "test"],
        "fewshot-train": [e for e in entries if e.fewshot_split == "train"],
        "fewshot-test": [e for e in entries if e.fewshot_split == "test"],
    }


def write_synthetic(corpus: SyntheticCorpus, out_dir: Union[str, Path]) -> Path:
    """
    Write a generated corpus as a dataset directory.

    Returns:
        Path: The main manifest.
    """
    out = Path(out_dir)
    (out / "pages").mkdir(parents=True, exist_ok=True)
    for page in corpus.pages:
        (out / page.entry.path).write_text(page.html, encoding="utf-8")

    by_doc = {p.entry.doc_id: p.entry for p in corpus.pages}

    def context(doc_id: str) -> Dict[str, str]:
        return {"domain": by_doc[doc_id].domain, "website": by_doc[doc_id].website}

    write_jsonl(out / LABEL_FILES["attr"], (
        {"doc_id": a.doc_id, "node_id": a.node_id, "tag_path": a.tag_path, "attribute": a.attribute,
         "value": a.value, **context(a.doc_id)}
        for a in corpus.attr
    ))
    write_jsonl(out / LABEL_FILES["openie"], (
        {"doc_id": p.doc_id, "pred_node": p.pred_node, "pred_tag_path": p.pred_tag_path, "obj_node": p.obj_node,
         "obj_tag_path": p.obj_tag_path, "forms": list(p.forms), "attribute": p.attribute, **context(p.doc_id)}
        for p in corpus.pairs
    ))
    write_jsonl(out / LABEL_FILES["qa"], (
        {"question_id": q.question_id, "doc_id": q.doc_id, "question": q.question, "answers": list(q.answers),
         "node_id": q.node_id, "tag_path": q.tag_path, **context(q.doc_id)}
        for q in corpus.qa
    ))

    manifest_path = out / MANIFEST_FILE
    write_manifest(manifest_path, by_doc.values())
    for name, entries in split_entries(corpus).items():
        write_manifest(out / f"manifest.{name}.jsonl", entries)

    description = {
        "labels": LABEL_FILES,
        "attributes": list(corpus.attributes),
        "domains": {d: list(corpus.config.domain_attributes(d)) for d in corpus.config.domains},
        "generator": corpus.config.to_dict(),
    }
    (out / DATASET_FILE).write_text(json.dumps(description, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote synthetic corpus of {len(corpus.pages)} pages to {out}")
    return manifest_path
