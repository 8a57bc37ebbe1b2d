"""
HTML ingestion: parse raw bytes with an HTML5 parser and clean the element
tree into an immutable DomTree whose node ids are preorder ranks.
"""
import html
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple
from xml.etree import ElementTree

import html5lib

from domlm.config import CleanConfig
from domlm.errors import EmptyDocument, EncodingError, IoError
from domlm.text import normalize_space, truncate_words

logger = logging.getLogger(__name__)

META_CHARSET_RE = re.compile(rb"""<meta[^>]+charset\s*=\s*["']?\s*([A-Za-z0-9_.:-]+)""", re.IGNORECASE)

VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta",
    "param", "source", "track", "wbr",
})


@dataclass(frozen=True)
class RawDom:
    """Unclean parser output: the html element and the encoding used to decode the input."""

    root: ElementTree.Element
    encoding: str


@dataclass(frozen=True)
class DomNode:
    node_id: int
    tag: str
    attrs: Tuple[Tuple[str, str], ...]
    text: str
    parent: Optional[int]
    children: Tuple[int, ...]


@dataclass(frozen=True)
class DomTree:
    nodes: Tuple[DomNode, ...]
    root: int
    preorder: Tuple[int, ...]
    postorder: Tuple[int, ...]
    depths: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> DomNode:
        return self.nodes[node_id]

    def depth(self, node_id: int) -> int:
        return self.depths[node_id]

    def tag_path(self, node_id: int) -> str:
        """Absolute path like ``/html[1]/body[1]/div[2]``; indices count same-tag siblings from 1."""
        parts = []
        current: Optional[int] = node_id
        while current is not None:
            node = self.nodes[current]
            if node.parent is None:
                parts.append(f"{node.tag}[1]")
            else:
                siblings = self.nodes[node.parent].children
                rank = sum(1 for s in siblings[: siblings.index(current) + 1] if self.nodes[s].tag == node.tag)
                parts.append(f"{node.tag}[{rank}]")
            current = node.parent
        return "/" + "/".join(reversed(parts))

    def subtree_size(self, node_id: int) -> int:
        # preorder ids make a subtree a contiguous id range ending at its last descendant
        last = node_id
        while self.nodes[last].children:
            last = self.nodes[last].children[-1]
        return last - node_id + 1


def read_html(path: str) -> bytes:
    """
    Read an HTML file as raw bytes.

    Args:
        path (str): Path to the .html/.htm file.

    Returns:
        bytes: The file content.

    Raises:
        IoError: If the file cannot be read.
    """
    try:
        return Path(path).read_bytes()
    except OSError as e:
        logger.error(f"Cannot read {path}: {e}")
        raise IoError(f"Cannot read {path}: {e}") from e


def _decode(raw: bytes, encoding: Optional[str]) -> Tuple[str, str]:
    if encoding is None:
        try:
            return raw.decode("utf-8"), "utf-8"
        except UnicodeDecodeError:
            declared = META_CHARSET_RE.search(raw[:4096])
            if declared is None:
                raise EncodingError("input is not valid UTF-8 and declares no charset")
            encoding = declared.group(1).decode("ascii")
    try:
        return raw.decode(encoding), encoding
    except (LookupError, UnicodeDecodeError) as e:
        raise EncodingError(f"cannot decode input as {encoding}: {e}") from e


def parse_html(raw: bytes, encoding: Optional[str] = None) -> RawDom:
    """
    Parse raw HTML bytes with HTML5 error recovery.

    The result keeps every element including script, style and comment nodes,
    in source order. Empty input yields the implied html/head/body skeleton.

    Args:
        raw (bytes): Document bytes, UTF-8 unless a charset is declared or given.
        encoding (Optional[str]): Explicit encoding overriding detection.

    Returns:
        RawDom: The parsed element tree.

    Raises:
        EncodingError: If the bytes cannot be decoded.
    """
    text, used = _decode(raw, encoding)
    root = html5lib.parse(text, treebuilder="etree", namespaceHTMLElements=False)
    return RawDom(root=root, encoding=used)


def _local_name(tag: str) -> str:
    # foreign content (svg, math) keeps its namespace in the etree tag
    return tag.rsplit("}", 1)[-1].lower()


@dataclass
class _Draft:
    tag: str
    attrs: Tuple[Tuple[str, str], ...]
    text: str
    children: List["_Draft"]


def _build(element: ElementTree.Element, cfg: CleanConfig, removed: frozenset, kept: frozenset) -> Optional[_Draft]:
    if not isinstance(element.tag, str):
        # comments and processing instructions
        return None
    tag = _local_name(element.tag)
    if tag in removed:
        return None

    text_parts = [element.text or ""]
    children = []
    for child in element:
        draft = _build(child, cfg, removed, kept)
        if draft is not None:
            children.append(draft)
        # the tail of a child is text of this element, even when the child is dropped
        text_parts.append(child.tail or "")
    text = normalize_space(" ".join(text_parts))

    attrs = []
    for name, value in element.attrib.items():
        name = _local_name(name)
        if name in kept:
            attrs.append((name, truncate_words(normalize_space(value), cfg.max_attr_tokens)))

    if not attrs and not text and not children:
        return None
    return _Draft(tag=tag, attrs=tuple(attrs), text=text, children=children)


def clean(raw: RawDom, cfg: CleanConfig = CleanConfig()) -> DomTree:
    """
    Clean a parsed document into a DomTree.

    Removed-tag subtrees, comments and processing instructions are deleted,
    attributes outside the keep-set are dropped, text is whitespace-normalized
    and contentless leaves are pruned bottom-up. Node ids are preorder ranks.

    Args:
        raw (RawDom): Parser output.
        cfg (CleanConfig): Removed tags and kept attribute names.

    Returns:
        DomTree: The cleaned tree.

    Raises:
        EmptyDocument: If nothing remains after cleaning.
    """
    removed = frozenset(t.lower() for t in cfg.removed_tags)
    kept = frozenset(a.lower() for a in cfg.kept_attrs)
    root_draft = _build(raw.root, cfg, removed, kept)
    if root_draft is None:
        raise EmptyDocument("document has no content after cleaning")

    nodes: List[DomNode] = []
    depths: List[int] = []
    # preorder numbering; stack holds (draft, parent id, depth)
    stack = [(root_draft, None, 0)]
    pending_children: List[List[int]] = []
    while stack:
        draft, parent, depth = stack.pop()
        node_id = len(nodes)
        nodes.append(DomNode(node_id, draft.tag, draft.attrs, draft.text, parent, ()))
        pending_children.append([])
        depths.append(depth)
        if parent is not None:
            pending_children[parent].append(node_id)
        for child in reversed(draft.children):
            stack.append((child, node_id, depth + 1))

    nodes = [
        DomNode(n.node_id, n.tag, n.attrs, n.text, n.parent, tuple(pending_children[n.node_id]))
        for n in nodes
    ]
    tree = DomTree(
        nodes=tuple(nodes),
        root=0,
        preorder=tuple(range(len(nodes))),
        postorder=_postorder(nodes),
        depths=tuple(depths),
    )
    logger.debug(f"Cleaned document into {len(tree)} nodes")
    return tree


def _postorder(nodes: List[DomNode]) -> Tuple[int, ...]:
    order = []
    stack = [(0, False)]
    while stack:
        node_id, expanded = stack.pop()
        if expanded:
            order.append(node_id)
            continue
        stack.append((node_id, True))
        for child in reversed(nodes[node_id].children):
            stack.append((child, False))
    return tuple(order)


def load_tree(path: str, cfg: CleanConfig = CleanConfig()) -> DomTree:
    """Read, parse and clean one HTML file."""
    return clean(parse_html(read_html(path)), cfg)


def to_html(tree: DomTree) -> str:
    """Serialize a cleaned tree back to HTML; each node's text precedes its children."""

    def render(node_id: int) -> str:
        node = tree[node_id]
        attrs = "".join(f' {name}="{html.escape(value, quote=True)}"' for name, value in node.attrs)
        if node.tag in VOID_ELEMENTS:
            return f"<{node.tag}{attrs}>"
        inner = html.escape(node.text, quote=False) + "".join(render(c) for c in node.children)
        return f"<{node.tag}{attrs}>{inner}</{node.tag}>"

    return render(tree.root)
