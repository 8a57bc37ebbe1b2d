import pytest

from domlm.config import CleanConfig
from domlm.dom_ingest import clean, load_tree, parse_html, read_html, to_html
from domlm.errors import EmptyDocument, EncodingError, IoError


def _tree(markup: str, cfg: CleanConfig = CleanConfig()):
    return clean(parse_html(markup.encode("utf-8")), cfg)


def test_minimal_page_is_a_chain():
    tree = _tree("<html><body><p>hi</p></body></html>")
    assert [n.tag for n in tree.nodes] == ["html", "body", "p"]
    assert tree[2].text == "hi"
    assert tree.preorder == (0, 1, 2)
    assert tree.postorder == (2, 1, 0)
    assert tree.depths == (0, 1, 2)


def test_implied_close_gives_sibling_paragraphs():
    tree = _tree("<p>a<p>b")
    body = tree[1]
    assert body.tag == "body"
    assert [tree[c].tag for c in body.children] == ["p", "p"]
    assert [tree[c].text for c in body.children] == ["a", "b"]


def test_empty_input_parses_to_skeleton():
    raw = parse_html(b"")
    assert [el.tag for el in raw.root] == ["head", "body"]
    with pytest.raises(EmptyDocument):
        clean(raw)


def test_script_and_comments_are_removed():
    tree = _tree("<body><script>var x = 1;</script><!-- note --><p>kept</p><style>p {}</style></body>")
    assert [n.tag for n in tree.nodes] == ["html", "body", "p"]
    assert all("var" not in n.text for n in tree.nodes)


def test_attribute_keep_set():
    tree = _tree('<div class="a" onclick="f()">x</div>')
    div = tree[2]
    assert div.attrs == (("class", "a"),)


def test_tail_text_of_removed_child_stays_with_parent():
    tree = _tree("<p>before<script>x</script> after</p>")
    assert tree[2].text == "before after"


def test_contentless_leaves_are_pruned():
    tree = _tree("<div><span></span><p>x</p></div>")
    assert [n.tag for n in tree.nodes] == ["html", "body", "div", "p"]


def test_attribute_values_are_truncated():
    long_value = " ".join(f"w{i}" for i in range(100))
    tree = _tree(f'<div class="{long_value}">x</div>', CleanConfig(max_attr_tokens=3))
    assert tree[2].attrs == (("class", "w0 w1 w2"),)


def test_tag_path_counts_same_tag_siblings():
    tree = _tree("<div><p>a</p><span>b</span><p>c</p></div>")
    last_p = [n.node_id for n in tree.nodes if n.text == "c"][0]
    assert tree.tag_path(last_p) == "/html[1]/body[1]/div[1]/p[2]"


def test_cleaning_is_a_fixed_point():
    markup = (
        '<html><head><title>T</title></head><body><div id="main" data-x="1">'
        "<ul><li>one</li><li>two <b>bold</b> tail</li></ul><img class=\"pic\"><p>end &amp; more</p>"
        "</div></body></html>"
    )
    once = _tree(markup)
    twice = _tree(to_html(once))
    assert twice == once


def test_declared_charset_is_honored():
    raw = '<html><head><meta charset="latin-1"></head><body><p>caf\xe9</p></body></html>'.encode("latin-1")
    tree = clean(parse_html(raw))
    assert tree[len(tree) - 1].text == "caf\xe9"


def test_undecodable_bytes_raise():
    with pytest.raises(EncodingError):
        parse_html(b"<p>\xff\xfe</p>")


def test_missing_file_raises_io_error(tmp_path):
    with pytest.raises(IoError):
        read_html(str(tmp_path / "nope.html"))


def test_load_tree_reads_file(tmp_path):
    page = tmp_path / "p.html"
    page.write_text("<p>hello world</p>", encoding="utf-8")
    assert load_tree(str(page))[2].text == "hello world"
