import pytest

from domlm.config import EncoderConfig, PositionLimits, WindowConfig
from domlm.corpus import load_dataset
from domlm.pipeline import preprocess_pages
from domlm.synthetic import SyntheticSiteConfig, generate_synthetic, write_synthetic
from domlm.tokenizer import build_vocab, save_vocab

TINY_SYNTHETIC = SyntheticSiteConfig(
    n_sites=3,
    templates_per_site=1,
    pages_per_template=3,
    domains=("movie",),
    boilerplate=0.2,
    distractors=0.5,
    test_sites=1,
    fewshot_pages=1,
    seed=3,
)
TINY_WINDOW = WindowConfig(max_tokens=64, stride=32)
TINY_LIMITS = PositionLimits(max_nodes=128, max_depth=32, max_tags=64, max_len=256)


def tiny_encoder(vocab_size: int, **overrides) -> EncoderConfig:
    values = dict(
        layers=1, hidden=16, heads=2, ffn=32, vocab_size=vocab_size,
        max_nodes=128, max_depth=32, max_tags=64, max_len=256, seed=0,
    )
    values.update(overrides)
    return EncoderConfig(**values)


@pytest.fixture(scope="session")
def syn_corpus():
    return generate_synthetic(TINY_SYNTHETIC)


@pytest.fixture(scope="session")
def syn_dir(tmp_path_factory, syn_corpus):
    out = tmp_path_factory.mktemp("syn")
    write_synthetic(syn_corpus, out)
    return out


@pytest.fixture(scope="session")
def dataset(syn_dir):
    return load_dataset(syn_dir)


@pytest.fixture(scope="session")
def vocab(dataset):
    return build_vocab(p.tree for p in dataset.pages.values())


@pytest.fixture(scope="session")
def vocab_path(tmp_path_factory, vocab):
    path = tmp_path_factory.mktemp("vocab") / "vocab.txt"
    save_vocab(vocab, str(path))
    return path


@pytest.fixture(scope="session")
def docs(dataset, vocab):
    return preprocess_pages(list(dataset.pages.values()), vocab, TINY_WINDOW, TINY_LIMITS)


@pytest.fixture
def encoder_cfg(vocab):
    return tiny_encoder(vocab.size)
