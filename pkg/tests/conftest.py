import pytest

from surgdistill.corpus import load_manifest
from surgdistill.minicorpus import build_mini_corpus


@pytest.fixture(scope="session")
def mini_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("minicorpus")
    build_mini_corpus(out)
    return out


@pytest.fixture(scope="session")
def mini_manifest(mini_corpus_dir):
    return load_manifest(mini_corpus_dir / "manifest.json")
