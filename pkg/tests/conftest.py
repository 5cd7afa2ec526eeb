import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
MINICORPUS = FIXTURES / "minicorpus"
PARAMS = FIXTURES / "params.xml"

sys.path.insert(0, str(Path(__file__).resolve().parent))
sys.path.insert(0, str(ROOT / "scripts"))


@pytest.fixture(scope="session")
def catalog():
    from conflog.catalog import load_catalog

    return load_catalog(PARAMS)


@pytest.fixture(scope="session")
def corpus_sources():
    from conflog.frontend import read_sources

    return read_sources(MINICORPUS)


@pytest.fixture(scope="session")
def corpus_analysis(catalog, corpus_sources):
    from conflog.frontend import parse_texts
    from conflog.ir import Program
    from conflog.taint import analyze

    return analyze(Program(parse_texts(corpus_sources)), catalog)
