"""Shared fixtures: synthetic IDX corpora at two scales.

``tiny_corpus`` is a 60-image set for fast CLI and loader tests;
``digit_corpus`` is the full-size set the end-to-end suite trains on.
Both are built once per session.
"""

from dataclasses import dataclass
from pathlib import Path

import pytest

from quigan.synth import make_corpus


@dataclass
class Corpus:
    images: str
    labels: str


def _build(tmp_path_factory, name: str, n_target: int, n_other: int) -> Corpus:
    root = tmp_path_factory.mktemp(name)
    images = str(Path(root) / "train-images.idx3-ubyte")
    labels = str(Path(root) / "train-labels.idx1-ubyte")
    make_corpus(images, labels, n_target=n_target, n_other=n_other, seed=0)
    return Corpus(images, labels)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory) -> Corpus:
    return _build(tmp_path_factory, "tiny_corpus", n_target=50, n_other=10)


@pytest.fixture(scope="session")
def digit_corpus(tmp_path_factory) -> Corpus:
    return _build(tmp_path_factory, "digit_corpus", n_target=1300, n_other=60)
