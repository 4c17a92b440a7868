import numpy as np
import pytest

from latefuse.core import Vocabulary
from latefuse.providers import UtteranceContext


@pytest.fixture
def abc_vocab():
    """Six-token vocabulary: specials plus a, b, c (ids 3, 4, 5)."""
    return Vocabulary(tokens=("<s>", "</s>", "<unk>", "a", "b", "c"))


@pytest.fixture
def empty_ctx():
    return UtteranceContext(utt_id="u0")


class TableProvider:
    """Deterministic test provider: a history -> logits lookup table."""

    def __init__(self, vocab, table, default=None):
        self.vocab = vocab
        self.table = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.default = np.zeros(vocab.size) if default is None else np.asarray(default, float)

    def next_logits(self, history, ctx):
        return self.table.get(tuple(history), self.default).copy()


class ConstantProvider:
    """Same logits at every step."""

    def __init__(self, vocab, logits):
        self.vocab = vocab
        self.logits = np.asarray(logits, dtype=np.float64)

    def next_logits(self, history, ctx):
        return self.logits.copy()


@pytest.fixture
def table_provider_cls():
    return TableProvider


@pytest.fixture
def constant_provider_cls():
    return ConstantProvider
