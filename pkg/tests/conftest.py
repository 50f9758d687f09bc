"""Common test fixtures and utilities"""

import sys
from pathlib import Path
import pytest
import tempfile

import numpy as np

# Add src directory to Python path for imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from features.dataset import Dataset, Instance  # noqa: E402
from features.schema import Domain, FieldKind, FieldSchema, Schema  # noqa: E402
from features.synthetic import SynthConfig, generate_synthetic  # noqa: E402
from features.vocabulary import Vocabulary  # noqa: E402
from minet.embedding import ReprSpec  # noqa: E402
from minet.model import MiNetConfig  # noqa: E402
from training.trainer import TrainConfig  # noqa: E402

N_FEATURES = 24


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end reproductions")


def pytest_collection_modifyitems(config, items):
    """Slow tests run only when selected with -m"""
    if "slow" in (config.getoption("-m") or ""):
        return
    skip = pytest.mark.skip(reason="slow; select with -m slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def temp_dir():
    """Create temporary directory for tests"""
    with tempfile.TemporaryDirectory() as tmp:
        yield Path(tmp)


@pytest.fixture
def tiny_schema():
    """Two fields per group; the second news field is multi-valued"""
    return Schema(fields=[
        FieldSchema(domain=Domain.USER, field_name="user_id"),
        FieldSchema(domain=Domain.USER, field_name="user_segment"),
        FieldSchema(domain=Domain.SOURCE, field_name="news_category"),
        FieldSchema(domain=Domain.SOURCE, field_name="news_tags", field_kind=FieldKind.MULTI),
        FieldSchema(domain=Domain.TARGET, field_name="ad_id"),
        FieldSchema(domain=Domain.TARGET, field_name="ad_category"),
    ])


@pytest.fixture
def tiny_spec(tiny_schema):
    return ReprSpec.from_schema(tiny_schema, dim=2)


@pytest.fixture
def tiny_vocabulary():
    return Vocabulary.from_features(["<unknown>"] + [f"f={i}" for i in range(1, N_FEATURES)])


@pytest.fixture
def small_config():
    """Gradient-check sized network"""
    return MiNetConfig(embedding_dim=2, transfer_rank=2, attention_hidden=4, fc_dims=[8, 4])


@pytest.fixture
def fast_train_config():
    return TrainConfig(batch_source=4, batch_target=4, epochs=2, learning_rate=0.05, gamma=0.5, seed=0)


def random_item(rng, n_features=N_FEATURES, multi=False):
    first = (int(rng.integers(1, n_features)),)
    if multi:
        size = int(rng.integers(1, 3))
        second = tuple(int(f) for f in rng.choice(np.arange(1, n_features), size=size, replace=False))
    else:
        second = (int(rng.integers(1, n_features)),)
    return (first, second)


def make_instance(rng, domain=Domain.TARGET, label=None, n_source=2, n_target=1, instance_id=0):
    """Random instance laid out for tiny_schema"""
    return Instance(
        domain=domain,
        label=int(rng.integers(2)) if label is None else label,
        user_feature_ids=random_item(rng),
        item_feature_ids=random_item(rng, multi=domain == Domain.SOURCE),
        clicked_source_items=tuple(random_item(rng, multi=True) for _ in range(n_source)),
        clicked_target_items=tuple(random_item(rng) for _ in range(n_target)),
        instance_id=instance_id,
    )


@pytest.fixture
def instance_factory():
    return make_instance


@pytest.fixture
def tiny_dataset(tiny_schema, tiny_vocabulary):
    """16 target and 16 source instances with both labels present"""
    rng = np.random.default_rng(7)
    target = [
        make_instance(rng, Domain.TARGET, label=i % 2, n_source=i % 3, n_target=i % 4, instance_id=i)
        for i in range(16)
    ]
    source = [make_instance(rng, Domain.SOURCE, label=i % 2, instance_id=100 + i) for i in range(16)]
    return Dataset(schema=tiny_schema, vocabulary=tiny_vocabulary, source_instances=source, target_instances=target)


@pytest.fixture
def small_synth_config():
    return SynthConfig(
        n_users=60,
        n_source_categories=4,
        n_target_categories=4,
        news_per_category=5,
        ads_per_category=3,
        n_tags=6,
        max_tags_per_news=2,
        mean_source_seq=3.0,
        mean_target_seq=1.5,
        source_instances_per_user=2,
        target_instances_per_user=4,
    )


@pytest.fixture
def small_synthetic(small_synth_config):
    return generate_synthetic(small_synth_config, seed=3)
