import pytest

from plga.abstraction import reset_abstractor_cache
from plga.catalog import default_catalog
from plga.experiment import builtin_rules_path, load_builtin_spec
from plga.gateway import LmBackendConfig, reset_backend_cache


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def scripted_backend():
    return LmBackendConfig(mode="scripted", rules_path=builtin_rules_path())


@pytest.fixture(autouse=True)
def _fresh_caches():
    # Backend instances and abstraction caches are process-global; keep
    # tests order-independent.
    reset_backend_cache()
    reset_abstractor_cache()
    yield


@pytest.fixture
def ripe_spec():
    return load_builtin_spec("pick_ripe")


@pytest.fixture
def hot_spec():
    return load_builtin_spec("sweep_hot")
