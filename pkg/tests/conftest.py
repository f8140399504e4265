import pytest

from proxilab import data, nnmodel, socnav


@pytest.fixture(scope="session")
def fixture_scenarios():
    return socnav.parse_dataset(data.socnav_fixture_path())


@pytest.fixture(scope="session")
def fixture_examples(fixture_scenarios):
    return socnav.label_scenarios(socnav.filter_single_human(fixture_scenarios))


@pytest.fixture(scope="session")
def fixture_split(fixture_examples):
    return socnav.split(fixture_examples, (0.8, 0.1, 0.1), seed=0)


@pytest.fixture(scope="session")
def base_model(fixture_split):
    net, _ = nnmodel.train(fixture_split, train_cfg=nnmodel.TrainConfig(seed=0))
    return net


@pytest.fixture(scope="session")
def quick_model(fixture_split):
    """Lightly trained model for tests that only need plumbing, not accuracy."""
    net, _ = nnmodel.train(fixture_split, train_cfg=nnmodel.TrainConfig(seed=0, epochs=40))
    return net
