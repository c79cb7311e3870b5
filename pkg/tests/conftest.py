from py4tcp.custom_types import CategoricalDist, ChannelModel, SymmetricChannelSpec
from py4tcp.session import TcpSession
import numpy as np
import pytest


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20231017)


@pytest.fixture
def noisy_labels() -> SymmetricChannelSpec:
    return SymmetricChannelSpec(epsilon=0.1, m_classes=10)


@pytest.fixture
def binary_pair() -> tuple[CategoricalDist, CategoricalDist]:
    return CategoricalDist([0.8, 0.2]), CategoricalDist([0.2, 0.8])


@pytest.fixture
def small_channel() -> ChannelModel:
    return ChannelModel.from_matrix([0.5, 0.3, 0.2], np.array([[0.7, 0.2, 0.1],
                                                               [0.1, 0.6, 0.3],
                                                               [0.25, 0.25, 0.5]]))


@pytest.fixture
def session(tmp_path) -> TcpSession:
    return TcpSession(show_prints=False, exception_on_error=True, log_file=str(tmp_path / "tlab_logs.log"))
