import pytest

from wcfuzz.subjects import get_subject


@pytest.fixture
def insertion3():
    return get_subject("insertion_sort", n=3)


@pytest.fixture
def insertion8():
    return get_subject("insertion_sort", n=8)


@pytest.fixture
def abs_sum2():
    return get_subject("abs_sum")
