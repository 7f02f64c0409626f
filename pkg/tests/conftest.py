import pytest

from firstvisit import space
from firstvisit.anchors import AnchorSource
from firstvisit.derived import construct_rank_sequence
from firstvisit.targets import GeometricSchedule, select_tails_countable


@pytest.fixture(scope="session")
def golden():
    return space.RotationMap()


@pytest.fixture(scope="session")
def cat_map():
    return space.ToralAutomorphismMap()


@pytest.fixture(scope="session")
def rank1_centers(golden):
    anchor = AnchorSource(golden, seed=42)
    return construct_rank_sequence(
        space.CirclePoint(0.37), 0.08, rank=1, branching=3, anchor=anchor
    )


@pytest.fixture(scope="session")
def rank1_family(rank1_centers):
    return select_tails_countable(rank1_centers, GeometricSchedule(1.0, 0.5))


def brute_force_hit(map_, x, center, radius, K):
    """Independent stepwise scan: first k in 0..K inside the open ball."""
    p = x
    for k in range(K + 1):
        if space.distance(p, center) < radius:
            return k
        p = space.apply_map(map_, p)
    return None


@pytest.fixture(scope="session")
def brute_hit():
    return brute_force_hit
