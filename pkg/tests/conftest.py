import numpy as np
import pytest

from selfcollide.robot import desk_arm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def arm():
    return desk_arm()


def random_triangles(rng, n, scale=1.0, min_area=1e-3):
    """(n, 3, 3) random triangles with area above ``min_area``."""
    out = []
    while len(out) < n:
        t = rng.normal(0.0, scale, size=(3, 3))
        if 0.5 * np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0])) > min_area:
            out.append(t)
    return np.array(out)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
