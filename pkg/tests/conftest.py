import numpy as np
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


def vectors(lo=-2.0, hi=2.0):
    # entries are zero or of order one, so relative tolerances stay meaningful
    el = st.floats(lo, hi, allow_nan=False, allow_infinity=False).filter(
        lambda x: x == 0 or abs(x) > 1e-6)
    return arrays(float, 3, elements=el)


def dyadics():
    return st.tuples(arrays(float, (3, 3), elements=finite),
                     arrays(float, (3, 3), elements=finite)).map(lambda t: t[0] + 1j * t[1])


@st.composite
def separated_pairs(draw, min_sep=0.1, max_sep=10.0):
    """Point pairs with |r - r'| in [min_sep, max_sep]."""
    r = draw(vectors())
    d = draw(vectors(-1.0, 1.0))
    norm = np.linalg.norm(d)
    if norm < 1e-3:
        d, norm = np.array([0.0, 0.0, 1.0]), 1.0
    R = draw(st.floats(min_sep, max_sep))
    return r, r + R * d / norm


@st.composite
def rotations(draw):
    q = draw(arrays(float, 4, elements=st.floats(-1.0, 1.0)))
    n = np.linalg.norm(q)
    if n < 1e-3:
        q, n = np.array([1.0, 0.0, 0.0, 0.0]), 1.0
    w, x, y, z = q / n
    return np.array([[1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                     [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                     [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)]])
