"""Shared hypothesis strategies and seeded generators."""
import numpy as np
from hypothesis import strategies as st

from legtrack.geom import Transform, random_rotation

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
seeds = st.integers(0, 2**32 - 1)


def random_transform(rng, size=None, scale=1000.0) -> Transform:
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    return Transform(random_rotation(rng, size), rng.uniform(-scale, scale, shape + (3,)))


transforms = seeds.map(lambda s: random_transform(np.random.default_rng(s)))
