"""Shared hypothesis strategies and small oracles for the test suite."""
import math

import numpy as np
from hypothesis import strategies as st

from hyplab.geometry import BoundaryPoint, DiskPoint, UnitTangent

angles = st.floats(0.0, 2.0 * math.pi, allow_nan=False, exclude_max=True)
radii = st.floats(0.0, 0.95, allow_nan=False)


@st.composite
def disk_points(draw, rmax=0.95):
    r = draw(st.floats(0.0, rmax, allow_nan=False))
    a = draw(angles)
    return DiskPoint(r * math.cos(a), r * math.sin(a))


@st.composite
def boundary_points(draw):
    return BoundaryPoint(draw(angles))


@st.composite
def tangents(draw, rmax=0.9):
    return UnitTangent(draw(disk_points(rmax)), draw(angles))


@st.composite
def distinct_pair(draw, min_sep=1e-3):
    a = draw(angles)
    d = draw(st.floats(min_sep, 2.0 * math.pi - min_sep, allow_nan=False))
    return BoundaryPoint(a), BoundaryPoint(a + d)


def random_disk_points(rng, n, rmax=0.95):
    r = rmax * np.sqrt(rng.random(n))
    a = 2.0 * math.pi * rng.random(n)
    return [DiskPoint(float(x), float(y)) for x, y in zip(r * np.cos(a), r * np.sin(a))]
