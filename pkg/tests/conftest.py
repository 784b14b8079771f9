import numpy as np
import pytest

from surfdiff import calibration as cb
from surfdiff import geometry as geo


@pytest.fixture(scope="session")
def unit_circle_256():
    curve = geo.PolyCurve([geo.make_circle((0.0, 0.0), 1.0, 256)])
    caches = geo.build_geometry(curve)
    return curve, caches


@pytest.fixture(scope="session")
def circle_calibration():
    ref = cb.AnalyticCircles([cb.CircleSpec((0.0, 0.0), 1.0)])
    return cb.Calibration(ref, 0.25)


def vertex_angles(cache):
    return np.arctan2(cache.vertices[:, 1], cache.vertices[:, 0])
