"""Small shared builders for the test-suite."""
import numpy as np

SQRT8 = float(np.sqrt(8.0))


def square(side):
    return np.array([(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)])


def constant_range(r):
    return lambda p: np.full(len(np.atleast_2d(p)), float(r))
