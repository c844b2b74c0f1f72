import numpy as np

from models import Partition


def random_partition(rng, n, r, k):
    order = rng.permutation(n)
    assignment = np.full(n, -1)
    for label in range(r):
        assignment[order[label * k:(label + 1) * k]] = label
    return Partition(assignment, r=r)
