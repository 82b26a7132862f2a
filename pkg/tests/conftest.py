import numpy as np
import pytest

from divbound.sampleset import EmpiricalDistribution
from divbound.synthetic import ProductBernoulli


def enumerate_joint(w: ProductBernoulli) -> EmpiricalDistribution:
    """Exact joint distribution of a product Bernoulli over all 2^s strings."""
    s = w.dim
    probs = {}
    for idx in range(1 << s):
        bits = [(idx >> (s - 1 - i)) & 1 for i in range(s)]
        p = 1.0
        for b, wi in zip(bits, w.weights):
            p *= wi if b else 1.0 - wi
        probs["".join(str(b) for b in bits)] = p
    total = sum(probs.values())
    probs = {k: v / total for k, v in probs.items()}
    return EmpiricalDistribution(support_dim=s, probs=probs)


def random_distribution(rng: np.random.Generator, s: int) -> EmpiricalDistribution:
    """Random dense distribution over {0,1}^s via normalized exponentials."""
    raw = rng.exponential(size=1 << s)
    raw /= raw.sum()
    keys = [format(i, f"0{s}b") for i in range(1 << s)]
    return EmpiricalDistribution(support_dim=s, probs=dict(zip(keys, raw)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
