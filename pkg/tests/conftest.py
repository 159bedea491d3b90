import numpy as np
import pytest

from quantevo import Model, Tensor, dense, relu_layer


@pytest.fixture
def two_layer_model():
    """Small dense-relu-dense model with fixed seeded weights."""
    rng = np.random.Generator(np.random.PCG64(42))
    w0 = rng.normal(0, 0.5, size=(3, 4))
    b0 = rng.normal(0, 0.1, size=4)
    w1 = rng.normal(0, 0.5, size=(4, 2))
    b1 = rng.normal(0, 0.1, size=2)
    model = Model(
        (dense("fc0", w0, b0), relu_layer("act0"), dense("fc1", w1, b1)),
        (3,),
    )
    return model


@pytest.fixture
def probe_batch():
    rng = np.random.Generator(np.random.PCG64(7))
    return Tensor(rng.standard_normal((5, 3)))
