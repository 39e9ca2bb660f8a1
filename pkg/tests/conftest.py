from pathlib import Path

import numpy as np
import pytest

from kernel_series import Tensor3, Tensor4, save_tensor

ARCH_DIR = Path(__file__).resolve().parent.parent / 'architectures'


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def arch_dir():
    return ARCH_DIR


def random_kernels(rng, c_out=2, c_in=3, k=3) -> Tensor4:
    return Tensor4(rng.standard_normal((c_out, c_in, k, k)))


@pytest.fixture
def kernel_file(tmp_path, rng):
    """A 4x3x3x3 kernel file and the tensor it holds."""
    kernels = random_kernels(rng, 4, 3, 3)
    path = tmp_path / 'kernels.fkt'
    save_tensor(kernels, path)
    return path, kernels


@pytest.fixture
def feature_file(tmp_path, rng):
    fmap = Tensor3(rng.standard_normal((3, 6, 5)))
    path = tmp_path / 'input.fkt'
    save_tensor(fmap, path)
    return path, fmap
