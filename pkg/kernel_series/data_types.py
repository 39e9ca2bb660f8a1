import math

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, TypedDict

import numpy as np

from ._errors import ArgumentError, DataError


class BasisKind(str, Enum):
    '''
    The two series families a kernel can be expanded in.

    * COSINE: products cos(i0 x)·cos(i1 y) sampled on the half-sample grid in (0, π).
    * CHEBYSHEV: products T_i0(x)·T_i1(y) sampled on the Chebyshev-Gauss nodes in (-1, 1).

    The value is the spelling used on the command line.
    '''
    COSINE = "cos"
    CHEBYSHEV = "cheb"

    @property
    def code(self) -> int:
        """Byte stored in FKC1/FKQ1 headers."""
        return 0 if self is BasisKind.COSINE else 1

    @classmethod
    def from_code(cls, code: int) -> "BasisKind":
        if code == 0:
            return cls.COSINE
        if code == 1:
            return cls.CHEBYSHEV
        raise ValueError(f"unknown basis code {code}")


class FitMethod(str, Enum):
    """
    Defines how series coefficients are computed from a kernel.
    """
    GRADIENT_DESCENT = "gd"
    LEAST_SQUARES = "lstsq"
    CLOSED_FORM_DCT = "dct"


class InitScheme(str, Enum):
    """
    Starting point for gradient descent.
    """
    CHEBYSHEV_MEAN_DC = "mean-dc"
    GAUSSIAN_RANDOM = "gaussian"


class _DenseTensor:
    """
    Immutable row-major float64 array with a fixed rank and positive extents.
    """

    rank: int = 0
    "Number of axes every instance must have."

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim != self.rank:
            raise ArgumentError(f"{type(self).__name__} needs {self.rank} axes, got shape {arr.shape}")
        if any(extent < 1 for extent in arr.shape):
            raise ArgumentError(f"{type(self).__name__} extents must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{type(self).__name__} contains non-finite values")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def size(self) -> int:
        return int(self._data.size)

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


class Tensor4(_DenseTensor):
    """
    :class:`Tensor4 <Tensor4>` kernel weights laid out (c_out, c_in, k_h, k_w).
    """

    rank = 4

    @property
    def c_out(self) -> int:
        return self.shape[0]

    @property
    def c_in(self) -> int:
        return self.shape[1]

    @property
    def k_h(self) -> int:
        return self.shape[2]

    @property
    def k_w(self) -> int:
        return self.shape[3]

    @property
    def k(self) -> int:
        """Side length of a square kernel."""
        if self.k_h != self.k_w:
            raise ArgumentError(f"kernel is not square: {self.k_h}x{self.k_w}")
        return self.k_h


class Tensor3(_DenseTensor):
    """
    :class:`Tensor3 <Tensor3>` feature map laid out (channels, height, width).
    """

    rank = 3

    @property
    def channels(self) -> int:
        return self.shape[0]

    @property
    def height(self) -> int:
        return self.shape[1]

    @property
    def width(self) -> int:
        return self.shape[2]


class CoeffTensor(_DenseTensor):
    """
    :class:`CoeffTensor <CoeffTensor>` series coefficients laid out (c_out, c_in, n, n).

    The flat per-filter index i0·n + i1 is the row-major position of a[i0, i1].
    """

    rank = 4

    def __init__(self, data):
        super().__init__(data)
        if self.shape[2] != self.shape[3]:
            raise ArgumentError(f"coefficient blocks must be n x n, got {self.shape[2]}x{self.shape[3]}")

    @property
    def c_out(self) -> int:
        return self.shape[0]

    @property
    def c_in(self) -> int:
        return self.shape[1]

    @property
    def n(self) -> int:
        return self.shape[2]

    def filter(self, o: int, i: int) -> np.ndarray:
        return self._data[o, i]


@dataclass(frozen=True)
class FitConfig:
    """
    :class:`FitConfig <FitConfig>` knobs of the coefficient fit.
    """

    learning_rate: float = 0.05
    "Initial fixed step of gradient descent; halved whenever a step would raise the loss."

    max_iters: int = 2000
    "Upper bound on descent steps per filter."

    grad_tol: float = 1e-10
    "Descent stops once the gradient max-norm falls below this."

    init: Optional[InitScheme] = None
    "Descent starting point. None picks the basis default (see :meth:`init_for`)."

    method: FitMethod = FitMethod.LEAST_SQUARES
    "Descent only converges to grad_tol, so full-order fits default to the normal equations."

    seed: int = 0
    "Root of every random stream; filter (o, i) draws from the stream (seed, o, i)."

    threads: int = 1
    "Worker threads for per-filter descent."

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_iters < 1:
            raise ArgumentError(f"max_iters must be at least 1, got {self.max_iters}")
        if not self.grad_tol > 0:
            raise ArgumentError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.threads < 1:
            raise ArgumentError(f"threads must be at least 1, got {self.threads}")
        if self.seed < 0:
            raise ArgumentError(f"seed must be non-negative, got {self.seed}")

    def init_for(self, kind: BasisKind) -> InitScheme:
        if self.init is not None:
            return self.init
        if kind is BasisKind.CHEBYSHEV:
            return InitScheme.CHEBYSHEV_MEAN_DC
        return InitScheme.GAUSSIAN_RANDOM


@dataclass
class FitReport:
    """
    :class:`FitReport <FitReport>` diagnostics of one layer fit. Arrays are shaped (c_out, c_in).
    """

    method: Optional[FitMethod]
    "None when the report was read back from a file."

    mse: np.ndarray
    "Final mean squared error per filter over the K² grid samples."

    iterations: Optional[np.ndarray] = None
    "Descent steps per filter (0 for direct solves). Not persisted."

    max_abs_residual: Optional[np.ndarray] = None
    "Largest absolute grid residual per filter. Not persisted."

    fell_back: bool = False
    "True when the normal equations could not be factored and descent was used instead."

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))

    @property
    def max_mse(self) -> float:
        return float(np.max(self.mse))


@dataclass(frozen=True)
class ConvSpec:
    """
    :class:`ConvSpec <ConvSpec>` geometry of a reference convolution.
    """

    stride: int = 1
    padding: Optional[int] = None
    "Zero padding per side; None means ⌊K/2⌋."
    groups: int = 1
    padding_mode: str = "zeros"

    def __post_init__(self):
        if self.stride < 1:
            raise ArgumentError(f"stride must be positive, got {self.stride}")
        if self.padding is not None and self.padding < 0:
            raise ArgumentError(f"padding must be non-negative, got {self.padding}")
        if self.groups < 1:
            raise ArgumentError(f"groups must be positive, got {self.groups}")
        if self.padding_mode != "zeros":
            raise ArgumentError(f"only zero padding is supported, got {self.padding_mode!r}")

    def resolve_padding(self, k: int) -> int:
        return k // 2 if self.padding is None else self.padding


@dataclass(frozen=True)
class BfpConfig:
    """
    :class:`BfpConfig <BfpConfig>` block floating point with one scalar per block.

    A value is a sign bit, a signed 7-bit exponent in [-64, 63] and an m-bit mantissa magnitude.
    """

    mantissa_bits: int
    exponent_bits: int = 7
    block_size: int = 1

    def __post_init__(self):
        if not 1 <= self.mantissa_bits <= 23:
            raise ArgumentError(f"mantissa bits must be in 1..23, got {self.mantissa_bits}")
        if self.exponent_bits != 7:
            raise ArgumentError("the exponent is fixed at 7 bits")
        if self.block_size != 1:
            raise ArgumentError("only block size 1 is supported")

    @property
    def bits_per_value(self) -> int:
        return self.mantissa_bits + self.exponent_bits + 1

    @property
    def min_exponent(self) -> int:
        return -(2 ** (self.exponent_bits - 1))

    @property
    def max_exponent(self) -> int:
        return 2 ** (self.exponent_bits - 1) - 1

    @property
    def max_mantissa(self) -> int:
        return 2 ** self.mantissa_bits - 1

    @property
    def max_magnitude(self) -> float:
        return math.ldexp(self.max_mantissa, self.max_exponent - (self.mantissa_bits - 1))


@dataclass(frozen=True)
class Full32:
    """Unquantized IEEE-754 single precision storage."""

    bits_per_value: int = 32


FULL32 = Full32()


class ParamCounts(TypedDict):
    original: int
    compressed: int
    reduction_pct: float
    retained_pct: float


class OutputError(TypedDict):
    rel_l2: float
    max_abs: float


''' Per-filter reconstruction metrics, each an array shaped (c_out, c_in) '''
FilterErrors = TypedDict('FilterErrors', {"mse": np.ndarray, "l2": np.ndarray, "max_abs": np.ndarray})
