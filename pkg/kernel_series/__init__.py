__version__ = "0.1.0"

from ._errors import ArgumentError, ConfigError, DataError, FormatError, IoError, KernelSeriesError
from .data_types import (FULL32, BasisKind, BfpConfig, CoeffTensor, ConvSpec, FitConfig, FitMethod, FitReport,
                         Full32, InitScheme, Tensor3, Tensor4)
from .tensor_core import import_raw, load_tensor, save_tensor
from .basis import SampleGrid, chebyshev_T, design_matrix, eval_series, make_grid
from .fitter import fit, init_chebyshev, init_gaussian, mse_gradient, mse_loss
from .kernel_model import (CompressedLayer, compress_layer, layer_param_counts, load_compressed, reconstruct,
                           reconstruction_error, save_compressed)
from .conv_engine import conv2d, conv2d_continuous, layer_output_error
from .quant import load_quantized, model_size_bytes, quantize_bfp, save_quantized, ste_passthrough
from .arch_accounting import ArchDescriptor, HarmonicConfig, load_descriptor, parse_config, total_params
