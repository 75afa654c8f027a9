"""Phase-regularized MRI reconstruction with phase cycling.

Alternating proximal-gradient reconstruction of magnitude and phase images
under the bilinear forward model ``y = A(M m . exp(i P p)) + noise``, with
model builders for partial Fourier, water-fat and velocity-encoded flow
imaging, wavelet and divergence-free regularizers, a synthetic-data
simulator and a batch CLI.
"""

from .linops import (LinOp, SpectralEstimate, block_diag, compose, hstack,
                     identity_op, make_fft_sampling_op, make_sens_op,
                     matrix_op, max_eigenvalue, reshape_op, scale_op, vstack)
from .models import (FlowEncodingSpec, ForwardModel, MagnitudeVec, PhaseVec,
                     WaterFatSpec, build_flow, build_partial_fourier,
                     build_waterfat, forward, objective, robust_objective)
from .phantom import (Phantom, SamplingMask, combine_masks, full_mask,
                      make_phantom, make_sens_maps, partial_fourier_mask,
                      poisson_disk_mask, psnr, psnr_rmse,
                      simulate_acquisition)
from .regularizers import (Regularizer, divergence, divfree_project,
                           make_divfree_reg, make_l1_wavelet_reg, make_l2_reg,
                           soft_threshold)
from .solver import (DivergenceError, PhaseWrapSet, ReconResult, SolverConfig,
                     default_step_sizes, init_zero_filled, magnitude_update,
                     make_phase_wrap_set, make_phase_wrap_set_from_init,
                     phase_update_cycled, reconstruct, spectral_constants,
                     two_stage_grid_search)
from .wavelets import WaveletSpec, dwt, idwt

__version__ = "0.1.0"
