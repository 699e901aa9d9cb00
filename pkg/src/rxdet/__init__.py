"""Global anomaly detectors for multiband rasters.

Three detectors share one scoring convention (higher = more anomalous):
linear RX (Mahalanobis distance), kernel RX (Gaussian-kernel feature space
over a subsampled support), and randomized RX (linear RX on explicit random
Fourier features, trading exactness for feature count D).  Supporting
modules provide raster I/O, synthetic scenes, ROC/AUC evaluation, phase
benchmarks, and a CLI (``rxdet``).
"""

from ._backend import active_backend, available_backends
from .errors import DataError, DegenerateDataError, NumericError, RxdetError
from .evalbench import (
    BenchRecord,
    GridSearchResult,
    RocResult,
    bench_detector,
    grid_search,
    roc_auc,
    summarize_bench,
)
from .krx import GaussianKernel, KrxModel, gauss_kernel, krx_fit, krx_score
from .numerics import (
    RngSpec,
    SpdFactor,
    gaussian_sample,
    median_lengthscale,
    pairwise_sq_dists,
    solve,
    spd_factorize,
)
from .raster import (
    Mask,
    PatchGrid,
    Raster,
    ScoreMap,
    extract_mask_patches,
    extract_patches,
    full_cover_grid,
    read_mask,
    read_raster,
    read_scoremap,
    write_mask,
    write_raster,
    write_scoremap,
)
from .rff import FeatureMatrix, RffBasis, approx_gram, load_basis, rff_map, rff_sample, save_basis
from .rrx import RrxModel, load_model, rrx_fit, rrx_score, rrx_score_streaming, save_model
from .rx import RxModel, rx_fit, rx_score
from .synthgen import (
    SceneSpec,
    generate_injected_patchwork,
    generate_scene,
    inject_targets,
    scatter_layout_mask,
)

__version__ = "0.1.0"
