"""phantomcal: CT intensity-calibration-phantom segmentation and density
calibration, evaluated against a built-in synthetic case generator.
"""

from .calibration import (
    CalibrationModel,
    DegenerateFitError,
    ModelComparison,
    RegionStats,
    RegionVanishedError,
    RoiSpec,
    apply_calibration,
    compare_models,
    fit_calibration,
    manual_roi_calibration,
    region_statistics,
)
from .metrics import (
    FoldPlan,
    MetricsReport,
    aggregate_report,
    asd,
    case_metrics,
    crossval_split,
    dice,
    region_hu_abs_diff,
)
from .segmentation import (
    AmbiguousRodAssignmentError,
    DetectorParams,
    PhantomNotFoundError,
    erode_labels,
    import_mask,
    rod_centroids,
    segment_classical,
)
from .stats import (
    TestResult,
    bh_adjust,
    mann_whitney_u,
    shapiro_wilk,
    summarize,
    wilcoxon_signed_rank,
)
from .synth import (
    ArtifactSpec,
    BodyModel,
    CaseSpec,
    DeformationSpec,
    HalationPatches,
    JitterSpec,
    MetalStreaks,
    PartialFov,
    PhantomGeometry,
    ScannerModel,
    build_case,
    generate_dataset,
    load_manifest,
    rasterize_phantom,
    render_ct,
    site_template,
)
from .volume import (
    DensityVolume,
    GridMismatchError,
    HUVolume,
    ImageGrid,
    LabelMap,
    MetaImageError,
    binary_mask,
    read_volume,
    write_volume,
)

__version__ = "0.1.0"
