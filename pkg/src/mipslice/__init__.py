"""L3 slice detection in 3D CT volumes via MIP confidence-map regression."""

from .augment import AugmentConfig, augment, simulate_thickness
from .errors import FormatError, MetadataError, ShapeError
from .estimators import L3SliceDetector, MipPreprocessor
from .evaluation import ErrorStats, benchmark, interrater_stats, localization_errors
from .inference import (
    PredictionResult,
    pad_to_divisible,
    predict,
    predict_volume,
    sliding_window_predict,
)
from .mip import (
    MipImage,
    load_mip_png,
    preprocess_volume,
    project_frontal,
    project_sagittal_restricted,
    resample_to_1mm,
    save_mip_png,
    threshold_and_quantize,
)
from .models import (
    ModelConfig,
    build_baseline_regressor,
    build_l3unet_1d,
    build_l3unet_2d,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .phantom import PhantomConfig, generate_dataset, generate_phantom, render_phantom_volume
from .targets import (
    Annotation,
    make_confidence_map_1d,
    make_confidence_map_2d,
    merge_annotations,
    read_annotations_csv,
    sigma_schedule,
    write_annotations_csv,
)
from .training import TrainConfig, TrainHistory, load_dataset, loss_l2, sample_crop, train
from .volume import Volume3D, load_volume, save_volume, slice_index_for_y

__version__ = "0.1.0"
