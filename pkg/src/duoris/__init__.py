"""Dual reflective-surface radio imaging toolkit.

Simulates complementary reflection and transmission captures of a scene
placed between two programmable reflective panels, reconstructs front-face
images with classical estimators, and generates labelled synthetic datasets
for learning-based reconstruction.
"""

from .config import Config, ConfigError, load_config, make_config
from .dataset import (DatasetManifest, channels_to_complex,
                      complex_to_channels, derive_noise_seed, evaluate_run,
                      gen_dataset, load_sample_measurement,
                      measurement_from_array, measurement_to_array,
                      split_assignments)
from .emcore import (FrequencyGrid, MediumParams, SourceWaveform, VACUUM,
                     VACUUM_PERMEABILITY, VACUUM_PERMITTIVITY, flat_spectrum,
                     greens, lfm_spectrum, wavenumber)
from .forward import (Measurement, NoiseModel, PsdTensor, apply_noise,
                      capture_measurement, capture_psd, empty_baseline,
                      simulate_reflection, simulate_transmission,
                      transmission_flag, transmission_flags)
from .hashing import content_hash
from .illumination import (IlluminationSchedule, RisPattern, ScheduleEntry,
                           backward_aggregate, build_schedule, field_at,
                           greedy_focus, planewave_backward,
                           schedule_from_json, schedule_to_json)
from .inversion import (CglsResult, MatrixSizeError, ReconstructedImage,
                        ReflectionOperator, ShadowSystem, art_solve,
                        build_reflection_matrix, cgls_solve, fuse_and_project,
                        matched_filter, reconstruct, reconstruct_batch,
                        reflection_delta, reflection_model,
                        shadow_attenuation, shadow_system, volume_to_image)
from .metrics import (DEFAULT_METRICS, ImagePair, MetricConfig, all_metrics,
                      bce, f_measure, iou, loss, mae, ssim)
from .scene import (Box, Ellipsoid, Phantom, RisPanel, SceneGrid,
                    SystemLayout, default_layout, element_positions,
                    rasterize_phantom, render_ground_truth,
                    sample_random_humanoid)
from .tensorio import (TensorFormatError, read_tensor, write_pgm,
                       write_tensor, write_tensor_atomic)

__version__ = "0.1.0"

__all__ = [
    "Box", "CglsResult", "Config", "ConfigError", "DEFAULT_METRICS",
    "DatasetManifest", "Ellipsoid", "FrequencyGrid", "IlluminationSchedule",
    "ImagePair", "MatrixSizeError", "Measurement", "MediumParams",
    "MetricConfig", "NoiseModel", "Phantom", "PsdTensor",
    "ReconstructedImage", "ReflectionOperator", "RisPanel", "RisPattern",
    "SceneGrid", "ScheduleEntry", "ShadowSystem", "SourceWaveform",
    "SystemLayout", "TensorFormatError", "VACUUM", "VACUUM_PERMEABILITY",
    "VACUUM_PERMITTIVITY", "all_metrics", "apply_noise", "art_solve",
    "backward_aggregate", "bce", "build_reflection_matrix", "build_schedule",
    "capture_measurement", "capture_psd", "cgls_solve",
    "channels_to_complex", "complex_to_channels", "content_hash",
    "default_layout", "derive_noise_seed", "element_positions",
    "empty_baseline", "evaluate_run", "f_measure", "field_at",
    "flat_spectrum", "fuse_and_project", "gen_dataset", "greedy_focus",
    "greens", "iou", "lfm_spectrum", "load_config",
    "load_sample_measurement", "loss", "mae", "make_config",
    "matched_filter", "measurement_from_array", "measurement_to_array",
    "planewave_backward", "rasterize_phantom", "read_tensor", "reconstruct",
    "reconstruct_batch", "reflection_delta", "reflection_model",
    "render_ground_truth", "sample_random_humanoid", "schedule_from_json",
    "schedule_to_json", "shadow_attenuation", "shadow_system",
    "simulate_reflection", "simulate_transmission", "split_assignments",
    "ssim", "transmission_flag", "transmission_flags", "volume_to_image",
    "wavenumber", "write_pgm", "write_tensor", "write_tensor_atomic",
]
