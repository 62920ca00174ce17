"""Coarse interaction-direction inference for articulated objects."""

from .artsim import DisplacementField, JointModel, NoiseSpec, Scene, SceneSpec, corrupt, generate_scene, ground_truth_field
from .bench import BenchmarkConfig, ErrorTable, export_plot_data, run_benchmark
from .dirstat import VmfParams, frechet_mean, vmf_fit, vmf_pdf, vmf_sample
from .errors import ArtdirError, DataError, DegenerateError
from .geom import RigidTransform, angle_between, direction_from_transform
from .kabsch import Correspondences, fit_rigid
from .pipeline import DirectionEstimate, EstimatorConfig, estimate_direction, sample_grasp_pose, select_grasp_point
from .stats import paired_t_test_one_sided

__version__ = "0.1.0"
