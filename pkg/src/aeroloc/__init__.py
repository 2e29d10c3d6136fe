"""Ground robot localization against a 2.5D semantic aerial map.

The pipeline matches scan-line descriptors computed from ground lidar
against descriptors precomputed for every traversable map cell, aligns the
odometry frame to the map with a robust similarity fit, and fuses both with
a particle filter.
"""

from aeroloc.alignment import (NotLocalizableError, RansacParams,
                               SimilarityTransform, predict_prior,
                               procrustes, ransac_align)
from aeroloc.descriptor import (Descriptor, DescriptorParams,
                                AerialDescriptorSet, ScoreField,
                                build_aerial_descriptors, compute_descriptor,
                                independent_estimate, load_descriptor_set,
                                rotate_descriptor, save_descriptor_set,
                                score_field, similarity)
from aeroloc.filter import (FilterParams, ParticleSet, estimate,
                            init_particles, propagate, resample, weight)
from aeroloc.geomap import (AerialMap, MapFormatError, ObstacleParams,
                            SemanticLabel, compute_edge_map,
                            extract_obstacles, load_map,
                            refine_segmentation, save_map)
from aeroloc.ground import (GroundObservation, GroundParams,
                            build_ground_descriptor,
                            build_ground_obstacle_grid,
                            detect_obstacles_delaunay, downsample_points,
                            load_observations, load_trajectory,
                            predict_surface, save_observations,
                            save_trajectory)
from aeroloc.harness import (MODES, RunConfig, RunReport, eval_runs,
                             export_heatmap, run_localization, run_pipeline,
                             write_eval_table)
from aeroloc.sim import (NoiseSpec, SimDataset, WorldInfo, WorldSpec,
                         generate_world, inject_changes, make_dataset,
                         plan_trajectory, simulate_odometry, simulate_scan)

__version__ = "0.1.0"

__all__ = [
    "AerialDescriptorSet", "AerialMap", "Descriptor", "DescriptorParams",
    "FilterParams", "GroundObservation", "GroundParams", "MapFormatError",
    "MODES", "NoiseSpec", "NotLocalizableError", "ObstacleParams",
    "ParticleSet", "RansacParams", "RunConfig", "RunReport", "ScoreField",
    "SemanticLabel", "SimDataset", "SimilarityTransform", "WorldInfo",
    "WorldSpec", "build_aerial_descriptors", "build_ground_descriptor",
    "build_ground_obstacle_grid", "compute_descriptor", "compute_edge_map",
    "detect_obstacles_delaunay", "downsample_points", "estimate",
    "eval_runs", "export_heatmap", "extract_obstacles", "generate_world",
    "independent_estimate", "init_particles", "inject_changes",
    "load_descriptor_set", "load_map", "load_observations",
    "load_trajectory", "make_dataset", "plan_trajectory", "predict_prior",
    "predict_surface", "procrustes", "propagate", "ransac_align",
    "refine_segmentation", "resample", "rotate_descriptor",
    "run_localization", "run_pipeline", "save_descriptor_set", "save_map",
    "save_observations", "save_trajectory", "score_field", "similarity",
    "simulate_odometry", "simulate_scan", "weight", "write_eval_table",
    "__version__",
]
