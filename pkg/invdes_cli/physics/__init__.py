from .state_graph import FLUID, DESIGN, WALL, NUM_NODE_TYPES, HISTORY, DEFAULT_DT, FLOOR_HEIGHT, UNIT_BOX, \
    EdgeSet, ParticleState, radius_pairs, build_radius_edges, advance_state, check_scene_bounds, state_from_frames, \
    velocity_history_from_frames
from .trajectory_io import TRAJ_MAGIC, Trajectory, encode_trajectory, decode_trajectory, write_trajectory, \
    read_trajectory
from .oracle import OracleConfig, step_oracle, rollout_oracle, kinetic_energy, total_momentum, repulsion_forces, \
    segment_distances, nearest_admissible
from .geometry import fluid_block, grid_counts, points_per_segment, segment_points
from .dataset import DatasetConfig, sample_segments, sample_scene, generate_trajectory, generate_dataset, \
    load_manifest, MANIFEST_NAME
