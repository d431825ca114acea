from .design_space import DESIGN_KINDS, RELATIVE_JOINTS, ABSOLUTE_JOINTS, ROTOR_GRID, HEIGHTFIELD, \
    HEIGHTFIELD_CONTROL_POINTS, TOOL_SPACING, FLUID_SPACING, GAMMA_H, SceneTemplate, DesignParams, DesignGeometry, \
    design_arity, polyline_interpolation, tool_from_relative_angles, tool_from_absolute_angles, rotor_grid, \
    rotor_centres, heightfield, heightfield_offsets, heightfield_from_control_points, control_point_interpolation, \
    design_geometry, initial_fluid, assemble_initial_state, apply_design
from .rewards import GAUSSIAN_GOAL, DIRECTION, POOLS, NO_SURVIVORS, NO_REMOVED, RewardSpec, RewardTerms, RewardReport, \
    normal_density, gaussian_goal_reward, direction_reward, direction_terms, pools_reward, smoothness_penalty, \
    nearest_pool, normalized, state_reward, design_penalty, evaluate_reward
from .tasks import TASK_NAMES, TaskSpec, generate_task, pool_centres, direction_vector, MAZE_DOMAIN_BOXES, \
    MAZE_TOOL_LENGTHS
