from .params import ModelHyper, NormStats, ModelParams, init_model_params, weight_shapes
from .network import LatentGraph, encode, process, decode, decode_normalized, predict_acceleration, model_step, \
    rollout_model, node_feature_width, node_features
from .weights_io import WEIGHTS_MAGIC, encode_weights, decode_weights, save_weights, load_weights
from .ensemble import Ensemble, ensemble_value_and_grad, split_trajectories
from .training import compute_stats, train, train_ensemble, write_loss_curve, one_step_mse, zero_acceleration_mse, \
    sample_training_noise, noisy_example, learning_rate_at
