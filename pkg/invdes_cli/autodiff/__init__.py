from .tensor import Tape, Tensor, as_tensor, backward, value_and_grad
from .checkpoint import CheckpointSchedule, RolloutGradient, checkpointed_rollout_backward, rollout_backward
from . import ops
