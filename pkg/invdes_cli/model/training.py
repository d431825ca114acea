"""
Next-step training of the learned simulator with noise-correcting targets.
"""
import csv
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from invdes_cli.autodiff import Tape, Tensor, backward, ops
from invdes_cli.errors import DatasetError, NonFiniteError
from invdes_cli.model.ensemble import split_trajectories
from invdes_cli.model.network import decode_normalized, encode, predict_acceleration, process
from invdes_cli.model.params import ModelHyper, ModelParams, NormStats, init_model_params
from invdes_cli.optim.adam import AdamState, GDConfig, adam_step
from invdes_cli.physics.state_graph import FLUID, ParticleState, state_from_frames
from invdes_cli.physics.trajectory_io import Trajectory
from invdes_cli.util import info

LR_DECAY_AT = 0.6


def _frames(trajectory: Trajectory) -> np.ndarray:
    return np.asarray(trajectory.positions, dtype=np.float64)


def compute_stats(trajectories: Sequence[Trajectory], hyper: ModelHyper) -> NormStats:
    """
    Velocity and acceleration statistics of fluid particles over the whole dataset.

    Both stds are combined in quadrature with the training noise as it appears in
    velocities (noise / dt) and accelerations (noise / dt^2).
    """
    velocities, accelerations = [], []
    for trajectory in trajectories:
        frames = _frames(trajectory)[:, trajectory.node_types == FLUID]
        if frames.shape[0] < 3:
            continue
        v = np.diff(frames, axis=0) / trajectory.dt
        velocities.append(v.reshape(-1, 2))
        accelerations.append((np.diff(v, axis=0) / trajectory.dt).reshape(-1, 2))
    if not velocities:
        raise DatasetError("no trajectory has the three frames needed for statistics")
    v, a = np.concatenate(velocities), np.concatenate(accelerations)
    noise_v = hyper.noise_scale / hyper.dt
    noise_a = hyper.noise_scale / hyper.dt ** 2
    return NormStats(
        velocity_mean=v.mean(axis=0),
        velocity_std=np.sqrt(v.var(axis=0) + noise_v ** 2),
        acceleration_mean=a.mean(axis=0),
        acceleration_std=np.sqrt(a.var(axis=0) + noise_a ** 2),
    )


def training_pairs(trajectories: Sequence[Trajectory], history: int) -> list[tuple[int, int]]:
    """(trajectory index, frame t) with a full velocity history at t and a frame t + 1."""
    pairs = []
    for i, trajectory in enumerate(trajectories):
        pairs.extend((i, t) for t in range(history, trajectory.num_steps - 1))
    return pairs


def sample_training_noise(rng: np.random.Generator, shape: tuple[int, ...], scale: float) -> np.ndarray:
    return rng.normal(0.0, scale, size=shape) if scale > 0 else np.zeros(shape)


def noisy_example(
        trajectory: Trajectory,
        t: int,
        hyper: ModelHyper,
        rng: np.random.Generator,
) -> tuple[ParticleState, np.ndarray]:
    """
    Input state at frame t with noised fluid positions, and the acceleration that moves
    the noised state exactly onto frame t + 1 under the integrator.
    """
    frames = _frames(trajectory)
    dt = trajectory.dt
    state = state_from_frames(frames, t, trajectory.node_types, dt, hyper.history)
    fluid = state.fluid_mask
    noise = sample_training_noise(rng, (state.num_particles, 2), hyper.noise_scale)
    noise[~fluid] = 0.0

    positions = state.positions.data + noise
    history = state.velocity_history.data.copy()
    history[:, -1, :] += noise / dt
    noisy = state.replace_tensors((Tensor(positions), Tensor(history)))

    target = (frames[t + 1] - positions - history[:, -1, :] * dt) / (dt * dt)
    return noisy, target


def example_loss(state: ParticleState, target: np.ndarray, params: ModelParams, weights) -> Tensor:
    """Mean squared normalized-acceleration error over fluid particles."""
    fluid = np.nonzero(state.fluid_mask)[0]
    raw = decode_normalized(process(encode(state, params, weights), params, weights), params, weights)
    normalized_target = (target[fluid] - params.stats.acceleration_mean) / params.stats.acceleration_std
    return ops.mean(ops.square(ops.sub(ops.gather(raw, fluid), normalized_target)))


def learning_rate_at(step: int, steps: int, base: float) -> float:
    return base if step < LR_DECAY_AT * steps else 0.5 * base


def train(
        trajectories: Sequence[Trajectory],
        hyper: ModelHyper,
        seed: int,
        steps: int,
        log_every: int = 0,
) -> tuple[ModelParams, list[float]]:
    """
    Fit a model with Adam on mini-batches of (frame t, frame t + 1) pairs.

    :param trajectories: training trajectories
    :param hyper: architecture and optimization hyper-parameters
    :param seed: fixes initialization, batch sampling and noise
    :param steps: optimizer steps
    :param log_every: print progress every this many steps (0 = silent)
    :return: trained parameters and the per-step loss curve
    """
    pairs = training_pairs(trajectories, hyper.history)
    if not pairs:
        raise DatasetError("dataset holds no usable training pairs")
    stats = compute_stats(trajectories, hyper)
    params = init_model_params(hyper, seed, stats)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    phi = params.flat()
    adam = AdamState.zeros_like(phi)
    losses = []

    for step in range(steps):
        tape = Tape()
        weights = params.tensors(tape)
        picks = rng.integers(0, len(pairs), size=hyper.batch_size)
        terms = []
        for pick in picks:
            i, t = pairs[int(pick)]
            state, target = noisy_example(trajectories[i], t, hyper, rng)
            terms.append(example_loss(state, target, params, weights))
        loss = ops.div(ops.maybe_sum(terms), float(len(terms)))
        if not np.isfinite(loss.item()):
            raise NonFiniteError("train", "non-finite training loss", step=step)
        grads = backward(tape, loss)
        grad = np.concatenate([grads[w.node].reshape(-1) for w in weights.values()])

        cfg = GDConfig(learning_rate=learning_rate_at(step, steps, hyper.learning_rate), clip=None)
        phi, adam = adam_step(phi, grad, adam, cfg)
        params = params.with_flat(phi)
        losses.append(loss.item())
        if log_every and (step + 1) % log_every == 0:
            info(f"step {step + 1}/{steps}  loss {losses[-1]:.6f}")
    return params, losses


def train_ensemble(
        trajectories: Sequence[Trajectory],
        hyper: ModelHyper,
        seed: int,
        steps: int,
        splits: int,
        log_every: int = 0,
) -> list[tuple[ModelParams, list[float]]]:
    """One member per disjoint contiguous split of the trajectory list; member k uses seed + k."""
    members = []
    for k, part in enumerate(split_trajectories(trajectories, splits)):
        info(f"Training ensemble member {k + 1}/{splits} on {len(part)} trajectories...")
        members.append(train(part, hyper, seed + k, steps, log_every))
    return members


def write_loss_curve(path: Union[str, Path], losses: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(losses):
            writer.writerow([step, repr(float(loss))])


def _true_acceleration(frames: np.ndarray, t: int, dt: float) -> np.ndarray:
    return (frames[t + 1] - 2.0 * frames[t] + frames[t - 1]) / (dt * dt)


def one_step_mse(
        params: ModelParams,
        trajectories: Sequence[Trajectory],
        stride: int = 1,
) -> float:
    """Mean squared acceleration error of the model on fluid particles over every usable frame."""
    errors = []
    for trajectory in trajectories:
        frames = _frames(trajectory)
        for t in range(params.hyper.history, trajectory.num_steps - 1, stride):
            state = state_from_frames(frames, t, trajectory.node_types, trajectory.dt, params.hyper.history)
            predicted = predict_acceleration(state, params).data
            fluid = state.fluid_mask
            errors.append(np.square(predicted[fluid] - _true_acceleration(frames, t, trajectory.dt)[fluid]).ravel())
    if not errors:
        raise DatasetError("no usable frames for evaluation")
    return float(np.mean(np.concatenate(errors)))


def zero_acceleration_mse(
        trajectories: Sequence[Trajectory],
        history: int,
        stride: int = 1,
) -> float:
    """The same error for the predictor that always answers a = 0."""
    errors = []
    for trajectory in trajectories:
        frames = _frames(trajectory)
        fluid = trajectory.node_types == FLUID
        for t in range(history, trajectory.num_steps - 1, stride):
            errors.append(np.square(_true_acceleration(frames, t, trajectory.dt)[fluid]).ravel())
    if not errors:
        raise DatasetError("no usable frames for evaluation")
    return float(np.mean(np.concatenate(errors)))
