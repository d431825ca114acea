"""
Design objectives: J_M(phi) through the learned simulator (value and gradient) and
J_S(phi) through the ground-truth oracle (value only).
"""
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from invdes_cli.autodiff import CheckpointSchedule, Tape, backward, checkpointed_rollout_backward, ops
from invdes_cli.design.design_space import DesignGeometry, apply_design
from invdes_cli.design.rewards import RewardReport, RewardTerms, design_penalty, evaluate_reward, normalized, \
    state_reward
from invdes_cli.design.tasks import TaskSpec
from invdes_cli.model.ensemble import Ensemble, ensemble_value_and_grad
from invdes_cli.model.network import model_step, rollout_model
from invdes_cli.model.params import ModelParams
from invdes_cli.physics.oracle import OracleConfig, rollout_oracle
from invdes_cli.physics.state_graph import ParticleState, check_scene_bounds
from invdes_cli.util import warn

Simulator = Union[ModelParams, Ensemble]


def _members(model: Simulator) -> tuple[ModelParams, ...]:
    return model.members if isinstance(model, Ensemble) else (model,)


def _state_term(task: TaskSpec, state: ParticleState):
    main, spread, _ = state_reward(task.reward, state)
    return ops.sub(main, spread)


def objective_model_single(
        phi: np.ndarray,
        task: TaskSpec,
        params: ModelParams,
        segment_length: int = 1,
) -> tuple[float, np.ndarray]:
    """
    J_M and its gradient for one model.

    The rollout is differentiated with segment checkpointing; the resulting gradient
    with respect to the initial particle positions is pulled back through f_D on a
    separate tape that also carries the heightfield smoothness penalty.
    """
    design = task.initial_design().with_phi(phi)
    tape = Tape()
    phi_leaf = tape.leaf(design.phi)
    initial, geometry = apply_design(design, task.template, phi_leaf, params.hyper.history)
    weights = params.tensors()
    num_steps = task.num_steps
    taken = [0]

    def step_fn(state, _params):
        nxt = model_step(state, params, weights)
        taken[0] += 1
        if taken[0] <= num_steps:
            check_scene_bounds(nxt, taken[0])
        return nxt

    def loss_fn(state, _params):
        return _state_term(task, state)

    schedule = CheckpointSchedule.every(num_steps, segment_length)
    result = checkpointed_rollout_backward(step_fn, initial.detached(), num_steps, loss_fn, schedule)
    position_grad = result.state_grads[0]

    penalty = design_penalty(task.reward, geometry.field)
    pulled = ops.sum_(ops.mul(initial.positions, position_grad))
    root = ops.sub(pulled, penalty)
    value = result.loss - penalty.item()
    if not root.is_attached:
        return value, np.zeros_like(design.phi)
    grads = backward(tape, root)
    return value, grads[phi_leaf.node]


def objective_model(
        phi: np.ndarray,
        task: TaskSpec,
        model: Simulator,
        segment_length: int = 1,
        workers: int = 1,
) -> tuple[float, np.ndarray]:
    """(J_M, grad J_M); an ensemble averages both over its members."""
    if isinstance(model, Ensemble):
        return ensemble_value_and_grad(
            lambda m, p: objective_model_single(p, task, m, segment_length), model, phi, workers,
        )
    return objective_model_single(phi, task, model, segment_length)


def _final_reward(task: TaskSpec, final: ParticleState, geometry: DesignGeometry) -> RewardTerms:
    terms = evaluate_reward(task.reward, final, geometry.field)
    for flag in terms.warnings:
        warn(flag)
    return terms


def model_terms(phi: np.ndarray, task: TaskSpec, params: ModelParams) -> RewardTerms:
    design = task.initial_design().with_phi(phi)
    initial, geometry = apply_design(design, task.template, history=params.hyper.history)
    final = rollout_model(initial, params, task.num_steps)[-1]
    return _final_reward(task, final, geometry)


def value_model(phi: np.ndarray, task: TaskSpec, model: Simulator) -> float:
    """J_M without a tape, for CEM-M."""
    values = [model_terms(phi, task, m).raw for m in _members(model)]
    return float(sum(values) / len(values))


def oracle_terms(phi: np.ndarray, task: TaskSpec, oracle: Optional[OracleConfig] = None) -> RewardTerms:
    design = task.initial_design().with_phi(phi)
    initial, geometry = apply_design(design, task.template)
    cfg = (oracle or OracleConfig()).with_segments(geometry.segments)
    final = rollout_oracle(initial, cfg, task.num_steps)[-1]
    return _final_reward(task, final, geometry)


def objective_oracle(phi: np.ndarray, task: TaskSpec, oracle: Optional[OracleConfig] = None) -> float:
    """J_S(phi) = f_R(f_S^K(f_D(phi)))."""
    return oracle_terms(phi, task, oracle).raw


@dataclass
class ModelObjective:
    """Callable wrappers handed to the optimizers."""
    task: TaskSpec
    model: Simulator
    segment_length: int = 1
    workers: int = 1

    def value_and_grad(self, phi: np.ndarray) -> tuple[float, np.ndarray]:
        return objective_model(phi, self.task, self.model, self.segment_length, self.workers)

    def __call__(self, phi: np.ndarray) -> float:
        return value_model(phi, self.task, self.model)


@dataclass
class OracleObjective:
    task: TaskSpec
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def __call__(self, phi: np.ndarray) -> float:
        return objective_oracle(phi, self.task, self.oracle)


@dataclass(frozen=True)
class DesignEvaluation:
    model: Optional[RewardReport]
    oracle: RewardReport

    @property
    def relative_gap(self) -> Optional[float]:
        """|J_M - J_S| / |J_S| on raw rewards."""
        if self.model is None:
            return None
        denominator = abs(self.oracle.raw) or 1.0
        return abs(self.model.raw - self.oracle.raw) / denominator

    def to_row(self) -> dict:
        row = self.oracle.to_row("j_oracle")
        if self.model is not None:
            row.update(self.model.to_row("j_model"))
            row["relative_gap"] = self.relative_gap
        return row


def _mean_terms(all_terms: list[RewardTerms]) -> RewardTerms:
    n = len(all_terms)
    return RewardTerms(
        main=sum(t.main for t in all_terms) / n,
        spread=sum(t.spread for t in all_terms) / n,
        regularizer=sum(t.regularizer for t in all_terms) / n,
        warnings=tuple(sorted({w for t in all_terms for w in t.warnings})),
    )


def evaluate_design(
        phi: np.ndarray,
        task: TaskSpec,
        model: Optional[Simulator] = None,
        oracle: Optional[OracleConfig] = None,
) -> DesignEvaluation:
    """J_S (and J_M when a model is given), raw and normalized against the task's initial design."""
    initial_phi = task.initial_design().phi
    s_terms = oracle_terms(phi, task, oracle)
    s_initial = oracle_terms(initial_phi, task, oracle)
    oracle_report = RewardReport(s_terms.raw, normalized(s_terms.raw, s_initial.raw), s_terms)
    model_report = None
    if model is not None:
        m_terms = _mean_terms([model_terms(phi, task, m) for m in _members(model)])
        m_initial = _mean_terms([model_terms(initial_phi, task, m) for m in _members(model)])
        model_report = RewardReport(m_terms.raw, normalized(m_terms.raw, m_initial.raw), m_terms)
    return DesignEvaluation(model=model_report, oracle=oracle_report)
