"""
Upper bounds of the Carnot-Caratheodory distance by optimizing horizontal paths.

A path is described by piecewise-constant horizontal controls on ``K`` equal subintervals of ``[0, 1]``.
Its endpoint is the product of the exponentials of the segments, so it is computed exactly by the group law.
The energy ``sum |u_k|^2 / K`` is minimized under the endpoint constraint by a penalty continuation
(L-BFGS from torch) followed by a few Gauss-Newton projections onto the constraint.
"""
from typing import List, Optional

import numpy as np
import torch as th

from carnot_lab.carnot_core.groups import GroupDescriptor, bch_product, dilate, inverse, multiply
from carnot_lab.cc_metric.distance import DistanceConvergenceError, box_norm, layer_lower_bound
from carnot_lab.common.type_aliases import DistanceBracket, PointLike
from carnot_lab.common.utils import get_rng

PENALTIES = (1e2, 1e3, 1e4, 1e5, 1e6)


class HorizontalPath(object):
    """
    Horizontal path with piecewise-constant controls.

    :param controls: array of shape (K, n), the velocity on each of the K subintervals of [0, 1]
    """

    def __init__(self, controls: np.ndarray):
        self.controls = np.atleast_2d(np.asarray(controls, dtype=np.float64))

    @property
    def n_segments(self) -> int:
        return self.controls.shape[0]

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(self.controls, axis=-1)) / self.n_segments)

    @property
    def energy(self) -> float:
        return float(np.sum(self.controls**2) / self.n_segments)

    def vertices(self, g: GroupDescriptor, start: Optional[PointLike] = None) -> np.ndarray:
        """
        The K + 1 points at the ends of the segments.
        """
        if self.controls.shape[1] != g.horizontal_dim:
            raise ValueError(f"Expected controls with {g.horizontal_dim} components, got {self.controls.shape[1]}")
        point = np.zeros(g.total_dim) if start is None else g.check_point(start)
        vertices = [point]
        for control in self.controls:
            step = np.zeros(g.total_dim)
            step[: g.horizontal_dim] = control / self.n_segments
            point = multiply(g, point, step)
            vertices.append(point)
        return np.stack(vertices)

    def endpoint(self, g: GroupDescriptor, start: Optional[PointLike] = None) -> np.ndarray:
        return self.vertices(g, start)[-1]


def path_endpoint(g: GroupDescriptor, path: HorizontalPath, start: Optional[PointLike] = None) -> np.ndarray:
    return path.endpoint(g, start)


def path_length(path: HorizontalPath) -> float:
    return path.length


def _torch_endpoint(g: GroupDescriptor, controls: th.Tensor) -> th.Tensor:
    batch, n_segments, n = controls.shape
    constants = g.torch_constants()
    padding = th.zeros(batch, n_segments, g.total_dim - n, dtype=controls.dtype)
    steps = th.cat([controls / n_segments, padding], dim=-1)
    point = th.zeros(batch, g.total_dim, dtype=controls.dtype)
    for index in range(n_segments):
        point = bch_product(constants, g.step, point, steps[:, index])
    return point


def _penalty_descent(g: GroupDescriptor, controls: th.Tensor, targets: th.Tensor, max_iter: int) -> th.Tensor:
    controls = controls.clone().requires_grad_(True)
    n_segments = controls.shape[1]
    for penalty in PENALTIES:
        optimizer = th.optim.LBFGS(
            [controls],
            lr=1.0,
            max_iter=max_iter,
            tolerance_grad=1e-12,
            tolerance_change=1e-15,
            line_search_fn="strong_wolfe",
        )

        def closure() -> th.Tensor:
            optimizer.zero_grad()
            energy = (controls**2).sum() / n_segments
            mismatch = ((_torch_endpoint(g, controls) - targets) ** 2).sum()
            loss = energy + penalty * mismatch
            loss.backward()
            return loss

        optimizer.step(closure)
    return controls.detach()


def _gauss_newton_projection(g: GroupDescriptor, controls: th.Tensor, targets: th.Tensor, n_steps: int) -> th.Tensor:
    """
    Minimal-norm corrections ``v <- v - J^+ (E(v) - T)`` until the endpoint hits the target.
    The endpoint of target ``b`` only depends on the controls of ``b``, so one backward pass
    per coordinate gives every per-target jacobian.
    """
    batch, n_segments, n = controls.shape
    for _ in range(n_steps):
        variables = controls.clone().requires_grad_(True)
        endpoint = _torch_endpoint(g, variables)
        residual = (endpoint - targets).detach()
        if float(residual.abs().max()) < 1e-14:
            break
        rows = []
        for coordinate in range(g.total_dim):
            (gradient,) = th.autograd.grad(endpoint[:, coordinate].sum(), variables, retain_graph=True)
            rows.append(gradient.reshape(batch, n_segments * n))
        jacobian = th.stack(rows, dim=1)
        correction = th.linalg.pinv(jacobian) @ residual.unsqueeze(-1)
        controls = controls - correction.reshape(batch, n_segments, n)
    return controls


def _optimize(
    g: GroupDescriptor, targets: np.ndarray, n_segments: int, n_starts: int, seed: int, max_iter: int
) -> List[HorizontalPath]:
    """
    Best path per target over the multi-starts (shortest among the ones hitting the target).
    """
    targets_t = th.as_tensor(targets, dtype=th.float64)
    batch, n = targets.shape[0], g.horizontal_dim
    best_paths: List[Optional[HorizontalPath]] = [None] * batch
    best_scores = np.full((batch, 2), np.inf)
    for start in range(n_starts):
        rng = get_rng(seed, start)
        noise_scale = 1e-2 if start == 0 else 0.5 * start
        initial = np.repeat(targets[:, None, :n], n_segments, axis=1)
        initial = initial + noise_scale * rng.standard_normal(initial.shape)
        controls = _penalty_descent(g, th.as_tensor(initial), targets_t, max_iter)
        controls = _gauss_newton_projection(g, controls, targets_t, n_steps=20)
        endpoints = _torch_endpoint(g, controls).detach().numpy()
        controls_np = controls.numpy()
        for index in range(batch):
            path = HorizontalPath(controls_np[index])
            error = float(np.max(np.abs(endpoints[index] - targets[index])))
            # lexicographic: reach the target first, then shortest
            score = (0.0 if error < 1e-6 else error, path.length)
            if score < tuple(best_scores[index]):
                best_scores[index] = score
                best_paths[index] = path
    return best_paths


def control_distance(
    g: GroupDescriptor,
    targets: PointLike,
    n_segments: int = 32,
    n_starts: int = 3,
    tol: float = 1e-6,
    max_refinements: int = 2,
    max_iter: int = 50,
    seed: int = 0,
    verbose: int = 0,
) -> List[DistanceBracket]:
    """
    Bracket ``d(0, T)`` for a batch of targets by control optimization.
    Targets are first rescaled to unit box norm (the distance is homogeneous), the number of segments
    is doubled while some endpoint error stays above ``tol``.

    :param g: the group (step <= 3)
    :param targets: array of shape (B, N)
    :param n_segments: initial number of control segments
    :param n_starts: number of seeded starts
    :param tol: endpoint error (max coordinate, after rescaling) accepted as converged
    :param max_refinements: number of times the segment count may be doubled
    :param max_iter: L-BFGS iterations per penalty level
    :param seed: random seed of the starts
    :param verbose: Verbosity level: 0 no output, 1 info, 2 debug
    :return: one bracket per target
    """
    targets = g.check_point(targets).reshape(-1, g.total_dim)
    scales = box_norm(g, targets)
    lowers = layer_lower_bound(g, targets)
    brackets: List[Optional[DistanceBracket]] = [None] * targets.shape[0]
    pending = [index for index in range(targets.shape[0]) if scales[index] > 0]
    for index in range(targets.shape[0]):
        if scales[index] == 0:
            brackets[index] = DistanceBracket(0.0, 0.0, "optimizer", 0.0)

    for refinement in range(max_refinements + 1):
        if not pending:
            break
        normalized = dilate(g, 1.0 / scales[pending], targets[pending])
        paths = _optimize(g, normalized, n_segments, n_starts, seed, max_iter)
        still_pending = []
        for index, target, path in zip(pending, normalized, paths):
            endpoint = path.endpoint(g)
            error = float(np.max(np.abs(endpoint - target)))
            residual = float(box_norm(g, multiply(g, inverse(g, endpoint), target)))
            scale = float(scales[index])
            bracket = DistanceBracket(
                lower=float(lowers[index]),
                upper=scale * (path.length + residual),
                method="optimizer",
                residual=scale * residual,
            )
            brackets[index] = bracket
            if error >= tol:
                still_pending.append(index)
        if verbose >= 1:
            print(f"Control optimization with {n_segments} segments: {len(still_pending)}/{len(pending)} not converged")
        pending = still_pending
        if pending and refinement < max_refinements:
            n_segments *= 2

    if pending:
        failed = brackets[pending[0]]
        raise DistanceConvergenceError(failed.lower, failed.upper, failed.residual)
    return brackets
