"""
Central differences along the horizontal flows, shared by every gradient in the package.
"""
from typing import Callable, Optional, Tuple

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor, flow
from carnot_lab.common.type_aliases import GradientEstimate


class StencilSample(object):
    """
    Stencil points around a batch of base points, already pushed through the transform.

    :param base: source points, shape (B, N)
    :param center: images of the base points, shape (B, N')
    :param neighbors: images of ``exp(s X_j)(x)`` for the offsets ``s``, shape (B, n, S, N')
    :param offsets: the offsets, ``(h, -h)`` or ``(h, -h, h/2, -h/2)``
    :param valid: whether each neighbor lies in the domain, shape (B, n, S)
    :param source: group of the base points
    :param target: group of the mapped points
    :param identity: True when no transform was applied
    """

    def __init__(
        self,
        base: np.ndarray,
        center: np.ndarray,
        neighbors: np.ndarray,
        offsets: np.ndarray,
        valid: np.ndarray,
        source: GroupDescriptor,
        target: Optional[GroupDescriptor],
        identity: bool,
    ):
        self.base = base
        self.center = center
        self.neighbors = neighbors
        self.offsets = offsets
        self.valid = valid
        self.source = source
        self.target = target
        self.identity = identity

    @property
    def h(self) -> float:
        return float(self.offsets[0])

    @property
    def richardson(self) -> bool:
        return len(self.offsets) == 4

    @property
    def one_sided(self) -> np.ndarray:
        return ~np.all(self.valid[..., :2], axis=-1)

    def __len__(self) -> int:
        return self.base.shape[0]

    def differentiate(self, center_values: np.ndarray, neighbor_values: np.ndarray) -> GradientEstimate:
        """
        Horizontal gradient of a function from its values at the stencil points.
        The value is the central difference at ``h`` (one-sided where a neighbor leaves the domain);
        with the Richardson pair, the error is ``|D_h - D_{h/2}|``.

        :param center_values: shape (B,)
        :param neighbor_values: shape (B, n, S)
        :return: gradient of shape (B, n) with its error and one-sided flags
        """
        coarse, fine = self.differences(center_values, neighbor_values)
        error = np.zeros_like(coarse) if fine is None else np.abs(coarse - fine)
        return GradientEstimate(value=coarse, error=error, one_sided=self.one_sided)

    def differences(self, center_values: np.ndarray, neighbor_values: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        :return: the differences at ``h`` and ``h / 2`` (None without the Richardson pair)
        """
        coarse = _difference(center_values, neighbor_values[..., :2], self.valid[..., :2], self.h)
        if not self.richardson:
            return coarse, None
        return coarse, _difference(center_values, neighbor_values[..., 2:], self.valid[..., 2:], self.h / 2)


def _difference(center: np.ndarray, pair: np.ndarray, valid: np.ndarray, h: float) -> np.ndarray:
    forward, backward = pair[..., 0], pair[..., 1]
    center = center[..., None]
    central = (forward - backward) / (2 * h)
    one_forward = (forward - center) / h
    one_backward = (center - backward) / h
    result = np.where(valid[..., 0] & valid[..., 1], central, 0.0)
    result = np.where(valid[..., 0] & ~valid[..., 1], one_forward, result)
    result = np.where(~valid[..., 0] & valid[..., 1], one_backward, result)
    return result


class HorizontalStencil(object):
    """
    Stencil of the flows ``exp(+-h X_j)`` around base points, optionally pushed through a map.
    Mapping the stencil once and reusing it for many fields is what keeps the estimators cheap.

    :param group: the source group
    :param h: the step
    :param transform: map applied to the stencil points (a :class:`carnot_lab.map_calc.maps.GroupMap`
        or any callable), None for the identity
    :param target: group of the mapped points (default: ``transform.target`` or the source group)
    :param domain: when given, neighbors outside it are dropped and the difference becomes one-sided
    :param richardson: also use the half step (four points per direction)
    """

    def __init__(
        self,
        group: GroupDescriptor,
        h: float = 1e-4,
        transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        target: Optional[GroupDescriptor] = None,
        domain=None,
        richardson: bool = False,
    ):
        if not h > 0:
            raise ValueError(f"Step must be positive, got {h}")
        self.group = group
        self.h = float(h)
        self.transform = transform
        if target is None:
            target = getattr(transform, "target", None) if transform is not None else group
        self.target = target
        self.domain = domain
        self.richardson = richardson

    @property
    def offsets(self) -> np.ndarray:
        if self.richardson:
            return np.array([self.h, -self.h, self.h / 2, -self.h / 2])
        return np.array([self.h, -self.h])

    def sample(self, x: np.ndarray) -> StencilSample:
        """
        :param x: base points, shape (B, N) or (N,)
        :return: the mapped stencil
        """
        base = np.atleast_2d(self.group.check_point(x))
        offsets = self.offsets
        n = self.group.horizontal_dim
        neighbors = np.stack(
            [np.stack([flow(self.group, j, s, base) for s in offsets], axis=1) for j in range(n)], axis=1
        )
        if self.domain is not None:
            valid = self.domain.contains(neighbors)
        else:
            valid = np.ones(neighbors.shape[:-1], dtype=bool)
        if self.transform is None:
            return StencilSample(base, base, neighbors, offsets, valid, self.group, self.target, identity=True)
        center = np.asarray(self.transform(base))
        mapped = np.asarray(self.transform(neighbors.reshape(-1, self.group.total_dim)))
        mapped = mapped.reshape(neighbors.shape[:-1] + mapped.shape[-1:])
        return StencilSample(base, center, mapped, offsets, valid, self.group, self.target, identity=False)
