"""
Carnot groups in exponential coordinates of the first kind.

A point is an array of shape ``(..., N)`` whose last axis holds the coordinates
``x_{ij}`` over the graded basis (layer 1 first). Every operation broadcasts over
the leading axes.
"""
import threading
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch as th
from scipy.special import gamma

from carnot_lab.common.type_aliases import GroupPoint, PointLike

JACOBI_TOLERANCE = 1e-12


class DescriptorError(ValueError):
    """
    Raised when a group descriptor (or a descriptor file) is invalid.

    :param message: what is wrong
    :param source: file name, and line/column when known
    """

    def __init__(self, message: str, source: Optional[str] = None):
        self.source = source
        super(DescriptorError, self).__init__(f"{source}: {message}" if source else message)


class UnsupportedStepError(NotImplementedError):
    def __init__(self, step: int):
        self.step = step
        super(UnsupportedStepError, self).__init__(
            f"The generic group law is a Baker-Campbell-Hausdorff series truncated at step 3, got a group of step {step}"
        )


class GroupDescriptor(object):
    """
    A stratified nilpotent Lie algebra (hence a Carnot group) given by its layer dimensions
    and structure constants ``c[i, j, k]`` with ``[X_i, X_j] = sum_k c[i, j, k] X_k``.

    The graded basis is taken orthonormal: norms of horizontal vectors and of differentials are Euclidean.

    :param layer_dims: dimensions ``n_1, ..., n_m`` of the layers
    :param structure_constants: dense array of shape ``(N, N, N)``
    :param name: name used in reports and caches
    :param measure_norm: constant ``c`` such that the normalized Haar measure is ``c`` times Lebesgue,
        computed lazily by :func:`carnot_lab.carnot_core.measure.calibrate_measure` when not given
    :param closed_form: name of a closed form available for the group law and the distance
        ("euclidean" or "heisenberg"), None for the generic path
    :param check: validate antisymmetry, Jacobi identity, grading and generation by the first layer
    """

    def __init__(
        self,
        layer_dims: Sequence[int],
        structure_constants: Optional[np.ndarray] = None,
        name: str = "custom",
        measure_norm: Optional[float] = None,
        closed_form: Optional[str] = None,
        check: bool = True,
    ):
        super(GroupDescriptor, self).__init__()
        if len(layer_dims) == 0 or any(int(dim) < 1 for dim in layer_dims):
            raise DescriptorError(f"layer_dims must be a non-empty list of positive integers, got {list(layer_dims)}")
        self.layer_dims = tuple(int(dim) for dim in layer_dims)
        self.name = name
        self.closed_form = closed_form
        n_total = sum(self.layer_dims)
        if structure_constants is None:
            structure_constants = np.zeros((n_total, n_total, n_total))
        self.structure_constants = np.array(structure_constants, dtype=np.float64)
        self.structure_constants.setflags(write=False)
        if self.structure_constants.shape != (n_total,) * 3:
            raise DescriptorError(
                f"structure_constants must have shape {(n_total,) * 3}, got {self.structure_constants.shape}"
            )
        self.degrees = np.concatenate([np.full(dim, layer + 1) for layer, dim in enumerate(self.layer_dims)])
        self.degrees.setflags(write=False)
        if measure_norm is not None and not measure_norm > 0:
            raise DescriptorError(f"measure_norm must be positive, got {measure_norm}")
        self._measure_norm = measure_norm
        self._measure_norm_error = 0.0 if measure_norm is not None else None
        self._lock = threading.Lock()
        self._torch_constants = None
        if check:
            self.validate()

    @property
    def step(self) -> int:
        return len(self.layer_dims)

    @property
    def total_dim(self) -> int:
        return int(sum(self.layer_dims))

    @property
    def horizontal_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def homogeneous_dim(self) -> int:
        return int(sum((layer + 1) * dim for layer, dim in enumerate(self.layer_dims)))

    @property
    def is_abelian(self) -> bool:
        return self.step == 1

    @property
    def key(self) -> Tuple:
        """
        Hashable identity of the group (used by caches).
        """
        return self.name, self.layer_dims, self.structure_constants.tobytes()

    def layer_slice(self, layer: int) -> slice:
        """
        :param layer: layer index, starting at 1
        :return: the slice of the coordinates of that layer
        """
        if not 1 <= layer <= self.step:
            raise ValueError(f"Layer must be between 1 and {self.step}, got {layer}")
        start = sum(self.layer_dims[: layer - 1])
        return slice(start, start + self.layer_dims[layer - 1])

    def layers(self, x: GroupPoint) -> List[np.ndarray]:
        return [x[..., self.layer_slice(layer)] for layer in range(1, self.step + 1)]

    def horizontal(self, x: GroupPoint) -> np.ndarray:
        return x[..., : self.horizontal_dim]

    def bracket_block(self, layer_a: int, layer_b: int) -> np.ndarray:
        """
        Structure constants of ``[g_a, g_b] -> g_{a+b}`` (empty when ``a + b`` exceeds the step).
        """
        if layer_a + layer_b > self.step:
            return np.zeros((self.layer_dims[layer_a - 1], self.layer_dims[layer_b - 1], 0))
        return self.structure_constants[
            self.layer_slice(layer_a), self.layer_slice(layer_b), self.layer_slice(layer_a + layer_b)
        ]

    def torch_constants(self) -> th.Tensor:
        if self._torch_constants is None:
            self._torch_constants = th.as_tensor(np.array(self.structure_constants), dtype=th.float64)
        return self._torch_constants

    # Measure normalization
    # ----------------------------------------
    @property
    def measure_norm(self) -> float:
        """
        Normalization constant of the Haar measure, calibrated on first access.
        """
        if self._measure_norm is None:
            # Avoid circular import
            from carnot_lab.carnot_core.measure import calibrate_measure

            calibrate_measure(self)
        return self._measure_norm

    @property
    def measure_norm_error(self) -> float:
        _ = self.measure_norm
        return self._measure_norm_error

    def set_measure_norm(self, value: float, standard_error: float = 0.0) -> None:
        if not value > 0:
            raise ValueError(f"measure_norm must be positive, got {value}")
        with self._lock:
            self._measure_norm = float(value)
            self._measure_norm_error = float(standard_error)

    @property
    def is_calibrated(self) -> bool:
        return self._measure_norm is not None

    # Validation
    # ----------------------------------------
    def jacobi_residual(self) -> float:
        c = self.structure_constants
        jacobi = (
            np.einsum("bcl,alm->abcm", c, c) + np.einsum("cal,blm->abcm", c, c) + np.einsum("abl,clm->abcm", c, c)
        )
        return float(np.max(np.abs(jacobi))) if jacobi.size else 0.0

    def validate(self) -> None:
        c = self.structure_constants
        antisymmetry = float(np.max(np.abs(c + c.transpose(1, 0, 2)))) if c.size else 0.0
        if antisymmetry > JACOBI_TOLERANCE:
            raise DescriptorError(f"structure constants are not antisymmetric (residual {antisymmetry:.3g})")
        # [g_a, g_b] must land in g_{a+b}
        expected = self.degrees[:, None, None] + self.degrees[None, :, None]
        off_grade = np.abs(c) * (expected != self.degrees[None, None, :])
        if c.size and np.max(off_grade) > 0:
            i, j, k = np.unravel_index(np.argmax(off_grade), c.shape)
            raise DescriptorError(
                f"structure constant c[{i}][{j}][{k}] = {c[i, j, k]} breaks the grading "
                f"(layers {self.degrees[i]} + {self.degrees[j]} -> {self.degrees[k]})"
            )
        residual = self.jacobi_residual()
        if residual > JACOBI_TOLERANCE:
            raise DescriptorError(f"structure constants violate the Jacobi identity (residual {residual:.3g})")
        # g_{i+1} = [g_1, g_i]
        for layer in range(1, self.step):
            block = self.bracket_block(1, layer).reshape(-1, self.layer_dims[layer])
            rank = np.linalg.matrix_rank(block) if block.size else 0
            if rank < self.layer_dims[layer]:
                raise DescriptorError(
                    f"layer {layer + 1} is not generated by brackets of layer 1 with layer {layer} "
                    f"(rank {rank} < {self.layer_dims[layer]})"
                )

    def check_point(self, x: PointLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.total_dim,):
            raise ValueError(f"Expected points with {self.total_dim} coordinates for group {self.name}, got shape {x.shape}")
        return x

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GroupDescriptor) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"GroupDescriptor(name={self.name!r}, layer_dims={list(self.layer_dims)})"


class GradedVector(object):
    """
    An element of the Lie algebra split along the layers.

    :param group: the group the vector belongs to
    :param coords: coordinates over the graded basis
    """

    def __init__(self, group: GroupDescriptor, coords: PointLike):
        self.group = group
        self.coords = group.check_point(coords)

    @property
    def components(self) -> List[np.ndarray]:
        return self.group.layers(self.coords)

    @property
    def horizontal(self) -> np.ndarray:
        return self.group.horizontal(self.coords)

    def layer(self, layer: int) -> np.ndarray:
        return self.coords[..., self.group.layer_slice(layer)]


# Group law
# ----------------------------------------


def bracket_from_constants(
    constants: Union[np.ndarray, th.Tensor], a: Union[np.ndarray, th.Tensor], b: Union[np.ndarray, th.Tensor]
) -> Union[np.ndarray, th.Tensor]:
    """
    Lie bracket ``[a, b]`` for numpy arrays or torch tensors (autograd goes through).
    """
    einsum = th.einsum if isinstance(a, th.Tensor) else np.einsum
    return einsum("...i,...j,ijk->...k", a, b, constants)


def bch_product(constants, step: int, a, b):
    """
    Baker-Campbell-Hausdorff product truncated at ``step`` (exact for step <= 3).
    Works on numpy arrays and torch tensors.
    """
    if step > 3:
        raise UnsupportedStepError(step)
    result = a + b
    if step == 1:
        return result
    ab = bracket_from_constants(constants, a, b)
    result = result + 0.5 * ab
    if step == 3:
        result = result + (bracket_from_constants(constants, a, ab) - bracket_from_constants(constants, b, ab)) / 12.0
    return result


def bracket(g: GroupDescriptor, a: PointLike, b: PointLike) -> np.ndarray:
    """
    Lie bracket of two algebra elements given over the graded basis.

    :param g: the group
    :param a: first element
    :param b: second element
    :return: ``[a, b]``
    """
    return bracket_from_constants(g.structure_constants, g.check_point(a), g.check_point(b))


def multiply(g: GroupDescriptor, a: PointLike, b: PointLike) -> np.ndarray:
    """
    Group product ``a * b`` in exponential coordinates.

    :param g: the group
    :param a: left factor(s)
    :param b: right factor(s)
    :return: the product, broadcast over leading axes
    """
    a, b = g.check_point(a), g.check_point(b)
    if g.closed_form == "heisenberg":
        k = g.horizontal_dim // 2
        result = a + b
        symplectic = np.sum(a[..., :k] * b[..., k : 2 * k] - a[..., k : 2 * k] * b[..., :k], axis=-1)
        result[..., -1] += 0.5 * symplectic
        return result
    return bch_product(g.structure_constants, g.step, a, b)


def inverse(g: GroupDescriptor, a: PointLike) -> np.ndarray:
    return -g.check_point(a)


def dilate(g: GroupDescriptor, lam: Union[float, np.ndarray], a: PointLike) -> np.ndarray:
    """
    Dilation ``delta_lambda``: layer-i coordinates are multiplied by ``lambda ** i``.

    :param g: the group
    :param lam: positive factor (or array of factors broadcasting against the leading axes)
    :param a: the point(s)
    :return: the dilated point(s)
    """
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam <= 0):
        raise ValueError(f"Dilation factor must be positive, got {lam}")
    return g.check_point(a) * lam[..., None] ** g.degrees


def basis_point(g: GroupDescriptor, j: int, t: Union[float, np.ndarray] = 1.0) -> np.ndarray:
    """
    The point ``exp(t X_j)`` (horizontal slot ``j``), broadcast over ``t``.
    """
    if not 0 <= j < g.horizontal_dim:
        raise ValueError(f"Horizontal index must be between 0 and {g.horizontal_dim - 1}, got {j}")
    t = np.asarray(t, dtype=np.float64)
    point = np.zeros(t.shape + (g.total_dim,))
    point[..., j] = t
    return point


def flow(g: GroupDescriptor, j: int, t: Union[float, np.ndarray], x: PointLike) -> np.ndarray:
    """
    Integral line of the left-invariant field ``X_j``: ``exp(t X_j)(x) = x * exp(t e_j)``.

    :param g: the group
    :param j: horizontal index (0-based)
    :param t: time(s), broadcast against the leading axes of ``x``
    :param x: starting point(s)
    :return: the point(s) reached at time ``t``
    """
    return multiply(g, x, basis_point(g, j, t))


def left_invariant_frame(g: GroupDescriptor, x: PointLike) -> np.ndarray:
    """
    Coordinates of the horizontal fields at ``x``: row ``j`` holds ``X_j(x)``.
    For step <= 3, ``X_j(x) = e_j + [x, e_j] / 2 + [x, [x, e_j]] / 12``.

    :param g: the group
    :param x: the point(s), shape (..., N)
    :return: array of shape (..., n, N)
    """
    x = g.check_point(x)
    if g.step > 3:
        raise UnsupportedStepError(g.step)
    n, n_total = g.horizontal_dim, g.total_dim
    c = g.structure_constants
    basis = np.eye(n, n_total)
    # ad_x restricted to the horizontal basis: [x, e_j]_k = sum_i x_i c[i, j, k]
    ad_e = np.einsum("...i,ijk->...jk", x, c[:, :n, :])
    frame = basis + 0.5 * ad_e
    if g.step == 3:
        frame = frame + np.einsum("...i,...jl,ilk->...jk", x, ad_e, c) / 12.0
    return frame


def project_to_hyperplane(g: GroupDescriptor, j: int, x: PointLike) -> np.ndarray:
    """
    Projection ``Pr_j`` onto ``{x_j = 0}`` along the integral lines of ``X_j``.

    :param g: the group
    :param j: horizontal index
    :param x: the point(s)
    :return: the point where the integral line through ``x`` crosses the hyperplane
    """
    x = g.check_point(x)
    return flow(g, j, -x[..., j], x)


# Built-in groups
# ----------------------------------------


def euclidean_ball_volume(n: int) -> float:
    return float(np.pi ** (n / 2) / gamma(n / 2 + 1))


def euclidean(n: int) -> GroupDescriptor:
    """
    Abelian group R^n with the Euclidean metric, normalized so that the unit ball has measure 1.
    """
    if n < 1:
        raise ValueError(f"Dimension must be positive, got {n}")
    return GroupDescriptor(
        [n], name=f"euclidean-{n}", measure_norm=1.0 / euclidean_ball_volume(n), closed_form="euclidean", check=False
    )


def heisenberg(k: int = 1) -> GroupDescriptor:
    """
    Heisenberg group H^k with coordinates ``(x_1..x_k, y_1..y_k, z)`` and ``[X_i, Y_i] = Z``.
    """
    if k < 1:
        raise ValueError(f"Heisenberg index must be positive, got {k}")
    n_total = 2 * k + 1
    constants = np.zeros((n_total, n_total, n_total))
    for i in range(k):
        constants[i, k + i, 2 * k] = 1.0
        constants[k + i, i, 2 * k] = -1.0
    return GroupDescriptor([2 * k, 1], constants, name=f"heisenberg-{k}", closed_form="heisenberg")


def engel() -> GroupDescriptor:
    """
    Engel group: layers of dimension (2, 1, 1), ``[X_1, X_2] = X_3`` and ``[X_1, X_3] = X_4``.
    """
    constants = np.zeros((4, 4, 4))
    constants[0, 1, 2], constants[1, 0, 2] = 1.0, -1.0
    constants[0, 2, 3], constants[2, 0, 3] = 1.0, -1.0
    return GroupDescriptor([2, 1, 1], constants, name="engel")


BUILTIN_GROUPS: Dict[str, Callable[[], GroupDescriptor]] = {
    "euclidean-1": lambda: euclidean(1),
    "euclidean-2": lambda: euclidean(2),
    "euclidean-3": lambda: euclidean(3),
    "heisenberg-1": lambda: heisenberg(1),
    "heisenberg-2": lambda: heisenberg(2),
    "engel": engel,
}

_BUILTIN_CACHE: Dict[str, GroupDescriptor] = {}
_BUILTIN_LOCK = threading.Lock()


def get_group(name: str) -> GroupDescriptor:
    """
    Built-in group by name: ``euclidean-<n>``, ``heisenberg-<k>`` or ``engel``.
    Instances are shared so that the measure calibration is done once per process.

    :param name: the group name
    :return: the descriptor
    """
    with _BUILTIN_LOCK:
        if name not in _BUILTIN_CACHE:
            prefix, _, index = name.rpartition("-")
            if name in BUILTIN_GROUPS:
                _BUILTIN_CACHE[name] = BUILTIN_GROUPS[name]()
            elif prefix == "euclidean" and index.isdigit():
                _BUILTIN_CACHE[name] = euclidean(int(index))
            elif prefix == "heisenberg" and index.isdigit():
                _BUILTIN_CACHE[name] = heisenberg(int(index))
            else:
                raise KeyError(f"Unknown group {name!r}, available: {sorted(BUILTIN_GROUPS)}")
        return _BUILTIN_CACHE[name]
