"""
Horizontal and Pansu differentials of maps between Carnot groups.
"""
from typing import List, NamedTuple, Optional

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor, inverse, multiply
from carnot_lab.common.type_aliases import PointLike
from carnot_lab.field_calc.stencil import HorizontalStencil


class HorizontalDifferential(NamedTuple):
    # row i holds X_i phi, the horizontal part of phi(x)^-1 phi(exp(h X_i) x) / h
    matrix: np.ndarray
    norm: np.ndarray
    error: np.ndarray
    one_sided: np.ndarray
    h: float


def horizontal_differential(phi, x: PointLike, h: float = 1e-4, domain=None) -> HorizontalDifferential:
    """
    ``D_h phi(x) = (X_i phi_j)`` by left-logarithmic central differences at ``h`` and ``h / 2``,
    Richardson-extrapolated. Differencing ``phi(x)^-1 phi(y)`` instead of ``phi(y) - phi(x)``
    reads the result in the frame at ``phi(x)``.

    :param phi: a :class:`carnot_lab.map_calc.maps.GroupMap`
    :param x: point(s), shape (N,) or (B, N)
    :param h: the step
    :param domain: when given, stencils leaving it fall back to one-sided differences (flagged)
    :return: the (n, n~) matrices with their spectral norms and error estimates
    """
    source, target = phi.source, phi.target
    single = np.ndim(x) == 1
    sample = HorizontalStencil(source, h=h, transform=phi, target=target, domain=domain, richardson=True).sample(x)
    shifts = multiply(target, inverse(target, sample.center)[:, None, None, :], sample.neighbors)
    horizontal = shifts[..., target.layer_slice(1)]
    zeros = np.zeros(len(sample))
    coarse, fine = [], []
    for component in range(target.horizontal_dim):
        pair = sample.differences(zeros, horizontal[..., component])
        coarse.append(pair[0])
        fine.append(pair[1])
    coarse, fine = np.stack(coarse, axis=-1), np.stack(fine, axis=-1)
    matrix = (4 * fine - coarse) / 3
    result = HorizontalDifferential(
        matrix=matrix,
        norm=np.linalg.norm(matrix, ord=2, axis=(-2, -1)),
        error=np.max(np.abs(coarse - fine), axis=(-2, -1)),
        one_sided=np.any(sample.one_sided, axis=-1),
        h=float(h),
    )
    if single:
        return HorizontalDifferential(result.matrix[0], result.norm[0], result.error[0], result.one_sided[0], result.h)
    return result


class PansuDifferential(object):
    """
    Graded homomorphism ``D^phi(x): g -> g~`` given by its layer blocks.

    :param blocks: block ``k`` maps layer ``k`` of the source to layer ``k`` of the target,
        shape (B, n_k, n~_k) or (n_k, n~_k)
    :param residual: largest violation of ``[D X, D Y] = D [X, Y]`` over basis pairs
    :param det: determinant (product of the block determinants), 0 when the layers do not match
    :param reason: why the determinant is 0 by convention, None otherwise
    :param source: the source group
    :param target: the target group
    """

    def __init__(
        self,
        blocks: List[np.ndarray],
        residual,
        det,
        reason: Optional[str],
        source: GroupDescriptor,
        target: GroupDescriptor,
    ):
        self.blocks = blocks
        self.residual = residual
        self.det = det
        self.reason = reason
        self.source = source
        self.target = target

    @property
    def horizontal(self) -> np.ndarray:
        return self.blocks[0]

    def matrix(self) -> np.ndarray:
        """
        The full (N, N~) matrix in exponential coordinates (block diagonal).
        """
        leading = self.blocks[0].shape[:-2]
        full = np.zeros(leading + (self.source.total_dim, self.target.total_dim))
        for layer, block in enumerate(self.blocks, start=1):
            if layer > self.target.step:
                continue
            full[..., self.source.layer_slice(layer), self.target.layer_slice(layer)] = block
        return full


def _bracket_table(g: GroupDescriptor, layer: int) -> np.ndarray:
    """
    Coefficients of ``[e_a, e_b]`` on layer ``layer + 1`` for ``a`` in layer 1 and ``b`` in layer ``layer``,
    shape (n_1 * n_layer, n_{layer + 1}).
    """
    rows = g.structure_constants[g.layer_slice(1), g.layer_slice(layer), g.layer_slice(layer + 1)]
    return rows.reshape(-1, g.layer_dims[layer])


def pansu_extend(source: GroupDescriptor, target: GroupDescriptor, horizontal: np.ndarray) -> PansuDifferential:
    """
    Extend a horizontal block to a graded homomorphism of the Lie algebras.
    Block ``k + 1`` solves ``D[e_a, e_b] = [D e_a, D e_b]`` for ``a`` in layer 1 and ``b`` in layer ``k``
    in the least-squares sense; the residual then checks the bracket relation on all basis pairs,
    which measures how far ``horizontal`` is from the restriction of a homomorphism.

    :param source: the source group
    :param target: the target group
    :param horizontal: the (n, n~) block, row ``i`` being the image of ``X_i`` (or a batch (B, n, n~))
    :return: the Pansu differential (batched like the input)
    """
    horizontal = np.asarray(horizontal, dtype=np.float64)
    single = horizontal.ndim == 2
    blocks = [horizontal[None] if single else horizontal]
    batch = blocks[0].shape[0]
    if blocks[0].shape[1:] != (source.horizontal_dim, target.horizontal_dim):
        raise ValueError(
            f"Expected a horizontal block of shape {(source.horizontal_dim, target.horizontal_dim)}, "
            f"got {blocks[0].shape[1:]}"
        )

    def embed(block: np.ndarray, layer: int) -> np.ndarray:
        full = np.zeros(block.shape[:-1] + (target.total_dim,))
        if layer <= target.step:
            full[..., target.layer_slice(layer)] = block
        return full

    for layer in range(1, source.step):
        n_next = source.layer_dims[layer]
        if layer + 1 > target.step:
            blocks.append(np.zeros((batch, n_next, 0)))
            continue
        table = _bracket_table(source, layer)
        images = np.einsum(
            "bai,bcj,ijk->back", embed(blocks[0], 1), embed(blocks[layer - 1], layer), target.structure_constants
        )[..., target.layer_slice(layer + 1)]
        images = images.reshape(batch, -1, target.layer_dims[layer])
        blocks.append(np.einsum("ka,bal->bkl", np.linalg.pinv(table), images))

    full = np.zeros((batch, source.total_dim, target.total_dim))
    for layer, block in enumerate(blocks, start=1):
        if layer <= target.step:
            full[:, source.layer_slice(layer), target.layer_slice(layer)] = block
    brackets_of_images = np.einsum("bai,bcj,ijk->back", full, full, target.structure_constants)
    images_of_brackets = np.einsum("ack,bkl->bacl", source.structure_constants, full)
    residual = np.max(np.abs(brackets_of_images - images_of_brackets), axis=(1, 2, 3))

    if source.layer_dims == target.layer_dims:
        det = np.prod([np.linalg.det(block) for block in blocks], axis=0)
        reason = None
    else:
        det = np.zeros(batch)
        reason = f"layer dimensions differ: {list(source.layer_dims)} -> {list(target.layer_dims)}"
    if single:
        return PansuDifferential([block[0] for block in blocks], float(residual[0]), float(det[0]), reason, source, target)
    return PansuDifferential(blocks, residual, det, reason, source, target)


def _spectral_norm(block: np.ndarray) -> np.ndarray:
    if block.shape[-1] == 0 or block.shape[-2] == 0:
        return np.zeros(block.shape[:-2])
    return np.linalg.norm(block, ord=2, axis=(-2, -1))


def homogeneous_norm(pansu: PansuDifferential) -> np.ndarray:
    """
    Graded norm ``max_k |L_k| ** (1 / k)`` of a Pansu differential.
    """
    norms = [_spectral_norm(block) ** (1.0 / layer) for layer, block in enumerate(pansu.blocks, start=1)]
    return np.max(np.stack(norms, axis=-1), axis=-1)


def structural_constant(source: GroupDescriptor, target: GroupDescriptor) -> float:
    """
    A constant ``C >= 1`` with ``|D_h phi| <= |D^phi| <= C |D_h phi|`` for the graded norm.
    From ``|L_{k+1}| <= |T_k^+| kappa~ sqrt(n_1 n_k) |L_1| |L_k|``, ``T_k`` being the bracket table of the source
    and ``kappa~`` the norm of the target structure constants, ``|L_k| <= C_k |L_1| ** k``.

    :param source: the source group
    :param target: the target group
    :return: ``max_k C_k ** (1 / k)``
    """
    kappa = float(np.linalg.norm(target.structure_constants))
    constants = [1.0]
    for layer in range(1, min(source.step, target.step)):
        table_norm = float(np.linalg.norm(np.linalg.pinv(_bracket_table(source, layer)), ord=2))
        factor = kappa * np.sqrt(source.layer_dims[0] * source.layer_dims[layer - 1]) * table_norm
        constants.append(factor * constants[-1])
    return float(max(constant ** (1.0 / layer) for layer, constant in enumerate(constants, start=1)))
