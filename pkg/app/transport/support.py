"""Node-mask supports and their forward images"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from app.fields.base import ScalarField, VectorField
from app.geometry.grid import AnnulusGeometry
from app.transport.flow import FlowMap

SUPPORT_THRESHOLD = 1e-8
DILATION_CELLS = 2.0


def nodes_within(grid: AnnulusGeometry, x: np.ndarray, y: np.ndarray, radius: float) -> np.ndarray:
    """Mask of grid nodes within radius of any of the given points"""
    mask = np.zeros(grid.shape, dtype=bool)
    if np.size(x) == 0:
        return mask
    distances, _ = cKDTree(np.column_stack([np.ravel(x), np.ravel(y)])).query(
        np.column_stack([grid.X.ravel(), grid.Y.ravel()])
    )
    return (distances <= radius).reshape(grid.shape)


def distance_to_mask(grid: AnnulusGeometry, mask: np.ndarray) -> np.ndarray:
    """Euclidean distance of every node to the nearest masked node (inf if empty)"""
    if not np.any(mask):
        return np.full(grid.shape, np.inf)
    tree = cKDTree(np.column_stack([grid.X[mask], grid.Y[mask]]))
    distances, _ = tree.query(np.column_stack([grid.X.ravel(), grid.Y.ravel()]))
    return distances.reshape(grid.shape)


@dataclass(frozen=True)
class SupportRegion:
    """Grid nodes where a field is considered nonzero"""

    grid: AnnulusGeometry
    mask: np.ndarray
    dilation_radius: float = 0.0

    @classmethod
    def empty(cls, grid: AnnulusGeometry) -> "SupportRegion":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def from_field(
        cls,
        field: Union[ScalarField, VectorField],
        threshold: float = SUPPORT_THRESHOLD,
        reference: Optional[float] = None,
    ) -> "SupportRegion":
        """Nodes where |field| exceeds threshold times its sup (or a reference scale)"""
        if isinstance(field, VectorField):
            magnitude = field.magnitude()
        else:
            magnitude = np.abs(field.values)
        if magnitude.ndim == 3:
            magnitude = np.max(magnitude, axis=0)
        scale = float(np.max(magnitude)) if reference is None else reference
        if scale == 0.0:
            return cls.empty(field.grid)
        return cls(field.grid, magnitude > threshold * scale)

    @property
    def is_empty(self) -> bool:
        return not bool(np.any(self.mask))

    def area_fraction(self) -> float:
        weights = self.grid.area_weights
        return float(np.sum(weights[self.mask]) / np.sum(weights))

    def dilate(self, radius: float) -> "SupportRegion":
        if self.is_empty or radius <= 0.0:
            return self
        mask = distance_to_mask(self.grid, self.mask) <= radius
        return SupportRegion(self.grid, mask, self.dilation_radius + radius)

    def erode(self, radius: float) -> "SupportRegion":
        """Nodes whose radius-neighbourhood stays inside the region"""
        if radius <= 0.0:
            return self
        outside = distance_to_mask(self.grid, ~self.mask)
        return SupportRegion(self.grid, self.mask & (outside > radius), self.dilation_radius)

    def union(self, other: "SupportRegion") -> "SupportRegion":
        return SupportRegion(self.grid, self.mask | other.mask, max(self.dilation_radius, other.dilation_radius))

    def image(self, flow: FlowMap, radius: Optional[float] = None) -> "SupportRegion":
        """Forward image under the flow's final positions, dilated"""
        radius = DILATION_CELLS * self.grid.spacing if radius is None else radius
        if self.is_empty:
            return SupportRegion.empty(self.grid)
        x, y = flow.end
        return SupportRegion(self.grid, nodes_within(self.grid, x[self.mask], y[self.mask], radius), radius)


def support_envelope(
    supp0: SupportRegion,
    flow: FlowMap,
    source_supports: Iterable[Tuple[SupportRegion, FlowMap]] = (),
    radius: Optional[float] = None,
) -> SupportRegion:
    """Image of supp0 plus images of source supports, each under its own flow to the end time"""
    envelope = supp0.image(flow, radius)
    for region, source_flow in source_supports:
        envelope = envelope.union(region.image(source_flow, radius))
    return envelope


def pullback(region: SupportRegion, x: np.ndarray, y: np.ndarray) -> SupportRegion:
    """Nodes whose mapped positions (x, y) land on the region (nearest node)"""
    grid = region.grid
    tree = cKDTree(np.column_stack([grid.X.ravel(), grid.Y.ravel()]))
    _, index = tree.query(np.column_stack([np.ravel(x), np.ravel(y)]))
    return SupportRegion(grid, region.mask.ravel()[index].reshape(grid.shape), region.dilation_radius)


def boundary_connected(mask: np.ndarray) -> np.ndarray:
    """Union of the components of mask (periodic in theta) that touch a boundary circle"""
    labels, count = ndimage.label(mask)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    # Glue components across the theta seam
    parent = np.arange(count + 1)

    def find(k: int) -> int:
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for a, b in zip(labels[:, 0], labels[:, -1]):
        if a and b:
            parent[find(a)] = find(b)
    roots = np.array([find(k) for k in range(count + 1)])
    touching = set(roots[labels[0]][labels[0] > 0]) | set(roots[labels[-1]][labels[-1] > 0])
    return np.isin(roots[labels], list(touching)) & mask
