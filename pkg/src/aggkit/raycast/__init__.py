"""Ray engine and ray-pattern generators."""
from .bvh import Hits, Instance, SceneIndex, cast_rays, traversal_count
from .patterns import (
    disk_endpoints,
    disk_rays,
    fibonacci_sphere,
    grid_endpoints,
    plane_basis,
    ring_positions,
    ring_radius,
    rays_to_points,
    sphere_directions,
)

__all__ = [
    "Hits", "Instance", "SceneIndex", "cast_rays", "traversal_count",
    "disk_endpoints", "disk_rays", "fibonacci_sphere", "grid_endpoints", "plane_basis",
    "ring_positions", "ring_radius", "rays_to_points", "sphere_directions",
]
