from carnot_lab.cc_metric.balls import (
    CcBall,
    ball_bounding_box,
    ball_contains,
    ball_measure,
    ball_region,
    ball_sample,
    make_ball,
    unit_ball_region,
)
from carnot_lab.cc_metric.control import HorizontalPath, control_distance, path_endpoint, path_length
from carnot_lab.cc_metric.distance import (
    DistanceCache,
    DistanceConvergenceError,
    box_norm,
    distance,
    distance_bracket,
    estimate_equivalence_constants,
    geodesic_phase,
    homogeneous_upper_bound,
    layer_bounds,
    layer_lower_bound,
    pure_direction_distances,
    within_radius,
)
