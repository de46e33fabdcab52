from carnot_lab.lipschitz_lab.families import describe_family, family_generate, farthest_point_net
from carnot_lab.lipschitz_lab.targets import (
    CarnotTarget,
    EuclideanTarget,
    FiniteTarget,
    LipTestFunction,
    MetricTarget,
    as_target,
    distance_field,
)
from carnot_lab.lipschitz_lab.test_functions import (
    EmptyExteriorError,
    LipschitzViolationError,
    UnboundedSetError,
    annulus_cutoff,
    coordinate_function,
    cutoff_test_function,
    disjoint_sum,
    distance_function,
    inner_set,
    mcshane_extend,
    refine,
    shaved_bump,
    symmetrize,
    validate_lipschitz,
)
