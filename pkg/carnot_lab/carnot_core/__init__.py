from carnot_lab.carnot_core.descriptors import descriptor_from_dict, load_descriptor
from carnot_lab.carnot_core.groups import (
    BUILTIN_GROUPS,
    DescriptorError,
    GradedVector,
    GroupDescriptor,
    UnsupportedStepError,
    bracket,
    dilate,
    engel,
    euclidean,
    flow,
    get_group,
    heisenberg,
    inverse,
    left_invariant_frame,
    multiply,
    project_to_hyperplane,
)
from carnot_lab.carnot_core.measure import EmptyCalibrationError, Region, UnboundedRegionError, calibrate_measure, measure
