from carnot_lab.field_calc.derivatives import (
    acl_spot_check,
    curve_length,
    gradient_norms,
    horizontal_derivative,
    horizontal_gradient,
    line_restriction,
    metric_derivative,
    seminorm_Lq,
)
from carnot_lab.field_calc.domains import Domain
from carnot_lab.field_calc.fields import (
    Clamp,
    ConstantField,
    CoordinateField,
    DistanceField,
    Extremum,
    FunctionField,
    LinearHorizontalField,
    PolynomialField,
    PostComposed,
    ScalarField,
    Sum,
    abs_val,
    bump_field,
    clamp,
    compose_smooth,
    cutoff,
    maximum,
    minimum,
    neg_part,
    pos_part,
    scale,
)
from carnot_lab.field_calc.stencil import HorizontalStencil, StencilSample
