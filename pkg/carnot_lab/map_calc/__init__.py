from carnot_lab.map_calc.differentials import (
    HorizontalDifferential,
    PansuDifferential,
    homogeneous_norm,
    horizontal_differential,
    pansu_extend,
    structural_constant,
)
from carnot_lab.map_calc.distortion import (
    DET_THRESHOLD,
    DistortionReport,
    FiniteDistortionVerdict,
    distortion_Kp,
    finite_distortion_check,
    kp_values,
    spatial_jacobian,
)
from carnot_lab.map_calc.maps import (
    Automorphism,
    ComposedMap,
    ConstantMap,
    Dilation,
    FunctionMap,
    GroupMap,
    IdentityMap,
    LeftTranslation,
    Projection,
    RadialSquash,
    Shear,
)
