from carnot_lab.operator_lab.open_sets import OpenSetSpec
from carnot_lab.operator_lab.set_function import (
    IntegratedDerivative,
    QuasiAdditivityVerdict,
    SetFunctionEstimate,
    integral_set_function,
    integrated_derivative,
    phi_estimate,
    phi_ratio_estimate,
    quasi_additivity_check,
    set_derivative,
    union_family,
)
from carnot_lab.operator_lab.verifiers import (
    NormVerdict,
    ReshetnyakCheck,
    SupportTransferCheck,
    UpperGradient,
    composition_norm,
    reshetnyak_check,
    support_transfer_check,
    upper_gradient_estimate,
    verify_prop_qinf,
    verify_theorem_lip,
    verify_theorem_sobolev,
    within_tolerance,
)
