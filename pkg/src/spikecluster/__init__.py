"""Numerical toolkit for sign-changing multi-spike clusters of

    eps^2 Lap v - V(x) v + |v|^(p-2) v = 0

concentrating at a saddle point of ``V``: ground-state profile and reduced
constants, the finite-dimensional reduced energy, a grid realisation of the
corrected ansatz, and a checker for the limiting balance system.
"""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .profile import (  # noqa: F401
    InteractionKernel,
    Nonlinearity,
    Profile,
    ReducedConstants,
    c3_from_interaction,
    compute_constants,
    decay_amplitude,
    domination_constant,
    eval_w,
    eval_w_prime,
    get_profile,
    interaction_kernel,
    interaction_xi,
    interaction_xi_prime,
    kernel_h1_norm,
    load_profile,
    ode_residual,
    pohozaev_defect,
    save_profile,
    solve_profile,
    verify_nondegeneracy,
)
from .potential import SaddlePotential, SpikeConfig, in_D, in_gamma, make_saddle, quad  # noqa: F401
from .reduced import (  # noqa: F401
    ConfigFamily,
    CriticalOptions,
    family_for,
    find_critical_point,
    generate,
    h_map,
    hessian_signature,
    maxmin_report,
    r_eps,
    reduced_energy,
    reduced_gradient,
)
from .equilibrium import (  # noqa: F401
    balance_kernel,
    contact_graph,
    dilation_value,
    search_equilibria,
    sign_constrained_kernel,
)
