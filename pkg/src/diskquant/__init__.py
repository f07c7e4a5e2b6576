"""Equivariant Berezin calculus on the hyperbolic disk.

Library layout:

* ``geometry``   disk points, SU(1,1) action, kernels, weights
* ``quadrature`` weighted rules on the disk
* ``fuchsian``   groups, orbit tables, fundamental domains
* ``bergman``    the classical weighted Bergman space oracle
* ``symbols``    group-averaged symbols, star product, trace, norms
* ``norms``      region compressions, nuclear/HS sequences, orbit sums
* ``calibration``identity constants pinned against the oracle
* ``cli``        batch driver (verify / compute / calibrate / group-info)
"""

from .geometry import (BOUNDARY_GUARD, DiskPoint, SU11Element, Weight, aleph,
                       d_kernel, discrete_series_action, hyperbolic_distance,
                       mobius_apply, phase_alpha)
from .quadrature import DiskRule, RegionRule, build_disk_rule, integrate, restrict
from .fuchsian import (FuchsianGroup, FundamentalDomain, OrbitTable, covolume,
                       counting_function, cyclic_group, dirichlet_membership,
                       enumerate_orbit, exponent_probe, octagon_group,
                       read_group_file, trivial_group, write_group_file)

__all__ = [
    "BOUNDARY_GUARD", "DiskPoint", "SU11Element", "Weight", "aleph",
    "d_kernel", "discrete_series_action", "hyperbolic_distance",
    "mobius_apply", "phase_alpha",
    "DiskRule", "RegionRule", "build_disk_rule", "integrate", "restrict",
    "FuchsianGroup", "FundamentalDomain", "OrbitTable", "covolume",
    "counting_function", "cyclic_group", "dirichlet_membership",
    "enumerate_orbit", "exponent_probe", "octagon_group",
    "read_group_file", "trivial_group", "write_group_file",
]

__version__ = "0.1.0"
