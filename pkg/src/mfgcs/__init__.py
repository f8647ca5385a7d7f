"""Particle solver and verification suite for state-constrained mean field
games of controls.

Subpackage map:

* :mod:`mfgcs.geometry`    -- state regions, signed distance, boundary charts
* :mod:`mfgcs.lagrangian`  -- cost models, convex duality, hypothesis checks
* :mod:`mfgcs.constants`   -- regularity-budget estimate chain and solve
* :mod:`mfgcs.trajopt`     -- discrete best responses and certificates
* :mod:`mfgcs.measures`    -- atomic path/state measures and exact transport
* :mod:`mfgcs.equilibrium` -- fixed-point search, exploitability, solutions
* :mod:`mfgcs.approx`      -- constrained path approximation in charts
* :mod:`mfgcs.scenarios`   -- named configurations shared by CLI and tests
* :mod:`mfgcs.cli`         -- batch runner (`mfgcs run / audit`)
"""

__version__ = "0.1.0"

from . import constants, geometry, lagrangian, measures, trajopt  # noqa: F401
