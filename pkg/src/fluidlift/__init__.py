"""Cooperative multi-quadrotor transport of a variable-mass, fluid-filled load.

Modules: ``manifold`` (SO(3)/S^2 tools), ``dynamics`` (models and integrator),
``control`` (wrench design and thrust feedback), ``mass_estimator`` (online
mass observer), ``excitation`` (excitation checks), ``trajectory``
(references), ``inertia_lut`` (hydrostatic inertia tables) and ``harness``
(scenarios, simulation loop, outputs).
"""
__version__ = "0.1.0"
