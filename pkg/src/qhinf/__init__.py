"""Coherent H-infinity control toolbox for Markovian jump linear quantum systems.

Submodules:

* ``qmodel``: commutation matrices, Ito data, plant/controller containers
* ``realizability``: physical realizability checks and noise augmentation
* ``lmi``: strict LMI feasibility engine
* ``synthesis``: controller synthesis from coupled LMIs
* ``analysis``: Riccati equations, H-infinity norms, closed-loop certification
* ``jumpsim``: fault-path sampling and moment propagation
* ``optics``: OPO plant front end and optical controller realization
* ``demo``: bundled worked design example
"""

__version__ = "0.1.0"

from .qmodel import (  # noqa: F401,E402
    CommutationMatrix,
    Controller,
    ControllerMode,
    ClosedLoop,
    JumpPlant,
    PhysicalParams,
    TransitionRateMatrix,
    assemble_closed_loop,
    block_j,
    canonical_ito,
    ito_decompose,
    make_commutation_matrix,
    physical_to_statespace,
    validate_generator,
)
