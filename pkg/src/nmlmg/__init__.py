"""Non-Markovian open Lipkin-Meshkov-Glick model.

Modules: ``spin_algebra`` (Dicke-basis operators), ``model`` (parameters and
critical lines), ``meanfield`` (fixed points and phase diagram), ``heom``
(hierarchical generator, spectra, steady states), ``embedding`` (pseudomode
oracle and symmetry maps), ``observables``, ``thermolimit`` (Gaussian
fluctuations in the thermodynamic limit), ``labmap`` (cavity-QED parameter
bridge) and ``cli``.
"""

__version__ = "0.1.0"
