"""Steady-state spin synchronization of trapped-ion crystals.

Pipeline, bottom to top:

- :mod:`ionsync.crystal` -- planar two-species crystals, transverse modes
- :mod:`ionsync.cooling` -- Doppler damping and occupation of every mode
- :mod:`ionsync.raman`   -- effective two-level Raman parameters and the
  adiabatic elimination of the excited state
- :mod:`ionsync.spinspin` -- phonon-mediated spin-spin rates
- :mod:`ionsync.langevin` -- c-number stochastic trajectories
- :mod:`ionsync.exact`   -- dense and permutation-symmetric master equations
- :mod:`ionsync.ramsey`  -- fringe decay and spin-variance readout
- :mod:`ionsync.cli`     -- config-driven pipeline runner
"""

__version__ = "0.1.0"
