"""Model-free secondary voltage control for islanded microgrids.

Core layout:

- ``polyalg``   matrix polynomials in z^-1 and the design identity solver
- ``plant``     full 4-DER electromagnetic model, reduced surrogate, and
                discrete linear oracle plants
- ``identify``  linear and neural-augmented online estimators
- ``control``   adaptive control laws, switching supervisor, known-model
                oracle controller, feedback-linearization baseline
- ``harness``   scenario config, two-rate simulation loop, records, metrics
- ``service``   FastAPI app wrapping the harness
- ``cli``       thin command-line client of the service
"""

__version__ = "0.1.0"
