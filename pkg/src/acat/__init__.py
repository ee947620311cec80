"""acat: a deterministic software twin of an automated contact-angle test cell.

Device-level models (safety relay, stepper drives, pneumatics, dispenser,
vacuum gripper), the batch sequencing logic, a synthetic goniometry
pipeline, an electrical-rule compliance checker, and a live operator
gateway, all driven by one seeded discrete-event kernel.
"""

__version__ = "0.1.0"
