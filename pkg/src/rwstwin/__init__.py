"""Digital-twin framework for a 6-DOF industrial robot workcell: a
controller emulator speaking a REST dialect with digest auth, a polling
twin client with refresh telemetry, an LM inverse-kinematics motion
pipeline, and a browser proxy gateway.
"""

__version__ = "0.1.0"
