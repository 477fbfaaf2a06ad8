"""elab: remote/virtual laboratory management service.

Core pieces: scenario manifests and packages, an activity-sequencing
runtime, simulated lab devices behind a generic item API, an XML-over-HTTP
data-access protocol, a time-sharing device scheduler, a compatibility
checker, and an event-sourced HTTP service tying them together.
"""

__version__ = "0.1.0"
