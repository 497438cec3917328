from .adversary import BEHAVIORS, AdversaryContext, Behavior, Injection
from .network import NetworkModel
from .simulator import AdversaryScript, Simulation, run
from .trace import RunTrace

__all__ = ["BEHAVIORS", "AdversaryContext", "AdversaryScript", "Behavior", "Injection",
           "NetworkModel", "RunTrace", "Simulation", "run"]
