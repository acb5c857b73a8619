from .attacks import ATTACKS, AttackVerdict, UnknownAttack, run_attack
from .fpr import fpr_experiment
from .runner import Simulation, is_true_exposure, report_bytes, run
from .scenario import Contact, Diagnosis, Query, Scenario, ScenarioInvalid

__all__ = [
    "ATTACKS", "AttackVerdict", "Contact", "Diagnosis", "Query", "Scenario",
    "ScenarioInvalid", "Simulation", "UnknownAttack", "fpr_experiment",
    "is_true_exposure", "report_bytes", "run", "run_attack",
]
