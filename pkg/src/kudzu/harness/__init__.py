from .audit import (Verdict, audit_bounds, audit_liveness, audit_quorum, audit_safety,
                    audit_synchrony, latencies, notar_cap)
from .scenario import (ConfigError, Scenario, bundled_names, load_scenario, merge_reports, report,
                       run_scenario, simulate)

__all__ = ["ConfigError", "Scenario", "Verdict", "audit_bounds", "audit_liveness", "audit_quorum",
           "audit_safety", "audit_synchrony", "bundled_names", "latencies", "load_scenario",
           "merge_reports", "notar_cap", "report", "run_scenario", "simulate"]
