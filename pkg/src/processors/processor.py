"""Rating Processor - one method per CLI command over a loaded problem"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from config.settings import cf
from src.connectors.problem_loader import RunConfig, load_allocation_csv, load_scheme_csv
from src.core.characteristic import A_multiplier, A_multiplier_psi, make_context
from src.core.primitives import theta_c, theta_L
from src.core.reports import ConditionReport
from src.exceptions import PreconditionViolated
from src.processors.censorship_solver import (ORACLE_GRID, V_of, V_prime, build_scheme, classify_regime,
                                              cutoff_report, regime_of, scheme_payoff, solve_cutoff)
from src.processors.conditions import (check_AB, check_N1, check_no_exclusion, check_Sj_Cj, classify_quasi)
from src.processors.menu_oracle import (GridSpec, Menu, additive_cutoff_check, anchored_quality_grid,
                                        compare_oracles, ic_audit, project_scheme, scheme_from_menu)
from src.processors.signaling import (J_table, additive_separation, check_full_separation, fee_design,
                                      full_separation, separation_at_top)
from src.processors.stochastic import (allocation_from_scheme, elasticity, envelope_residual, fee_margin,
                                       feasibility_check, improvement_scan, noisy_test, solve_fee_quality)
from src.utils.table_export import allocation_frame, best_response_frame, conditions_frame, scheme_frame

logger = logging.getLogger(__name__)

# bound on the envelope identity residual of an audited allocation
ENVELOPE_TOL = 1e-6
# rows of the separation table
SEPARATION_ROWS = 101


@dataclass
class CommandOutput:
    """Result sections, CSV tables and the pass/fail lines of one command"""
    command: str
    sections: Dict[str, Any] = field(default_factory=dict)
    tables: List[Tuple[str, pd.DataFrame]] = field(default_factory=list)
    checks: List[Tuple[str, bool]] = field(default_factory=list)

    def check_reports(self, reports: List[ConditionReport]):
        self.checks.extend((r.id, r.holds) for r in reports)


class RatingProcessor:
    """Runs the command named in a RunConfig"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.spec = config.problem
        self.params = config.params
        self.handlers = {
            "solve-deterministic": self.solve_deterministic,
            "classify": self.classify,
            "check-conditions": self.check_conditions,
            "oracle-compare": self.oracle_compare,
            "stochastic-audit": self.stochastic_audit,
            "signaling": self.signaling,
            "fee-design": self.fee_design,
        }

    def execute(self) -> CommandOutput:
        return self.handlers[self.config.command]()

    def _grid_n(self, key: str):
        return self.params.get(key) or self.config.grid_n

    def _optimal_cutoff(self) -> float:
        if "theta0" in self.params:
            return float(self.params["theta0"])
        return solve_cutoff(self.spec).theta0

    # ------------------------------------------------------------------
    # deterministic ratings
    # ------------------------------------------------------------------

    def solve_deterministic(self) -> CommandOutput:
        spec = self.spec
        out = CommandOutput("solve-deterministic")
        if "theta0" in self.params:
            theta0 = float(self.params["theta0"])
            cutoff = {"theta0": theta0, "value": V_of(spec, theta0), "V_prime": V_prime(spec, theta0),
                      "status": "given"}
        else:
            solution = solve_cutoff(spec)
            theta0 = solution.theta0
            cutoff = solution.to_dict()
        scheme = build_scheme(spec, theta0)
        out.sections = {
            "problem": spec.describe(),
            "cutoff": cutoff,
            "scheme": scheme,
            "regime": regime_of(spec, scheme),
            "value": scheme_payoff(spec, scheme),
            "q_max": spec.q_max,
            "kappa": spec.relative_concavity,
            "theta_c": theta_c(spec, theta0),
            "theta_L": theta_L(spec, theta0),
        }
        out.tables.append(("scheme", scheme_frame(spec, scheme)))
        out.checks.append((f"cutoff {cutoff['status']}", True))
        return out

    def classify(self) -> CommandOutput:
        spec = self.spec
        out = CommandOutput("classify")
        result = classify_regime(spec, oracle_grid_n=self._grid_n("oracle_grid_n"))
        quasi = classify_quasi(spec)
        out.sections = {"problem": spec.describe(), "classification": result, "quasi": quasi}
        out.tables.append(("scheme", scheme_frame(spec, result.scheme)))
        out.tables.append(("conditions", conditions_frame(result.reports)))
        out.check_reports(result.reports)
        if result.oracle_agreement is not None:
            out.checks.append(("oracle agreement", result.oracle_agreement))
        return out

    def check_conditions(self) -> CommandOutput:
        spec = self.spec
        out = CommandOutput("check-conditions")
        theta0 = self._optimal_cutoff()
        ctx = make_context(spec, theta0)
        s_report, c_report = cutoff_report(spec, theta0)
        ab_i, ab_ii = check_AB(spec, theta0)
        reports = [s_report, c_report, ab_i, ab_ii]
        if theta0 <= spec.theta_lo:
            reports.append(check_no_exclusion(spec))

        if "scheme_csv" in self.params:
            scheme = load_scheme_csv(self.params["scheme_csv"])
        else:
            scheme = build_scheme(spec, theta0)
        audit = ic_audit(spec, scheme)
        reports.append(audit)
        if audit.holds:
            reports.extend(check_Sj_Cj(spec, scheme))
        reports.extend(check_N1(spec, (seg.start, seg.end)) for _, seg in scheme.reveal_segments())
        if self.params.get("additive_cutoff"):
            reports.append(additive_cutoff_check(spec, theta0))
        quasi = classify_quasi(spec)

        A = A_multiplier(ctx)
        out.sections = {
            "problem": spec.describe(),
            "theta0": theta0,
            "A": A,
            "A_psi_form": A_multiplier_psi(ctx),
            "reports": reports,
            "quasi": quasi,
            "scheme": scheme,
        }
        out.tables.append(("conditions", conditions_frame(reports)))
        out.tables.append(("scheme", scheme_frame(spec, scheme)))
        out.check_reports(reports)
        return out

    def oracle_compare(self) -> CommandOutput:
        spec = self.spec
        out = CommandOutput("oracle-compare")
        solution = solve_cutoff(spec)
        types = spec.support.grid(201)
        if "quality" in self.params:
            grid = GridSpec(quality=tuple(self.params["quality"]), types=tuple(types))
        else:
            n = self._grid_n("grid_n") or ORACLE_GRID
            grid = anchored_quality_grid(spec, int(n), self.params.get("cutoffs", solution.maximizers))
        comparison = compare_oracles(spec, grid)
        menu = Menu(tuple(comparison["dp"]["menu"]))
        scheme = scheme_from_menu(spec, menu)
        audit = ic_audit(spec, scheme)
        projection = project_scheme(spec, build_scheme(spec, solution.theta0))
        out.sections = {
            "problem": spec.describe(),
            "comparison": comparison,
            "dp_scheme": scheme,
            "dp_scheme_value": scheme_payoff(spec, scheme),
            "ic_audit": audit,
            "lower_censorship_projection": projection,
        }
        out.tables.append(("best_response", best_response_frame(spec.cost, menu.levels, grid.types or types)))
        out.tables.append(("scheme", scheme_frame(spec, scheme)))
        out.checks.append(("oracles agree", comparison["agree"]))
        out.checks.append((audit.id, audit.holds))
        return out

    # ------------------------------------------------------------------
    # stochastic ratings
    # ------------------------------------------------------------------

    def stochastic_audit(self) -> CommandOutput:
        spec = self.spec
        out = CommandOutput("stochastic-audit")
        flags = []
        if "allocation_csv" in self.params:
            allocation = load_allocation_csv(self.params["allocation_csv"], U_bar=self.params.get("U_bar", 0.0))
            source = "file"
        else:
            scheme = build_scheme(spec, solve_cutoff(spec).theta0)
            allocation = allocation_from_scheme(spec, scheme)
            flags = improvement_scan(spec, scheme)
            source = "deterministic-optimum"
            out.sections["scheme"] = scheme
        residual = envelope_residual(spec, allocation)
        feasibility = feasibility_check(spec, allocation)
        try:
            noisy = noisy_test(spec, allocation).to_dict()
        except PreconditionViolated as e:
            logger.info(f"Noisy test skipped: {e}")
            noisy = {"skipped": str(e)}
        positive = spec.support.grid(spec.numerics.condition_grid)
        positive = positive[positive > 0]
        slopes = elasticity(spec.dist, positive)
        out.sections.update({
            "problem": spec.describe(),
            "source": source,
            "allocation": allocation,
            "envelope_residual": residual,
            "feasibility": feasibility,
            "noisy_test": noisy,
            "elasticity_range": [float(np.min(slopes)), float(np.max(slopes))],
            "improvement_flags": flags,
        })
        if "fee_mode" in self.params:
            out.sections["fee"] = self._fee_table()
        out.tables.append(("allocation", allocation_frame(allocation.theta, allocation.q, allocation.w,
                                                          feasibility.D)))
        out.checks.append(("envelope", residual <= ENVELOPE_TOL))
        out.checks.append(("MPS", feasibility.mps_holds))
        out.checks.append(("BP", feasibility.bp_holds))
        out.checks.append(("no stochastic improvement", not any(flag.conclusive for flag in flags)))
        return out

    def _fee_table(self) -> List[Dict]:
        spec = self.spec
        mode, alpha = self.params["fee_mode"], self.params.get("fee_alpha")
        thetas = self.params.get("fee_thetas") or [float(t) for t in spec.support.grid(11)[1:]]
        rows = []
        for theta in thetas:
            q = solve_fee_quality(spec, mode, alpha, float(theta))
            rows.append({"theta": float(theta), "q": q, "margin": fee_margin(spec, mode, alpha, float(theta), q)})
        return rows

    # ------------------------------------------------------------------
    # ability signaling
    # ------------------------------------------------------------------

    def signaling(self) -> CommandOutput:
        spec = self.spec
        out = CommandOutput("signaling")
        scheme = full_separation(spec)
        reports = [check_full_separation(spec, scheme)]
        if "theta_L" in self.params:
            reports.append(separation_at_top(spec, float(self.params["theta_L"]), scheme))
        out.sections = {"problem": spec.describe(), "separation": scheme}
        if self.params.get("additive"):
            additive, additive_report = additive_separation(spec)
            additive_report.id = "additive-full-separation"
            reports.append(additive_report)
            out.sections["additive_separation"] = additive
        out.sections["reports"] = reports

        grid = np.linspace(float(scheme.theta[0]), spec.theta_hi, SEPARATION_ROWS)
        grid = grid[np.asarray(spec.dist.pdf(grid)) > spec.numerics.zero_guard]
        q = scheme.quality_at(grid)
        frame = pd.DataFrame({"theta": grid, "q": q, "w": grid, "J": J_table(spec, scheme, grid)},
                             columns=cf.SEPARATION_COLUMNS)
        out.tables.append(("separation", frame))
        out.tables.append(("conditions", conditions_frame(reports)))
        out.check_reports(reports)
        return out

    def fee_design(self) -> CommandOutput:
        spec = self.spec
        out = CommandOutput("fee-design")
        design = fee_design(spec, float(self.params.get("rho", 1.0)))
        out.sections = {"problem": spec.describe(), "fee_design": design, "mean_type": spec.dist.mean()}
        frame = pd.DataFrame({"theta": design.theta, "q": design.q, "w": design.w, "sigma": design.sigma},
                             columns=cf.FEE_COLUMNS)
        out.tables.append(("fee_design", frame))
        out.checks.append(("w*' < 1", design.w_slope_max < 1.0))
        return out
