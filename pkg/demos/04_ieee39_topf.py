"""Load the 39-bus case, solve the plain dispatch and look at the trip.

No frequency constraint is applied here; the point is to show that the
larger case parses, dispatches within its line limits, and that the loss of
its contingency unit produces a sensible frequency response.
"""
from freq_opf_lab.analytic import aggregate_low_order
from freq_opf_lab.grid import load_case
from freq_opf_lab.opf import build_topf, check_dispatch, solve_variant, verify_dispatch

case = load_case("ieee39")
print(f"{case.name}: {len(case.buses)} buses, {len(case.lines)} lines, "
      f"{len(case.generators)} units, load {case.total_load:.0f} MW")

sol = solve_variant(build_topf(case))
print(f"T-OPF {sol.status}, cost {sol.cost:.2f} $/h, {sol.iterations} simplex iterations")
print("violations:", check_dispatch(case, sol) or "none")

busiest = sorted(case.lines, key=lambda ln: -abs(sol.flows[ln.id]) / ln.thermal_limit)[:5]
for ln in busiest:
    print(f"  line {ln.id:<8} {sol.flows[ln.id]:8.1f} MW of {ln.thermal_limit:.0f}")

lo = aggregate_low_order(case)
print(f"low-order aggregate: xi {lo.xi:.4f}, omega_n {lo.omega_n:.4f} rad/s")
ver = verify_dispatch(case, sol, duration=60.0)  # the big machine settles slowly
print(f"trip of {case.contingency_unit} ({sol.dispatch[case.contingency_unit]:.0f} MW): "
      f"RoCoF {ver.metrics.rocof_worst:.4f} Hz/s, nadir {ver.metrics.fn:.4f} Hz")
