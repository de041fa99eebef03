"""Dispatch the peak hour three ways and check each plan by simulation.

T-OPF ignores frequency.  L-FCOPF caps the contingency unit using the
low-order bounds.  DNN-FCOPF embeds the trained predictor as mixed-integer
constraints.  Every plan is then checked by tripping the contingency unit
in the full-order model.

    python demos/03_three_dispatches.py [model.json]

Without an argument a small model is trained first, as in demo 02.  A
400-sample model can miss the RoCoF limit by about a percent in simulation;
the 2000-sample default model from the CLI holds it.
"""
import sys
import tempfile
from pathlib import Path

from freq_opf_lab.grid import load_case, scale_loads
from freq_opf_lab.harness import MODEL_FILE, StudyConfig, cmd_gen_dataset, cmd_train
from freq_opf_lab.neural import TrainedModel
from freq_opf_lab.opf import (build_dnnfcopf, build_lfcopf, build_topf, solve_variant,
                              verify_dispatch)

R_LMT, F_LMT = -0.5, 59.5

if len(sys.argv) > 1:
    model_path = Path(sys.argv[1])
else:
    out = Path(tempfile.mkdtemp(prefix="fol-demo-"))
    cfg = StudyConfig(samples=400, seed=7)
    cmd_train(cfg, out, cmd_gen_dataset(cfg, out))
    model_path = out / MODEL_FILE
model = TrainedModel.load(model_path)

case = scale_loads(load_case("ieee9"), 1.2)
print(f"load {case.total_load:.0f} MW, limits RoCoF >= {R_LMT} Hz/s, nadir >= {F_LMT} Hz\n")

forms = [build_topf(case), build_lfcopf(case, R_LMT, F_LMT), build_dnnfcopf(case, model, R_LMT, F_LMT)]
print(f"{'variant':<10} {'cost $/h':>9} {'G11 MW':>7} {'pred RoCoF':>10} {'pred FN':>8} "
      f"{'sim RoCoF':>9} {'sim FN':>8} {'nodes':>5}")
for form in forms:
    sol = solve_variant(form)
    ver = verify_dispatch(case, sol)
    pr = "-" if sol.pred_rocof is None else f"{sol.pred_rocof:.4f}"
    pf = "-" if sol.pred_fn is None else f"{sol.pred_fn:.4f}"
    print(f"{sol.variant:<10} {sol.cost:9.2f} {sol.dispatch['G11']:7.2f} {pr:>10} {pf:>8} "
          f"{ver.metrics.rocof_worst:9.4f} {ver.metrics.fn:8.4f} {sol.nodes:5d}")
