"""Generate a small labelled dataset and fit the RoCoF/nadir predictor.

Each sample is a perturbed, rebalanced dispatch at a random load level; its
labels come from the full-order simulation of the contingency trip.  The run
is kept small (400 samples) so it finishes in well under a minute; the CLI
defaults use 2000.
"""
import sys
import tempfile
from pathlib import Path

from freq_opf_lab.harness import StudyConfig, cmd_gen_dataset, cmd_train
from freq_opf_lab.neural import ScenarioDataset

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="fol-demo-"))
cfg = StudyConfig(samples=400, seed=7)

ds_path = cmd_gen_dataset(cfg, out)
ds = ScenarioDataset.read_csv(ds_path)
print(f"{len(ds)} samples, {len(ds.feature_names)} features: {', '.join(ds.feature_names[:4])}, ...")
print(f"RoCoF label range {ds.Y[:, 0].min():.3f} .. {ds.Y[:, 0].max():.3f} Hz/s")
print(f"nadir label range {ds.Y[:, 1].min():.3f} .. {ds.Y[:, 1].max():.3f} Hz")

rep = cmd_train(cfg, out, ds_path)
print(f"test MAE  RoCoF {rep.test_mae[0]:.2e} Hz/s, nadir {rep.test_mae[1]:.2e} Hz")
print(f"test R2   RoCoF {rep.test_r2[0]:.5f}, nadir {rep.test_r2[1]:.5f}")
print(f"model and loss/scatter figures written to {out}")
