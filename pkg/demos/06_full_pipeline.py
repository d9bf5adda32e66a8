"""Full pipeline walkthrough
=============================

Materializes the bundled synthetic fixture (corpus + registry + config) and
runs every stage end to end with the offline mock providers, twice, to show
that reruns resume from cached outputs and reports are byte-reproducible.
"""

import json
import tempfile
from pathlib import Path

from rigourkit.pipeline import PipelineConfig, run_pipeline
from rigourkit.synthetic import write_pipeline_fixture

workdir = Path(tempfile.mkdtemp(prefix="rigourkit-demo-"))
paths = write_pipeline_fixture(workdir / "fixture")
print("fixture inputs:")
for name, path in paths.items():
    print(f"  {name}: {path}")

config = PipelineConfig.from_file(paths["config"])
manifest = run_pipeline(config)
print("\nstages:")
for record in manifest.stages:
    print(f"  {record.name:10s} {record.status}")

best = json.loads((config.run_dir / "best_set.json").read_text())
print(f"\nmost salient criteria set: {best['criteria']}")
print(f"tau={best['tau']:.4f}, p={best['p_value']:.2e}")
print(f"class means: 4*={best['summary']['mean_four_star']:.4f} "
      f"non-4*={best['summary']['mean_non_four_star']:.4f}")

print("\nreport files:")
for path in sorted((config.run_dir / "report").iterdir()):
    print(f"  {path.name}")

rerun = run_pipeline(config)
print("\nrerun statuses:", {r.name: r.status for r in rerun.stages})
