"""One seeded 21-step run: every method, the error table and the artifacts.

    python3 demos/pipeline.py [seed] [output-dir]
"""

import sys

from vtslam.harness import RunConfig, report_text, run_pipeline, surface_text, write_artifacts

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out = sys.argv[2] if len(sys.argv) > 2 else f"demo_run_{seed}"

result = run_pipeline(RunConfig(seed=seed))
print(report_text(result.report), end="")
print()
print(surface_text(result.surface_error), end="")
print()
print(f"{len(result.matches)} loop closures confirmed")
print(f"artifacts written to {write_artifacts(result, out)}")
