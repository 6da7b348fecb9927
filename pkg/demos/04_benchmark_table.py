"""A small benchmark, end to end, from Python.

The same runner sits behind `bench run`. Here we build the config in code,
run two models and four methods on COMPAS with a 20-person cohort, and
print the markdown report. Output files land in demo_bench_out/.

Run:  python3 demos/04_benchmark_table.py
"""
from cfbench import bench

config = bench.config_from_dict({
    "datasets": ["compas"],
    "models": ["linear", "mlp"],
    "methods": ["growing_spheres", "dice", "revise", "face_knn"],
    "cohort_size": 20,
    "seed": 0,
})
outcome = bench.run(config, "demo_bench_out")

# records are plain dataclasses; the report helper formats their dict form
print(bench.format_report([r.to_dict() for r in outcome.records], "md"))
print("\nmodel checksums:", {k: v["checksum"][:12] for k, v in outcome.manifest["models"].items()})
print("exit code:", outcome.exit_code)
