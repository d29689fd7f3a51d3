"""Simulate one deterministic scenario and write VTK snapshots.

The default run uses a shortened horizon so the demo finishes in seconds;
pass --full for the complete 6016 s experiment on level 1.

Run:  python3 demos/single_scenario_flow.py [--full] [--out DIR]
"""
import argparse
import time
from pathlib import Path

from fracmlmc.discretization import SimulationOptions, Simulator
from fracmlmc.mesh import MeshHierarchy, load_coarse_mesh
from fracmlmc.params import PhysicalConstants, SamplePoint
from fracmlmc.qoi import default_point_qois, write_vtk_snapshot

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true", help="full 6016 s horizon")
ap.add_argument("--out", default="demo_out/flow")
ap.add_argument("--level", type=int, default=1)
args = ap.parse_args()

if args.full:
    pc = PhysicalConstants()
    opts = SimulationOptions()
    snap_times = (448.0, 1216.0, 2560.0, 6016.0)
else:
    pc = PhysicalConstants(total_time=1024.0)
    opts = SimulationOptions(r0=32)
    snap_times = (256.0, 1024.0)

hier = MeshHierarchy(load_coarse_mesh(
    Path(__file__).resolve().parents[1] / "src/fracmlmc/data/coarse_mesh.txt"),
    max_level=args.level)
sim = Simulator(hier, constants=pc, options=opts)

print(f"simulating level {args.level} "
      f"({hier.n_dofs(args.level)} dofs, horizon {pc.total_time:g} s) ...")
t0 = time.perf_counter()
result = sim.run(args.level, SamplePoint(xi=(0.0, 0.0, 0.0)),
                 qois=default_point_qois(), field_times=snap_times)
print(f"done in {time.perf_counter() - t0:.1f} s: "
      f"{result.cost.newton_iterations} Newton iterations, "
      f"{result.cost.krylov_iterations} Krylov iterations, "
      f"c in [{result.c_min:.2e}, {result.c_max:.4f}]")

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
mesh = hier.levels[args.level]
dm = hier.dofmaps[args.level]
for t, state in sorted(result.snapshots.items()):
    path = out / f"fields_t{int(t):05d}.vtk"
    write_vtk_snapshot(path, mesh, dm, state, title=f"t = {t:g} s")
    print(f"wrote {path}")

print("\nsalt mass fraction at the observation points:")
header = "  t [s]  " + "".join(f"{n:>9s}" for n in sorted(result.qoi_series))
print(header)
names = sorted(result.qoi_series)
times = result.qoi_series[names[0]].times
for i in range(0, len(times), max(1, len(times) // 8)):
    row = f"  {times[i]:6.0f} "
    for n in names:
        row += f" {result.qoi_series[n].values[i]:8.5f}"
    print(row)
