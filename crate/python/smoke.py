#!/usr/bin/env python3
"""Smoke test for the chvox_py extension module.

Imports an installed chvox_py if present, otherwise loads the cdylib
straight out of the cargo target directory (build it first with
`cargo build -p chvox-py --release`). Exercises the solver end to end on a
small closed box and on the open channel, checking the invariants the core
test suite pins down at scale: conserved mass, dissipated energy, and a
frozen-state error for all-bulk degenerate data.
"""

import importlib.util
import math
import pathlib
import sys


def load_module():
    try:
        import chvox_py

        return chvox_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parents[1]
    for profile in ("release", "debug"):
        for stem in ("libchvox_py.so", "chvox_py.so", "libchvox_py.dylib"):
            path = root / "target" / profile / stem
            if path.exists():
                spec = importlib.util.spec_from_file_location("chvox_py", path)
                module = importlib.util.module_from_spec(spec)
                spec.loader.exec_module(module)
                return module
    sys.exit("chvox_py not found; run `cargo build -p chvox-py --release` first")


def check(name, ok, detail=""):
    print(f"{'ok' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    if not ok:
        sys.exit(1)


def main():
    chvox_py = load_module()

    # Closed box: seeded phase separation, conserved mass, falling energy.
    solver = chvox_py.Solver(8, p=0, beta=0.0, peclet=1.0)
    solver.set_spinodal(-0.4, 0.05, seed=7)
    mass0 = solver.mass()
    energies = [solver.energy()[2]]
    for _ in range(25):
        report = solver.advance(2e-3)
        energies.append(solver.energy()[2])
    drift = abs(solver.mass() - mass0) / abs(mass0)
    check("mass conserved", drift < 1e-10, f"relative drift {drift:.2e}")
    check(
        "energy non-increasing",
        all(b <= a + 1e-12 for a, b in zip(energies, energies[1:])),
        f"{energies[0]:.4f} -> {energies[-1]:.4f}",
    )
    check("report keys", set(report) == {"time", "newton_iters", "krylov_iters",
                                         "residual", "stationary"})

    # Uniform data is already stationary: the state must be kept unchanged.
    solver.set_uniform(0.2)
    before = solver.element_means()
    report = solver.advance(1e-3)
    check("uniform state stationary", report["stationary"]
          and solver.element_means() == before)

    # Degenerate mobility on all-bulk order-zero data cannot evolve.
    frozen = chvox_py.Solver(4, p=0, beta=1.0)
    frozen.set_means(chvox_py.spinodal_values(64, 0.0, 1.0, seed=3))
    try:
        frozen.advance(1e-3)
        check("frozen state raises", False)
    except RuntimeError as err:
        check("frozen state raises", "frozen" in str(err))

    # Masked open channel with drift: the run helper advances and the mask
    # helper agrees with the solver's element count.
    mask = chvox_py.synthetic_channel_mask(12)
    channel = chvox_py.Solver(12, p=0, beta=0.0, peclet=50.0, open_x=True,
                              velocity=(1.0, 0.0, 0.0), mask=mask)
    check("mask size", len(mask) == 12 ** 3 and channel.n_elements == sum(mask))
    channel.set_uniform(-1.0)
    taken = channel.run(10, 2e-3)
    means = channel.element_means()
    check("channel invasion", taken == 10 and max(means) > -1.0
          and math.isfinite(channel.energy()[2]))

    # Input validation surfaces as ValueError.
    try:
        solver.set_means([0.0, 1.0])
        check("length validation", False)
    except ValueError:
        check("length validation", True)

    print("smoke test passed")


if __name__ == "__main__":
    main()
