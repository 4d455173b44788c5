"""Measured hanging-chain frequency against j01/2 for a few meshes and steps."""

import numpy as np

from hangstring import bessel
from hangstring.evolution import make_coefficients, modal_amplitude, solve_ibvp, zero_crossing_frequency
from hangstring.mesh import GridFn, make_mesh


def main():
    print(f"reference omega = j01/2 = {bessel.OMEGA1:.9f}")
    for n, dt in [(64, 4e-3), (128, 2e-3), (256, 1e-3), (512, 1e-3)]:
        mesh = make_mesh(n)
        u0 = bessel.chain_mode_gridfn(mesh)
        traj = solve_ibvp(make_coefficients(mesh), u0, GridFn(mesh, np.zeros(n)), 0.0, 10.0, dt)
        w = zero_crossing_frequency(traj.times, modal_amplitude(traj, u0.values))
        print(f"n={n:4d} dt={dt:.0e} omega={w:.9f} rel.err={abs(w - bessel.OMEGA1) / bessel.OMEGA1:.2e}")


if __name__ == "__main__":
    main()
