"""Dual certificate and case classification at three rate targets.

For a low, a moderate and a high rate target this solves the relaxation,
rebuilds the certificate matrix from the LMI multiplier and shows the
quantities that decide the case: the rate multiplier, the top eigenvalues of
the certificate, and how much power ends up in the sensing beam.
"""
import numpy as np

from isac_pcrb.beamopt import classify_case, recover_certificate, solve_beamforming, solve_relaxation
from isac_pcrb.config import default_config


def main() -> None:
    sc = default_config().scenario
    mat = sc.matrices()
    cap = sc.mrt_capacity
    for target in (0.5, 0.65 * cap, 0.99 * cap):
        inst = sc.instance(target, mat)
        sol = solve_relaxation(inst, tol=sc.tol)
        cert = recover_certificate(sol, mat, sc.tol)
        beams = solve_beamforming(inst, sc.tol)
        print(f"rate target {target:.3f} bps/Hz")
        print(f"  relaxed objective     {sol.t:.10g}")
        print(f"  mu_rate * |h|^2 / d1  {sol.mu_rate * np.linalg.norm(inst.channel) ** 2 / cert.d1:.3e}")
        print(f"  mu_power / d1         {sol.mu_power / cert.d1:.8f}")
        print(f"  top eigenvalues / d1  {np.round(cert.eigenvalues[:3] / cert.d1, 6)}")
        print(f"  case                  {classify_case(sol, cert, inst, sc.tol)}")
        share = beams.sensing_power / beams.total_power
        print(f"  sensing beams         {len(beams.S)} carrying {100 * share:.2f}% of the power")
        print(f"  purified PCRB         {beams.pcrb:.6e} (loss {beams.notes['tightness_loss']:.1e})")
        print(f"  achieved rate         {beams.rate:.6f} bps/Hz\n")


if __name__ == "__main__":
    main()
