"""A small convergence-rate study (coarser than the acceptance sweep).

Laminate with contrast 5 on the unit square, Dirichlet on the left and
bottom edges: the remainder w = u_eps - u_0 - eps chi(x/eps) S_eps(grad u_0~)
is measured in L2, H1, distance-weighted, and interior norms as epsilon
halves, and the observed slopes are fitted against the predicted rates
1, 1/2, 1, 1 respectively.

Writes rates.csv / summary.json / rates.svg into demo_output/.
"""

from perihom.harness import ExperimentConfig, emit_report, run_rate_study

config = ExperimentConfig(
    coefficient="laminate",
    coefficient_params={"contrast": 5.0},
    dirichlet=("left", "bottom"),
    epsilons=(1 / 8, 1 / 16, 1 / 32),
    cell_n=64,
    mesh_factor=8,
    interior_margin=0.25,
)

result = run_rate_study(config)

print("cell identities:", "all pass" if result.identity_report.all_passed
      else "VIOLATIONS")
print(f"{'channel':16s} {'slope':>7s} {'r2':>8s}  window        verdict")
for channel, fit in result.fits.items():
    lo, hi = config.rate_windows[channel]
    status = "pass" if result.window_pass[channel] else "FAIL"
    print(f"{channel:16s} {fit.slope:+7.3f} {fit.r_squared:8.4f}  "
          f"[{lo:.2f}, {hi:.2f}]  {status}")

if config.mesh_factor >= 16:
    print("\nRichardson certificates (fraction of each measured error):")
    for eps in sorted(result.certificates, reverse=True):
        fracs = {ch: result.certificates[eps][ch] / getattr(rep, ch)
                 for rep in result.reports if rep.epsilon == eps
                 for ch in result.certificates[eps]}
        print(f"  eps = {eps}: "
              + ", ".join(f"{ch} {f:.3f}" for ch, f in fracs.items()))
else:
    print("\n(certificates need mesh_factor >= 16 so the coarse half of the "
          "pair still resolves eps; this demo runs at 8 for speed)")

paths = emit_report(result, "demo_output")
print("\nwrote:", ", ".join(paths.values()))
