"""Analytic expectations vs Monte Carlo measurements of pair overlap.

The naive strategy (both views uniform over one shared crop) has expected
pair overlap s1 * s2. The selective strategy's idealized continuous-overlap
model predicts s1 * s2 / (gamma + 2); the simulation measures what the
actual crop geometry and without-replacement draws deliver.

Run: python demos/asymmetry_analysis.py    (about a minute)
"""

import asympatch as ap

s = 0.25
print("normalization of the selective density (must equal s1):")
for gamma in (0.0, 1.0, 3.0):
    val = ap.pdf_normalization(gamma, s)
    print(f"  gamma={gamma}: integral = {val:.8f}")

print("\nnaive, identical crops (target s1*s2 = 0.0625):")
rep = ap.monte_carlo_overlap("naive", s, s, 0.0, "identical", 32, 20_000, seed=0)
print(f"  estimate {rep.estimate:.5f} +- {rep.std_error:.5f}")

print("\nselective under random crops, grid 32x32:")
rows = []
for gamma in (0.0, 1.0, 3.0):
    rep = ap.monte_carlo_overlap("selective", s, s, gamma, "random", 32,
                                 20_000, seed=1)
    ideal = ap.expected_overlap_selective(s, s, gamma)
    mf = ap.mechanism_expectation(s, s, gamma, "random", 32, 20_000, seed=2)
    rows.append((gamma, ideal, rep.estimate, rep.std_error, mf))
    print(f"  gamma={gamma}: idealized {ideal:.5f}  measured "
          f"{rep.estimate:.5f} +- {rep.std_error:.5f}  "
          f"(integration route {mf:.5f})")

print("\nThe idealized model treats the overlap ratio as uniform on [0, 1];")
print("the realized crop geometry concentrates it lower, so measured values")
print("sit below the closed form while preserving the avoidance ordering.")
