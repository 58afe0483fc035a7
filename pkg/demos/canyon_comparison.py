"""
Head-to-head on the two-exponential canyon
==========================================

The sum of two decaying exponentials, fitted in log rates, has a long
curved valley. Here the plain and accelerated methods race from each
listed start, under both damping policies.
"""

from geolm.cli import compare_rows, format_compare

rows = compare_rows(tag="canyon")
print(format_compare(rows, "csv"))

###############################################################################
# Jacobian evaluations are the expensive unit on real problems, so compare
# them directly.

for r in rows:
    if r["problem"] == "exp2" and r["variant"] == "LM+GA":
        base = next(x for x in rows if x["problem"] == "exp2" and x["start"] == r["start"]
                    and x["policy"] == r["policy"] and x["variant"] == "LM")
        print(f"start {r['start']} ({r['policy']}): J evals LM {base['j_evals']} "
              f"vs LM+GA {r['j_evals']}")

###############################################################################
# The comparison is sensitive to the initial radius: a more cautious start
# avoids the early rejected corrections.

from dataclasses import replace

from geolm import TrustRegionConfig

cautious = replace(TrustRegionConfig(), delta0=0.1)
for r in compare_rows(tag="canyon", base=cautious):
    if r["problem"] == "exp2" and r["policy"] == "delta":
        print(f"delta0=0.1 start {r['start']} {r['variant']:5s}: J evals {r['j_evals']}")
