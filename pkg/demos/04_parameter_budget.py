"""Parameter totals of every model at widths 16 and 20.

All models share the recurrent architecture and differ only in the
convolution, so the gap between rows is the cost of the convolution itself.
"""

from pna.config import RunConfig
from pna.suites import parameter_table

rows = parameter_table(RunConfig())
gcn16 = next(r["params"] for r in rows if r["model"] == "gcn" and r["hidden"] == 16)
print(f"{'model':>14} {'F':>3} {'total':>7} {'conv':>6} {'vs gcn@16':>9}")
for r in rows:
    print(f"{r['model']:>14} {r['hidden']:>3} {r['params']:>7} {r['conv_params']:>6} "
          f"{100 * (r['params'] / gcn16 - 1):+8.1f}%")
