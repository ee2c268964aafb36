"""Eight threads, 2000 transactions per variant, on the native backend.

Opacity is checked on sampled windows of five transactions; the other
checkers and the pattern budgets run on the whole trace.
"""

from stmlab.harness import run_stress
from stmlab.stm import VARIANTS

for variant in VARIANTS:
    res = run_stress(variant, threads=8, m=16, total=2000, seed=1, windows=50)
    print(f"{variant}: {res.committed}/{res.transactions} committed in {res.seconds:.1f}s, pass={res.passed}")
    for check, v in res.verdicts.items():
        if not v.passed:
            print(f"  {check}: {v.reason}")
