"""Two transactions race to write the same object.

Under prog-raw both trylock acquisitions can fail, so both transactions
abort; that is allowed by progressiveness since they conflict.  The
bakery-based strong-prog variant commits at least one of them.
"""

from stmlab.analysis.progress import check_progressiveness, check_strong_progressiveness
from stmlab.harness import contention_race

for variant in ("prog-raw", "strong-prog"):
    h = contention_race(variant).history
    txs = h.transactions()
    outcome = {k: ("committed" if t.committed else "aborted") for k, t in sorted(txs.items())}
    print(f"{variant}: {outcome}")
    print(f"  progressive: {check_progressiveness(h).passed}")
    print(f"  strongly progressive: {check_strong_progressiveness(h).passed}")
