"""Find how far a writer must run before its write set is protected.

For each prefix length t of a solo writer T_0, a reader of X_j is run to
completion.  Its result marks the prefix 0 (old value), 1 (new value) or
bottom (abort or no progress).  T_0 protects X_j at t when t is 0 and t+1
is 1 for X_j, or either of them is bottom.  Rows marked ``<`` protect the
whole write set.
"""

from stmlab.analysis.valence import ProbeSetup, find_protecting_prefix

for variant in ("prog-raw", "prog-mcas"):
    for wset in ((0,), (0, 1), (0, 1, 2)):
        rep = find_protecting_prefix(ProbeSetup(variant, wset, rset=(3,)))
        print(f"{variant} Wset={list(wset)}: first protecting prefix t={rep.prefix} of {rep.steps} steps,"
              f" read-set readers blocked: {len(rep.rset_blocked)}")
    print(rep.render())
