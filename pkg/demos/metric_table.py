"""
From confusion counts to peril, degradation and ineptitude
==========================================================

Reports often list counts as correct/incorrect accept/reject. A "correct
reject" is a bad prediction that was thrown away, so the columns map onto
(accepted good, rejected bad, accepted bad, rejected good).
"""
from laddr import ConfusionCounts, degradation, ineptitude, peril

rows = {
    "in distribution": (13825, 4084, 635, 931),
    "shifted": (6865, 3487, 400, 3783),
}

print(f"{'':18s}{'peril':>8s}{'degr.':>8s}{'inept.':>8s}")
for name, row in rows.items():
    c = ConfusionCounts.from_table_row(*row)
    print(f"{name:18s}" + "".join(f"{100 * f(c):7.1f}%" for f in (peril, degradation, ineptitude)))

# with nothing accepted, peril has no denominator and stays undefined
print("peril with every prediction rejected:", peril(ConfusionCounts(rejected_correct=5, rejected_incorrect=3)))
