"""
Soft gating from averaging to selection
=======================================

One exponent decides how hard the ensemble leans on its best member.
"""

import numpy as np

from csge import eta_penalty, soft_gate

# three members with training errors 1, 2 and 4
errors = [1.0, 2.0, 4.0]

# eta = 0 ignores the errors entirely; large eta hands everything to the best member
for eta in (0, 0.5, 1, 2, 4, 8, 12):
    w = soft_gate(errors, eta)
    print(f"eta={eta:>4}: " + "  ".join(f"{v:.4f}" for v in w))

# scaling every error by a common factor only moves the weights through epsilon
print(soft_gate(np.array(errors) * 1000, 2) - soft_gate(errors, 2))

# the exponent penalty is cheapest in the middle of the range
grid = np.linspace(0, 12, 1201)
a = eta_penalty(grid)
print(f"penalty at 0: {a[0]:.4f}, at 12: {a[-1]:.4f}, lowest {a.min():.4f} at eta={grid[a.argmin()]:.2f}")
