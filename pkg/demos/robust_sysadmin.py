"""
Planning against uncertain machine failures
===========================================

A ring of three machines. Each machine's next state depends on itself and
its left neighbour. We widen every marginal by a box of half-width epsilon
and ask how much reward can still be promised over five steps.
"""

from rfmdp import decode_state, mini_sysadmin, perturb_to_rfmdp, solve_rfmdp, value_iteration_nominal

model = mini_sysadmin()
print(f"{model.n_states} states, actions {model.actions}")

nominal, _ = value_iteration_nominal(model)
print(f"nominal value from all machines up: {nominal[model.initial_state]:.4f}")

###############################################################################
# Three backends bound the same worst case. Vertex search is exact,
# McCormick solves one linear program per backup, and the entrywise box is
# the cheapest and loosest.

for eps in (0.01, 0.025, 0.1):
    rf = perturb_to_rfmdp(model, eps)
    row = [solve_rfmdp(rf, b).initial_value for b in ("vertex", "mccormick", "interval-arithmetic")]
    print(f"eps={eps:<6} vertex {row[0]:.4f}  mccormick {row[1]:.4f}  entrywise {row[2]:.4f}")

###############################################################################
# The robust policy is indexed by steps to go. With five steps left it
# always repairs some machine that is down.

sol = solve_rfmdp(perturb_to_rfmdp(model, 0.1), "mccormick")
for s in range(model.n_states):
    running = decode_state(model.domain_sizes, s)
    print(running, "->", model.actions[sol.policy[0, s]])
