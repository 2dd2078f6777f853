"""
Continuous EKF and EMSIF on a Van der Pol oscillator
====================================================

Simulates one noisy trajectory and runs both non-spiking filters over it,
first with the nominal noise model and then with a filter that believes the
process noise is ten times smaller than it really is.
"""

import numpy as np

from snnfilter import GainRule, NoiseSpec, VanDerPol, run_filter, simulate_truth

model = VanDerPol(mu=0.005)
noise = NoiseSpec(Q=np.eye(2) / 100, R=np.array([[0.1]]))
traj = simulate_truth(model, x0=[2.0, 2.0], noise=noise, dt=0.01, T=20.0, seed=1)
print(f"{traj.steps} steps, final true state {traj.states[-1]}")

# Both filters start from the origin with a small initial covariance.
x_hat0 = np.zeros(2)
P0 = np.diag([0.01, 0.01])
last_10s = traj.times >= 10.0


def window_rmse(est):
    err = traj.states - est
    return np.sqrt(np.mean(err[last_10s] ** 2, axis=0))


for label, assumed in [("nominal", noise), ("Q assumed 10x too small", noise.scaled(alpha_q=0.1))]:
    print(f"\n{label}")
    for name, rule in [("EKF", GainRule("kalman")), ("EMSIF", GainRule("msif", delta=0.05))]:
        est, cov = run_filter(model, traj, rule, assumed, x_hat0, P0)
        print(f"  {name:6s} RMSE over last 10 s: {window_rmse(est)}")

# The EMSIF gain is the pseudo-inverse of C scaled by a saturated innovation
# covariance.  Once diag(C P C^T + R) exceeds delta the gain stops growing,
# so the filter keeps correcting even when P has collapsed.
