"""Where do the critics actually converge?  Exactly where the math says.

Freeze the policy and let only the critics learn.  The on-policy critic's
temporal-difference updates converge to the minimizer of the projected
Bellman error of the averaged reward — computable in closed form from the
transition kernel.  The off-policy critic converges to the least-squares
regression of the averaged reward onto its features under the Gaussian
behavior distribution — computable by quadrature.  This script runs both
simulations and prints simulated vs predicted weights side by side.

Run:  python3 demos/critic_fixed_points.py    (~20 s)
"""

import numpy as np

from netdac import oracle
from netdac.approx import CompatibleRFeatures, FourierFeatures
from netdac.dac import Schedule, alg1_step, alg2_step, init_train_state
from netdac.env import make_bandit, make_finite_mdp
from netdac.network import GraphProcess, complete_graph, path_graph
from netdac.policy import GaussianNoise, affine_policy, constant_policy


def onpolicy_case(steps=200_000):
    mdp = make_finite_mdp(5, 3, seed=11)
    policy = affine_policy(5, mdp.action_dims)
    policy.set_theta_flat(
        np.random.default_rng(0).uniform(-0.8, 0.8, policy.total_param_dim)
    )
    features = FourierFeatures(5, mdp.action_dims, dim=3, seed=5)
    predicted = oracle.mspbe_fixed_point(mdp, policy, features).omega
    gain = oracle.exact_eval(mdp, policy).gain

    process = GraphProcess(path_graph(3))
    schedule = Schedule("polynomial", critic=0.5, actor=0.0,
                        critic_pow=0.6, actor_pow=0.9)
    state = init_train_state(mdp, policy, features, seed=0, algorithm="alg1")
    for _ in range(steps):
        alg1_step(state, mdp, features, process, schedule, update_actor=False)

    print("[on-policy] 5-state MDP, 3 agents on a path graph, "
          f"{steps:,} steps, decaying step size")
    print(f"    predicted omega : {np.round(predicted, 4)}")
    print(f"    simulated mean  : {np.round(state.critic.mean(axis=0), 4)}")
    spread = max(
        np.linalg.norm(state.critic[i] - state.critic[j])
        for i in range(3) for j in range(i + 1, 3)
    )
    print(f"    agent spread    : {spread:.2e}   (consensus)")
    # Each tracker follows its agent's own local reward; their mean is the
    # team's average reward.
    print(f"    local trackers  : {np.round(state.jhat, 4)}  "
          f"(mean {state.jhat.mean():+.4f}, true {gain:+.4f})")


def offpolicy_case(steps=100_000, sigma=0.3):
    env = make_bandit(3, 1, seed=9)
    theta = [np.array([0.5]), np.array([-0.5]), np.array([1.0])]
    policy = constant_policy(env.action_dims, theta)
    features = CompatibleRFeatures(policy, bias=True)
    predicted = oracle.offpolicy_fixed_point(
        env, policy, sigma=sigma, features=features
    ).lam

    behavior = GaussianNoise(sigma)
    process = GraphProcess(complete_graph(3))
    schedule = Schedule("polynomial", critic=0.5, actor=0.0,
                        critic_pow=0.6, actor_pow=0.9)
    state = init_train_state(env, policy, features, seed=0,
                             algorithm="alg2", exploration=behavior)
    for _ in range(steps):
        alg2_step(state, env, features, process, schedule,
                  behavior=behavior, update_actor=False)

    print(f"\n[off-policy] bandit, Gaussian behavior sigma={sigma}, "
          f"{steps:,} steps")
    print(f"    predicted lambda: {np.round(predicted, 4)}")
    for i in range(3):
        print(f"    agent {i} learned : {np.round(state.critic[i], 4)}")


def main() -> None:
    print(__doc__)
    onpolicy_case()
    offpolicy_case()
    print("\nBoth critics land on the closed-form solutions — with per-agent")
    print("data and consensus only, no agent ever assembling the full model.")


if __name__ == "__main__":
    main()
