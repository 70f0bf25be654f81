"""Smoke test for the adviser_ddpg_py extension module.

Build and install first, e.g.

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/adviser_ddpg_py-*.whl
"""

import math
import sys

import adviser_ddpg_py as m


def check(cond, msg):
    if not cond:
        print(f"FAIL: {msg}")
        sys.exit(1)
    print(f"ok   {msg}")


def main():
    # mixing arithmetic
    check(m.mix_probability(-3.2, -3.2, 1.0, 0.7) == 0.5, "epsilon is 0.5 when scores tie")
    check(abs(m.mix_probability(1.0, 0.0, 1.0, 1.0) - 0.26894) < 1e-5, "epsilon for a better-scored adviser")
    check(abs(m.confidence(100, 0.01) - 0.63212) < 1e-5, "confidence after 100 episodes")

    # network gradient against a central difference
    net = m.DenseNetwork([3, 5, 2], seed=4, low=[-2.0, -1.0], high=[2.0, 1.0])
    x, g = [0.1, -0.4, 0.7], [1.0, -0.5]
    _, grad_x = net.backward(x, g)
    h = 1e-5
    for i in range(3):
        xp, xm = list(x), list(x)
        xp[i] += h
        xm[i] -= h
        fp = sum(a * b for a, b in zip(net.forward(xp), g))
        fm = sum(a * b for a, b in zip(net.forward(xm), g))
        check(abs((fp - fm) / (2 * h) - grad_x[i]) < 1e-7, f"input gradient {i}")
    clone = m.DenseNetwork.from_snapshot(net.to_snapshot())
    check(clone.params() == net.params(), "snapshot round trip")

    # environment
    env = m.Environment("pendulum")
    obs = env.reset(0)
    check(abs(obs[0] ** 2 + obs[1] ** 2 - 1) < 1e-12, "pendulum observation on unit circle")
    _, reward, done, truncated = env.step([0.0])
    check(reward <= 0 and not done and not truncated, "pendulum step")

    # advisers
    check(m.adviser_action("mountaincar_bangbang", [-0.5, -0.01]) == [-1.0], "bang-bang adviser")
    check(abs(m.adviser_action("pendulum_energy", [math.cos(0.1), math.sin(0.1), 0.0])[0] + 1.6) < 1e-12,
          "pendulum adviser catch")

    # OU noise
    noise = m.OuNoise(1, seed=3, sigma=0.0)
    check(noise.sample() == [0.0], "noise without volatility stays at its mean")

    # convergence check
    actions, values, _ = m.iterate_quadratic(1.0, [2.0], [0.0], 0.5, 1)
    check(actions[1] == [2.0] and values[1] == 0.0, "half step lands on the maximum")
    check(all(case["passed"] for case in m.verify_convergence()), "convergence suite")

    # short training run
    out = m.train("pendulum", "adapted_adviser", seed=1, episodes=2, eval_episodes=1, hidden=[16, 16])
    check(len(out["records"]) == 2 and out["records"][0]["steps"] == 200, "training records")
    agent = out["agent"]
    check(abs(out["avg_total_score"] - agent.evaluate("pendulum", 1, 1)) < 1e-9, "evaluation is reproducible")
    check(-2.0 <= agent.act(obs)[0] <= 2.0, "actor respects torque bounds")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
