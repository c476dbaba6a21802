"""Fixed-kernel UCB on functions drawn from the model's own prior.

With the lengthscale and noise level known, the fraction of observations
inside the +-sqrt(beta) predictive band should sit near the nominal Gaussian
level, and cumulative regret should stay under the information-gain envelope.

    python3 scripts/coverage_sanity.py [--seeds 20] [--rounds 100]
"""

import argparse
import math

import numpy as np

from oscbo.gp import NOISE_VAR
from oscbo.harness import RunConfig, run_single
from oscbo.losses import cor1_bound
from oscbo.optim import normal_cdf


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--rounds", type=int, default=100)
    ap.add_argument("--beta", type=float, default=2.0)
    args = ap.parse_args()

    nominal = 2 * normal_cdf(math.sqrt(args.beta)) - 1
    cover, inside = [], 0
    for s in range(args.seeds):
        recs = run_single(RunConfig(task="gp-sample", method="fixed", seed=s, rounds=args.rounds,
                                    beta=args.beta, noise_std=math.sqrt(NOISE_VAR),
                                    standardize=False))
        p_hat = np.mean([r.covered for r in recs])
        bound = cor1_bound([r.beta for r in recs], [r.latent_var for r in recs], NOISE_VAR)
        inside += recs[-1].cum_regret <= bound
        cover.append(p_hat)
        print(f"seed {s:2d}  p_hat {p_hat:.2f}  regret {recs[-1].cum_regret:7.3f}  envelope {bound:7.3f}")
    print(f"mean p_hat {np.mean(cover):.3f} (nominal {nominal:.3f}); "
          f"{inside}/{args.seeds} runs inside the envelope")


if __name__ == "__main__":
    main()
