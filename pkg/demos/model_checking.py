"""Spotting a misspecified model with posterior predictive checks.

Latent-space data have heavy tails: some respondents sit close to a group on
the sphere and know many of its members, others know none. The ER model
assumes every respondent has the same Poisson rate, so it predicts too few
zeros and too few large counts. The check compares the observed share of
entries equal to m with the spread of that share across replicated datasets.

Run: python demos/model_checking.py
"""

import numpy as np

from ardkit.modelcheck import degree_report, ppc
from ardkit.models import RescaleSpec, make_model
from ardkit.sampler import SamplerConfig, run_chains
from ardkit.simgen import default_latent_config, simulate_latent_space


def main():
    data, truth = simulate_latent_space(default_latent_config(sample_n=200, seed=1))
    spec = RescaleSpec.from_data(data)

    fits = {}
    for kind, warmup in (("er", 1000), ("latent", 2000)):
        model = make_model(kind, data)
        post = run_chains(model, data, spec, SamplerConfig(chains=4, iterations=1000, warmup=warmup, seed=21))
        fits[kind] = (model, post)

    for kind, (model, post) in fits.items():
        rep = ppc(post, model, data, seed=0, max_draws=400)
        print(f"\n{kind}: {rep.n_contained}/{rep.contained.size} cells inside their 95% interval")
        print("  m        " + "".join(f"{m:>8d}" for m in rep.m_set))
        for k in range(3):
            obs = "".join(f"{v:8.3f}" for v in rep.observed[k])
            band = "".join(f"{'ok' if c else 'miss':>8}" for c in rep.contained[k])
            print(f"  {data.names[k]:<9}{obs}\n  {'':<9}{band}")
        deg = degree_report(post, model, truth)
        print(f"  mean degree {deg['mean_degree']:.1f} (true {deg['true_mean_degree']:.1f})")

    zero_share = np.mean(data.y == 0)
    print(f"\nobserved share of zero counts: {zero_share:.3f}")


if __name__ == "__main__":
    main()
