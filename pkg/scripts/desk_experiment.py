#!/usr/bin/env python3
"""Desk-scale analogue of the headline experiment: quantize random teacher
MLPs at several bit widths, then recover agreement with sensitivity-ordered
neuroevolution fine-tuning. Prints a float / rounded / fine-tuned table.
"""
import argparse
import time

from quantevo import (
    MutationConfig,
    finetune_model,
    make_evaluator,
    make_teacher_fixture,
    quantize_model,
    sensitivity_rank,
)


def run_one(bits: int, seed: int, args) -> tuple[float, float]:
    model, data = make_teacher_fixture(args.input_dim, args.widths, args.samples, seed=seed)
    evaluator = make_evaluator(data, "agreement")
    qmodel, schemes = quantize_model(model, bits)
    a_nn = evaluator(qmodel)
    ranking = sensitivity_rank(model, evaluator, args.sensitivity_bits)
    config = MutationConfig(
        p=args.mutation_p,
        population_size=args.population,
        iterations=args.iterations,
        seed=seed,
    )
    tuned, _ = finetune_model(qmodel, ranking, schemes, config, evaluator)
    return a_nn, evaluator(tuned)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bits", type=int, nargs="+", default=[3, 4, 5, 8])
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--input-dim", type=int, default=16)
    parser.add_argument("--widths", type=int, nargs="+", default=[64, 32, 10])
    parser.add_argument("--samples", type=int, default=2000)
    parser.add_argument("--population", type=int, default=16)
    parser.add_argument("--iterations", type=int, default=32)
    parser.add_argument("--mutation-p", type=float, default=0.02)
    parser.add_argument("--sensitivity-bits", type=int, default=4)
    args = parser.parse_args()

    print(f"teacher MLP {args.input_dim}->{'-'.join(map(str, args.widths))}, "
          f"{args.samples} samples, {args.seeds} seed(s)")
    print(f"{'bits':>4}  {'rounded':>8}  {'finetuned':>9}  {'gain':>7}  {'time':>6}")
    for bits in args.bits:
        t0 = time.perf_counter()
        rounded, tuned = [], []
        for seed in range(args.seeds):
            a_nn, a_ft = run_one(bits, seed, args)
            rounded.append(a_nn)
            tuned.append(a_ft)
        mean_nn = sum(rounded) / len(rounded)
        mean_ft = sum(tuned) / len(tuned)
        dt = time.perf_counter() - t0
        print(f"{bits:>4}  {mean_nn:>8.4f}  {mean_ft:>9.4f}  {mean_ft - mean_nn:>+7.4f}  {dt:>5.1f}s")


if __name__ == "__main__":
    main()
