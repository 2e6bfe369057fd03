"""Compare every hand-written adjoint against central finite differences.

Builds small random scenes with perturbed networks and reports, per parameter
group, the worst relative error and how many entries straddled a kink.

    python demos/gradient_check.py --scenes 3
"""

import argparse

from aquasplat.gradcheck import run_gradcheck


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scenes", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    report = run_gradcheck(seed=args.seed, n_scenes=args.scenes)
    for line in report.lines():
        print(line)
    print(f"{'PASS' if report.passed else 'FAIL'} in {report.seconds:.1f}s")


if __name__ == "__main__":
    main()
