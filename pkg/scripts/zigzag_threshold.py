"""Print the linear-to-zigzag anisotropy threshold for a range of chain lengths."""
import argparse

from ringqc.crystal import critical_anisotropy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=20)
    args = ap.parse_args()
    print("n_ions,alpha_c")
    for n in range(3, args.n_max + 1):
        print(f"{n},{critical_anisotropy(n):.8f}")


if __name__ == "__main__":
    main()
