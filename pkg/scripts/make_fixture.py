"""Write the small synthetic dataset used by the tests, optionally corrupted.

    python scripts/make_fixture.py out/fixture
    python scripts/make_fixture.py out/broken --corrupt out-of-range
"""
import argparse
import sys

from contoursim.synthetic import CORRUPTIONS, inject_corruption, make_fixture_dataset


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", help="directory to create")
    ap.add_argument("--corrupt", choices=CORRUPTIONS, action="append", default=[],
                    help="damage the dataset afterwards (repeatable)")
    args = ap.parse_args(argv)
    root = make_fixture_dataset(args.root)
    for kind in args.corrupt:
        inject_corruption(root, kind)
    print(root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
