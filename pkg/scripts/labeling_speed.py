"""Engine-labeling time on the mini-corpus and on synthetic programs of growing size.

    python3 scripts/labeling_speed.py [--sizes 10 100 1000]
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from conflog.catalog import ConfigParameter, ParameterCatalog, ValueType, load_catalog
from conflog.engines import label_engines
from conflog.frontend import parse_source, parse_texts

ROOT = Path(__file__).resolve().parent.parent


def synthetic(n_classes: int) -> tuple[dict[str, str], ParameterCatalog]:
    """One both-holder, a chain of key-holders and ``n_classes`` plain users."""
    keys = [f"synthetic.key.{i}" for i in range(max(1, n_classes // 10))]
    holder = ["class Keys0 {"] + [f'    static String K{i} = "{k}";' for i, k in enumerate(keys)] + ["}"]
    chain = [f"class Keys{i} extends Keys{i - 1} {{\n    static String X{i} = \"x.{i}\";\n}}" for i in range(1, 5)]
    conf = """class Conf {
    Properties props;
    public String get(String name) {
        return this.props.get(name);
    }
}"""
    users = [
        f"class User{i} {{\n    int v;\n    public int f(Conf c) {{\n        String s = c.get(Keys0.K{i % len(keys)});\n        return 1;\n    }}\n}}"
        for i in range(n_classes)
    ]
    text = "\n".join(holder + chain + [conf] + users) + "\n"
    catalog = ParameterCatalog(tuple(ConfigParameter(k, ValueType.STRING) for k in keys))
    return {"Synthetic.mj": text}, catalog


def timed(units, catalog, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        label_engines(units, catalog)
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="*", default=[10, 100, 1000])
    args = ap.parse_args(argv)
    units = parse_source(ROOT / "fixtures" / "minicorpus")
    catalog = load_catalog(ROOT / "fixtures" / "params.xml")
    print(f"mini-corpus: {timed(units, catalog) * 1000:.2f} ms")
    for n in args.sizes:
        sources, cat = synthetic(n)
        print(f"synthetic {n:>5} classes: {timed(parse_texts(sources), cat, 3) * 1000:.2f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
