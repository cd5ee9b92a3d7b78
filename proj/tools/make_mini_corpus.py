#!/usr/bin/env python3
"""Regenerates data/mini/train.tsv, the small ACOS-format corpus used by the tests.

Each sentence repeats its category keyword ("food" / "service") so the CBoW
features carry a strong, known category signal; opinion words come from the
default sentiment lexicon and therefore never enter the CBoW vocabulary.
"""
import random
import sys

POLARITY = {"NEG": 0, "NEU": 1, "POS": 2}
OPINIONS = {
    ("FOOD", "QUALITY"): [("delicious", "POS"), ("tasty", "POS"), ("bland", "NEG"), ("bad", "NEG")],
    ("FOOD", "PRICES"): [("overpriced", "NEG"), ("cheap", "POS"), ("expensive", "NEG")],
    ("SERVICE", "GENERAL"): [("friendly", "POS"), ("rude", "NEG"), ("nice", "POS"), ("horrible", "NEG")],
    ("SERVICE", "QUALITY"): [("slow", "NEG"), ("fast", "POS"), ("excellent", "POS"), ("poor", "NEG")],
}
ASPECTS = {"FOOD": ["pizza", "sushi", "fried rice"], "SERVICE": ["waiter", "staff", "waitress"]}
KEYWORD = {"FOOD": "food", "SERVICE": "service"}


def span(tokens, words):
    if words is None:
        return "-1,-1"
    w = words.split()
    for i in range(len(tokens) - len(w) + 1):
        if tokens[i : i + len(w)] == w:
            return f"{i},{i + len(w)}"
    raise ValueError(f"{words!r} not in {tokens!r}")


def quad(tokens, aspect, cat, pol, opinion):
    return f"{span(tokens, aspect)} {cat[0]}#{cat[1]} {POLARITY[pol]} {span(tokens, opinion)}"


def main(out_path):
    rng = random.Random(7)
    cats = list(OPINIONS)
    lines = []
    for i in range(50):
        kind = i % 5
        cat = cats[i % 4]
        asp = rng.choice(ASPECTS[cat[0]])
        op, pol = rng.choice(OPINIONS[cat])
        k = KEYWORD[cat[0]]
        if kind in (0, 1):  # explicit aspect, explicit opinion
            toks = f"the {asp} was {op} and the {k} {k} was {k} {k} {k}".split()
            quads = [quad(toks, asp, cat, pol, op)]
        elif kind == 2:  # implicit aspect
            toks = f"{op} {k} , the {k} {k} was {op} {k} {k}".split()
            quads = [quad(toks, None, cat, pol, op)]
        elif kind == 3:  # implicit opinion
            toks = f"we had the {asp} with the {k} {k} {k} {k}".split()
            quads = [quad(toks, asp, cat, "NEU", None)]
        else:  # two quadruples, same category
            cat2 = next(c for c in cats if c[0] == cat[0] and c != cat)
            asp2 = rng.choice([a for a in ASPECTS[cat[0]] if a != asp])
            op2, pol2 = rng.choice(OPINIONS[cat2])
            toks = f"the {asp} was {op} but the {asp2} was {op2} , {k} {k} {k} {k}".split()
            quads = [quad(toks, asp, cat, pol, op), quad(toks, asp2, cat2, pol2, op2)]
        lines.append(" ".join(toks) + "\t" + "\t".join(quads))
    lines.append("we will be back for the food food food food\t-1,-1 FOOD#QUALITY 2 -1,-1")
    lines.append("we will not be back because of the service service service service\t-1,-1 SERVICE#GENERAL 0 -1,-1")
    with open(out_path, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/mini/train.tsv")
