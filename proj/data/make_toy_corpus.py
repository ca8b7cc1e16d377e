#!/usr/bin/env python3
# Regenerates the bundled toy corpora and lexicon. Output is deterministic.
#
#   python3 data/make_toy_corpus.py [outdir]

import random
import sys
from pathlib import Path

POSITIVE = ["good", "great", "happy", "lovely", "wonderful", "nice", "pleasant", "fun", "kind", "best"]
NEGATIVE = ["bad", "awful", "terrible", "sad", "boring", "ugly", "poor", "rude", "worst", "dull"]
SUBJECTS = ["movie", "food", "service", "weather", "story", "music", "room", "staff", "trip", "game"]
PEOPLE = ["i", "we", "my friend", "my sister", "the kids"]
INTENS = ["very", "really", "quite", "so", "rather"]
FILLER = ["today", "again", "overall", "at first", "in the end"]


def sentence(rng: random.Random) -> str:
    subj = rng.choice(SUBJECTS)
    pos = rng.choice(POSITIVE)
    neg = rng.choice(NEGATIVE)
    form = rng.randrange(6)
    if form == 0:
        words = f"the {subj} was {rng.choice(INTENS)} {pos} but the {rng.choice(SUBJECTS)} felt {rng.choice(INTENS)} {neg} and {rng.choice(NEGATIVE)}"
    elif form == 1:
        words = f"{rng.choice(PEOPLE)} thought the {subj} was {pos} {rng.choice(FILLER)} but it turned {neg} and {rng.choice(NEGATIVE)}"
    elif form == 2:
        words = f"the {subj} is {rng.choice(INTENS)} {neg} and the {rng.choice(SUBJECTS)} was {rng.choice(NEGATIVE)} {rng.choice(FILLER)}"
    elif form == 3:
        words = f"{rng.choice(PEOPLE)} said the {subj} was {rng.choice(INTENS)} {pos} and {rng.choice(POSITIVE)} {rng.choice(FILLER)}"
    elif form == 4:
        words = f"the {subj} looked {pos} at first but {rng.choice(PEOPLE)} found it {rng.choice(INTENS)} {neg}"
    else:
        words = f"the {subj} was {neg} but the {rng.choice(SUBJECTS)} was {rng.choice(INTENS)} {pos} {rng.choice(FILLER)}"
    return words + " ."


def adversarial(rng: random.Random) -> str:
    # Mostly negative continuations after a neutral or mildly positive start.
    subj = rng.choice(SUBJECTS)
    head = f"the {subj} was {rng.choice(POSITIVE)}" if rng.random() < 0.3 else f"the {subj} was"
    tail = " ".join(rng.choice(NEGATIVE) if rng.random() < 0.7 else rng.choice(["and", "so", "very"])
                    for _ in range(rng.randint(6, 10)))
    return f"{head} {tail} ."


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent
    rng = random.Random(20240601)
    (out / "toy_corpus.txt").write_text("".join(sentence(rng) + "\n" for _ in range(200)))
    rng = random.Random(7)
    (out / "adversarial_corpus.txt").write_text("".join(adversarial(rng) + "\n" for _ in range(120)))
    lex = ["# token\tvalence"]
    lex += [f"{w}\t1" for w in POSITIVE]
    lex += [f"{w}\t-1" for w in NEGATIVE]
    (out / "toy_lexicon.tsv").write_text("\n".join(lex) + "\n")


if __name__ == "__main__":
    main()
