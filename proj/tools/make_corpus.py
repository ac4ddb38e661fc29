#!/usr/bin/env python3
"""Writes a small deterministic English-like corpus for the language-model demo.

Sentences come from a handful of templates over topic word lists, with Zipf-ish
word choice, so bigram statistics carry real signal.
"""
import argparse
import random

TOPICS = {
    "harbor": dict(
        nouns="ship boat harbor dock sailor captain net fish wave tide rope anchor gull lighthouse crew cargo".split(),
        verbs="sails docks pulls throws watches repairs loads carries follows greets".split(),
        adjs="old small wet grey quiet busy salty heavy bright long".split()),
    "market": dict(
        nouns="market stall bread apple cheese baker farmer coin basket price crowd cart honey wine spice cloth".split(),
        verbs="sells buys weighs counts bakes brings offers trades carries wraps".split(),
        adjs="fresh warm sweet cheap crowded ripe golden noisy fine dry".split()),
    "forest": dict(
        nouns="forest tree path fox owl deer river stone moss hunter cabin fire trail leaf branch wolf".split(),
        verbs="crosses hides follows hears finds climbs watches builds gathers tracks".split(),
        adjs="dark green tall cold silent deep wild narrow ancient soft".split()),
    "school": dict(
        nouns="school teacher student book lesson desk chalk map letter question bell pupil garden class note".split(),
        verbs="reads writes answers teaches opens closes asks draws learns copies".split(),
        adjs="new clever careful long short simple hard early quiet kind".split()),
}
DETS = ["the", "the", "the", "a", "a", "this", "that", "every"]
PREPS = ["near", "by", "behind", "across", "under", "beside", "past", "toward"]
ADVS = ["slowly", "quickly", "again", "often", "today", "carefully", "later", "once"]
CONJ = ["and", "but", "while", "because"]
TIMES = ["in the morning", "at night", "before noon", "after the rain", "in winter", "every day"]


def zipf_choice(rng, items, s=1.1):
    weights = [1.0 / (i + 1) ** s for i in range(len(items))]
    return rng.choices(items, weights=weights, k=1)[0]


def noun_phrase(rng, t):
    words = [rng.choice(DETS)]
    if rng.random() < 0.45:
        words.append(zipf_choice(rng, t["adjs"]))
    words.append(zipf_choice(rng, t["nouns"]))
    return words


def clause(rng, t):
    words = noun_phrase(rng, t) + [zipf_choice(rng, t["verbs"])] + noun_phrase(rng, t)
    r = rng.random()
    if r < 0.35:
        words += [rng.choice(PREPS)] + noun_phrase(rng, t)
    elif r < 0.55:
        words.append(rng.choice(ADVS))
    return words


def sentence(rng, t):
    words = clause(rng, t)
    r = rng.random()
    if r < 0.3:
        words += [rng.choice(CONJ)] + clause(rng, t)
    elif r < 0.45:
        words = rng.choice(TIMES).split() + words
    return " ".join(words) + " ."


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--bytes", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    topics = list(TOPICS)
    lines, size = [], 0
    while size < args.bytes:
        t = TOPICS[rng.choice(topics)]
        para = " ".join(sentence(rng, t) for _ in range(rng.randint(3, 7)))
        lines.append(para)
        size += len(para) + 1
    with open(args.out, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
