"""Regenerates smoke_corpus.txt from a small seeded grammar."""
import random

DET = ["the", "a", "every", "some", "this", "that", "no", "each"]
ADJ = ["old", "small", "red", "quiet", "bright", "heavy", "young", "strange",
       "green", "cold", "tall", "soft", "dark", "wild", "empty", "brave"]
NOUN = ["dog", "cat", "man", "woman", "child", "bird", "farmer", "teacher",
        "river", "house", "road", "garden", "tree", "boat", "city", "window",
        "door", "table", "letter", "song", "horse", "king", "sailor", "baker",
        "field", "stone", "bridge", "lamp", "coat", "apple", "book", "village",
        "mountain", "wolf", "owl", "fisher", "doctor", "market", "ship", "well"]
VERB = ["sees", "finds", "likes", "follows", "carries", "watches", "builds",
        "opens", "paints", "hears", "helps", "pushes", "remembers", "visits",
        "sells", "loses", "guards", "crosses", "feeds", "greets"]
IVERB = ["sleeps", "sings", "waits", "runs", "laughs", "falls", "shines", "rests"]
PREP = ["near", "under", "behind", "beside", "across", "over", "inside", "past"]
ADV = ["slowly", "often", "again", "today", "quietly", "soon", "gladly", "rarely"]
CONJ = ["and", "but", "while"]
# Fixed collocations: the second word is predictable from the first.
COMPOUND = [["ice", "cream"], ["post", "office"], ["fire", "truck"],
            ["tea", "pot"], ["rail", "station"]]
IDIOM = [["at", "last"], ["of", "course"], ["in", "the", "end"]]


def zipf(words, rng):
    weights = [1.0 / (i + 1) for i in range(len(words))]
    return rng.choices(words, weights=weights)[0]


def np(rng):
    out = [zipf(DET, rng)]
    if rng.random() < 0.4:
        out.append(zipf(ADJ, rng))
    if rng.random() < 0.1:
        out += rng.choice(COMPOUND)
    else:
        out.append(zipf(NOUN, rng))
    if rng.random() < 0.15:
        out += [zipf(PREP, rng)] + np(rng)
    return out


def clause(rng):
    out = np(rng)
    if rng.random() < 0.3:
        out.append(zipf(IVERB, rng))
    else:
        out += [zipf(VERB, rng)] + np(rng)
    if rng.random() < 0.25:
        out.append(zipf(ADV, rng))
    elif rng.random() < 0.08:
        out += rng.choice(IDIOM)
    return out


def sentence(rng):
    out = clause(rng)
    if rng.random() < 0.2:
        out += [zipf(CONJ, rng)] + clause(rng)
    return out


def main():
    rng = random.Random(20181)
    with open("smoke_corpus.txt", "w") as f:
        for _ in range(400):
            f.write(" ".join(sentence(rng)) + "\n")


if __name__ == "__main__":
    main()
