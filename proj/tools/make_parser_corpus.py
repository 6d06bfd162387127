#!/usr/bin/env python3
"""Writes tests/fixtures/parser_corpus.json: model replies with known answers.

Every case is rendered from a value chosen here, so the expected result is the
value itself, not whatever the parser happens to return. Non-answers expect
null. Deterministic for a given --seed.
"""
import argparse
import json
import random
from pathlib import Path

NBSP = " "
THIN = " "


def group(n, sep):
    s = str(n)
    out = []
    while len(s) > 3:
        out.insert(0, s[-3:])
        s = s[:-3]
    out.insert(0, s)
    return sep.join(out)


def usd(rng, v):
    forms = [
        lambda: f"{group(v, ',')} USD",
        lambda: f"{v} USD",
        lambda: f"${group(v, ',')}",
        lambda: f"US$ {group(v, ',')}",
        lambda: f"USD {group(v, ',')}.00",
        lambda: f"{group(v, ',')} dollars",
        lambda: f"The estimated price is {group(v, ',')} USD.",
        lambda: f"Based on the comparable sales, I estimate {group(v, ',')} USD for this home.",
        lambda: f"**{group(v, ',')} USD**",
        lambda: f"Price: ${group(v, ',')}",
    ]
    return rng.choice(forms)()


def usd_magnitude(rng):
    m = rng.choice([1.1, 1.25, 1.5, 2.3, 3.75])
    k = rng.choice([350, 425, 480, 615, 799])
    return rng.choice([(f"{m} million USD", round(m * 1e6)), (f"${k}k", k * 1000), (f"{k}K USD", k * 1000),
                       (f"${m}M", round(m * 1e6))])


def eur(rng, v):
    forms = [
        lambda: f"{group(v, '.')} €",
        lambda: f"{group(v, '.')} EUR",
        lambda: f"€{group(v, '.')}",
        lambda: f"EUR {group(v, '.')},00",
        lambda: f"{group(v, ' ')} EUR",
        lambda: f"{group(v, NBSP)}{NBSP}€",
        lambda: f"{group(v, THIN)} €",
        lambda: f"Der geschätzte Preis beträgt {group(v, '.')} EUR.",
        lambda: f"Estimated value: {group(v, '.')} euros",
        lambda: f"{v} EUR",
    ]
    return rng.choice(forms)()


def eur_magnitude(rng):
    whole = rng.choice([1, 2, 3])
    frac = rng.choice([1, 25, 5, 75])
    text = f"{whole},{frac}"
    value = round((whole + float(f"0.{frac}")) * 1e6)
    return rng.choice([(f"{text} Mio. €", value), (f"{text} Mio EUR", value)])


def cny(rng, v):
    forms = [
        lambda: f"{group(v, ',')} CNY",
        lambda: f"¥{group(v, ',')}",
        lambda: f"RMB {group(v, ',')}",
        lambda: f"{v}元",
        lambda: f"{group(v, ',')} 元",
        lambda: f"￥{v}",
        lambda: f"预计价格为 {group(v, ',')} CNY。",
        lambda: f"{group(v, ',')} yuan",
        lambda: f"The appraised value is {group(v, ',')} CNY.",
        lambda: f"CNY {v}",
    ]
    return rng.choice(forms)()


def cny_magnitude(rng):
    w = rng.choice([185, 320, 450, 560, 1200])
    return rng.choice([(f"{w}万元", w * 10_000), (f"{w}万 CNY", w * 10_000)])


RENDER = {"USD": usd, "EUR": eur, "CNY": cny}
MAGNITUDE = {"USD": usd_magnitude, "EUR": eur_magnitude, "CNY": cny_magnitude}
CODE = {"USD": "USD", "EUR": "EUR", "CNY": "CNY"}
SEP = {"USD": ",", "EUR": ".", "CNY": ","}


def interval_text(rng, cur, lo, hi):
    g = lambda v: group(v, SEP[cur])
    c = CODE[cur]
    forms = [
        lambda: f"{g(lo)} - {g(hi)}",
        lambda: f"{g(lo)} – {g(hi)} {c}",
        lambda: f"{g(lo)} {c} - {g(hi)} {c}",
        lambda: f"between {g(lo)} and {g(hi)} {c}",
        lambda: f"{g(lo)} to {g(hi)} {c}",
        lambda: f"The price is likely in the range {g(lo)} — {g(hi)} {c}.",
        lambda: f"{lo}-{hi}",
        lambda: f"Range: {g(lo)} ~ {g(hi)} {c}",
    ]
    return rng.choice(forms)()


PRICE_NON_ANSWERS = [
    "I cannot determine the price without more information.",
    "As an AI language model, I am unable to appraise real estate.",
    "The property has 3 bedrooms and 2 bathrooms.",
    "It was built in 1995 and renovated in 2008.",
    "The lot size is 7,500 sqft.",
    "Price: N/A",
    "USD",
    "The price is -450,000 USD.",
    "0 USD",
    "Located at 1201 Third Ave, Seattle, this home is close to downtown.",
    "Comparable 7 sold for a price that I cannot recall.",
    "I would need to see the interior condition first.",
    "The house has a grade of 7 and a view rating of 2.",
    "-$350,000",
    "Sorry, there is not enough data on sales from 2014 to estimate this.",
]

INTERVAL_NON_ANSWERS = [
    "I cannot provide a range.",
    "The home has 3 to 4 bedrooms.",
    "Built between 1990 and 2000.",
    "450,000 USD",
    "The interval is unknown.",
    "Between 2 and 3 floors.",
    "From 2014 - 2015 sales data were used.",
    "-100,000 - 200,000 USD",
    "It is somewhere in the middle of the market.",
    "N/A - N/A",
    "0 - 500,000 USD",
    "The view rating ranges from 0 to 4 points.",
    "I am unable to give a price interval.",
    "Lower bound unknown, upper bound unknown.",
    "sqft_living - sqft_lot",
]

VOCAB = ["bedrooms", "bathrooms", "sqft_living", "sqft_lot", "floors", "waterfront", "view", "condition", "grade",
         "yr_built", "lat", "long"]


def feature_cases(rng, n):
    cases = []
    for i in range(n):
        names = rng.sample(VOCAB, 5)
        style = i % 5
        if style == 0:
            text = ", ".join(names)
        elif style == 1:
            text = "\n".join(f"{k + 1}. {x}" for k, x in enumerate(names))
        elif style == 2:
            text = ", ".join(x.upper() for x in names)
        elif style == 3:
            text = "; ".join(f"`{x}`" for x in names)
        else:
            text = ", ".join(names[:3] + ["neighborhood"] + names[3:])
        cases.append({"kind": "features", "currency": "USD", "reply": text, "expect": names})
    return cases


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "parser_corpus.json"))
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    cases = []
    for cur in ("USD", "EUR", "CNY"):
        for i in range(30):
            if i % 6 == 5:
                text, value = MAGNITUDE[cur](rng)
            else:
                value = rng.randrange(90, 4000) * 1000 + rng.choice([0, 0, 500, 250])
                text = RENDER[cur](rng, value)
            cases.append({"kind": "price", "currency": cur, "reply": text, "expect": value})
        for i in range(20):
            lo = rng.randrange(100, 3000) * 1000
            hi = lo + rng.randrange(20, 800) * 1000
            swap = i % 7 == 6
            text = interval_text(rng, cur, hi, lo) if swap else interval_text(rng, cur, lo, hi)
            cases.append({"kind": "interval", "currency": cur, "reply": text, "expect": [lo, hi], "swapped": swap})
    cases += feature_cases(rng, 20)
    for t in PRICE_NON_ANSWERS:
        cases.append({"kind": "price", "currency": "USD", "reply": t, "expect": None})
    for t in INTERVAL_NON_ANSWERS:
        cases.append({"kind": "interval", "currency": "USD", "reply": t, "expect": None})
    for i, c in enumerate(cases):
        c["id"] = i
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"vocabulary": VOCAB, "cases": cases}, ensure_ascii=False, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {out}")


if __name__ == "__main__":
    main()
