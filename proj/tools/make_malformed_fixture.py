#!/usr/bin/env python3
"""Writes tests/fixtures/malformed_replies.json: scripted model replies per case.

Each case lists the reply to every step the conversation may reach (price,
price reminder, interval, interval reminder, features) plus what a correct
pipeline must conclude from them. The expectations follow from how each case
was built, one category at a time; they are not read back from the parser.
"""
import argparse
import json
import random
from pathlib import Path

GOOD_FEATURES = "grade, sqft_living, lat, view, bedrooms"

# name -> (replies, expectation)
CATEGORIES = {
    "clean": (
        {"price": "{p} USD", "interval": "{lo} - {hi} USD", "features": GOOD_FEATURES},
        {"price": True, "interval": True, "flagged": False, "features": True, "reprompts": 0},
    ),
    "price fixed by reminder": (
        {"price": "It depends on the interior.", "price_retry": "{p} USD", "interval": "{lo} - {hi} USD",
         "features": GOOD_FEATURES},
        {"price": True, "interval": True, "flagged": False, "features": True, "reprompts": 1},
    ),
    "price never given": (
        {"price": "I cannot say.", "price_retry": "Sorry, no estimate.", "interval": "{lo} - {hi} USD",
         "features": GOOD_FEATURES},
        {"price": False, "interval": True, "flagged": False, "features": True, "reprompts": 1},
    ),
    "negative price": (
        {"price": "-{p} USD", "price_retry": "The price is -{p} USD.", "interval": "{lo} - {hi} USD",
         "features": GOOD_FEATURES},
        {"price": False, "interval": True, "flagged": False, "features": True, "reprompts": 1},
    ),
    "interval never given": (
        {"price": "{p} USD", "interval": "Roughly the same as the estimate.", "interval_retry": "No range available.",
         "features": GOOD_FEATURES},
        {"price": True, "interval": False, "flagged": False, "features": True, "reprompts": 1},
    ),
    "interval fixed by reminder": (
        {"price": "{p} USD", "interval": "{p} USD", "interval_retry": "{lo} - {hi} USD", "features": GOOD_FEATURES},
        {"price": True, "interval": True, "flagged": False, "features": True, "reprompts": 1},
    ),
    "interval inverted": (
        {"price": "{p} USD", "interval": "{hi} - {lo} USD", "features": GOOD_FEATURES},
        {"price": True, "interval": True, "flagged": True, "features": True, "reprompts": 0},
    ),
    "interval misses the point": (
        {"price": "{p} USD", "interval": "{far_lo} - {far_hi} USD", "features": GOOD_FEATURES},
        {"price": True, "interval": True, "flagged": True, "features": True, "reprompts": 0},
    ),
    "years instead of prices": (
        {"price": "{p} USD", "interval": "Sales from 2014 - 2015.", "interval_retry": "2014 to 2015",
         "features": GOOD_FEATURES},
        {"price": True, "interval": False, "flagged": False, "features": True, "reprompts": 1},
    ),
    "unknown features": (
        {"price": "{p} USD", "interval": "{lo} - {hi} USD", "features": "location, neighborhood, school quality"},
        {"price": True, "interval": True, "flagged": False, "features": False, "reprompts": 0},
    ),
    "everything malformed": (
        {"price": "", "price_retry": "N/A", "interval": "", "interval_retry": "N/A", "features": ""},
        {"price": False, "interval": False, "flagged": False, "features": False, "reprompts": 2},
    ),
    "provider down": (
        {"fail": True},
        {"price": False, "interval": False, "flagged": False, "features": False, "reprompts": 0, "failed": True},
    ),
}

COUNTS = {
    "clean": 12,
    "price fixed by reminder": 4,
    "price never given": 4,
    "negative price": 2,
    "interval never given": 4,
    "interval fixed by reminder": 3,
    "interval inverted": 3,
    "interval misses the point": 3,
    "years instead of prices": 2,
    "unknown features": 3,
    "everything malformed": 2,
    "provider down": 2,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "malformed_replies.json"))
    args = ap.parse_args()
    rng = random.Random(args.seed)
    cases = []
    for name, n in COUNTS.items():
        replies, expect = CATEGORIES[name]
        for _ in range(n):
            p = rng.randrange(200, 1500) * 1000
            values = {"p": f"{p:,}", "lo": f"{p - 50_000:,}", "hi": f"{p + 60_000:,}",
                      "far_lo": f"{p + 100_000:,}", "far_hi": f"{p + 200_000:,}"}
            filled = {k: (v.format(**values) if isinstance(v, str) else v) for k, v in replies.items()}
            cases.append({"category": name, "replies": filled, "expect": dict(expect)})
    rng.shuffle(cases)
    totals = {
        "n_total": len(cases),
        "n_valid_price": sum(c["expect"]["price"] for c in cases),
        "n_valid_interval": sum(c["expect"]["interval"] for c in cases),
        "n_flagged_interval": sum(c["expect"]["flagged"] for c in cases),
        "n_valid_features": sum(c["expect"]["features"] for c in cases),
        "n_reprompts": sum(c["expect"]["reprompts"] for c in cases),
        "n_failed": sum(c["expect"].get("failed", False) for c in cases),
    }
    out = Path(args.out)
    out.write_text(json.dumps({"cases": cases, "totals": totals}, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {out}: {totals}")


if __name__ == "__main__":
    main()
