#!/usr/bin/env python3
"""Regenerates the synthetic demo dataset under data/demo.

The output is deterministic for a given --seed. Prices are whole dollars so
that prompt text (which prints whole units) and the kNN baseline see exactly
the same numbers.
"""
import argparse
import datetime as dt
import math
import random
import statistics
from pathlib import Path

CENTER = (47.61, -122.33)
STREETS = ["Alder", "Birch", "Cedar", "Dogwood", "Elm", "Fir", "Hemlock", "Juniper", "Laurel", "Maple", "Oak", "Pine"]
KINDS = ["St", "Ave", "Pl", "Way", "Ct"]


def km(a, b):
    la1, lo1, la2, lo2 = map(math.radians, (*a, *b))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 2 * 6371.0088 * math.asin(math.sqrt(h))


def make_rows(rng, n):
    start = dt.date(2014, 5, 1)
    span = (dt.date(2015, 5, 31) - start).days
    rows = []
    for i in range(n):
        lat = round(rng.uniform(47.45, 47.75), 5)
        lon = round(rng.uniform(-122.40, -122.05), 5)
        bedrooms = rng.choice([1, 2, 2, 3, 3, 3, 4, 4, 5, 6])
        bathrooms = max(1.0, round(bedrooms * rng.uniform(0.45, 0.9) * 4) / 4)
        sqft_living = int(round(rng.gauss(500 + 450 * bedrooms, 250), -1))
        sqft_living = max(400, sqft_living)
        sqft_lot = int(round(rng.lognormvariate(8.8, 0.5), -1))
        floors = rng.choice([1.0, 1.0, 1.5, 2.0, 2.0, 3.0])
        waterfront = 1 if rng.random() < 0.02 else 0
        view = rng.choices([0, 1, 2, 3, 4], weights=[80, 6, 7, 4, 3])[0]
        condition = rng.choices([1, 2, 3, 4, 5], weights=[1, 4, 60, 25, 10])[0]
        grade = min(13, max(3, int(round(rng.gauss(5 + sqft_living / 900, 0.8)))))
        yr_built = rng.randint(1900, 2014)
        date = start + dt.timedelta(days=rng.randrange(span + 1))
        dist = km((lat, lon), CENTER)
        months = (date.year - 2014) * 12 + date.month - 5
        log_price = (
            8.75
            + 0.55 * math.log(sqft_living)
            + 0.09 * grade
            + 0.04 * (condition - 3)
            + 0.55 * waterfront
            + 0.06 * view
            - 0.028 * dist
            + 0.004 * months
            + 0.02 * (bathrooms - 2)
            + rng.gauss(0.0, 0.16)
        )
        price = int(round(math.exp(log_price), -2))
        price = max(price, 80_000)
        rows.append(
            {
                "id": str(7_000_000 + i * 13),
                "date": date.strftime("%Y%m%dT000000"),
                "price": str(price),
                "bedrooms": str(bedrooms),
                "bathrooms": f"{bathrooms:g}",
                "sqft_living": str(sqft_living),
                "sqft_lot": str(sqft_lot),
                "floors": f"{floors:g}",
                "waterfront": str(waterfront),
                "view": str(view),
                "condition": str(condition),
                "grade": str(grade),
                "yr_built": str(yr_built),
                "lat": f"{lat:.5f}",
                "long": f"{lon:.5f}",
            }
        )
    # A little realistic dirt: missing values and rows ingest must reject.
    for r in rng.sample(rows, 25):
        r[rng.choice(["sqft_lot", "yr_built", "view"])] = ""
    bad = rng.sample(range(len(rows)), 6)
    rows[bad[0]]["price"] = "-1"
    rows[bad[1]]["price"] = "n/a"
    rows[bad[2]]["lat"] = "91.20000"
    rows[bad[3]]["long"] = ""
    rows[bad[4]]["date"] = "2014-13-45"
    rows[bad[5]]["price"] = "0"
    return rows


def write_csv(rows, path):
    cols = list(rows[0].keys())
    with path.open("w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(r[c] for c in cols) + "\n")


def month_start(d):
    return dt.date(d.year, d.month, 1)


def add_months(d, k):
    m = d.month - 1 + k
    return dt.date(d.year + m // 12, m % 12 + 1, 1)


def valid(r):
    try:
        dt.datetime.strptime(r["date"][:8], "%Y%m%d")
        return float(r["price"]) > 0 and bool(r["long"]) and abs(float(r["lat"])) <= 90
    except ValueError:
        return False


def write_reports(rows, out):
    out.mkdir(parents=True, exist_ok=True)
    for p in out.glob("*.txt"):
        p.unlink()
    good = [r for r in rows if valid(r)]
    by_month = {}
    for r in good:
        d = dt.date(int(r["date"][:4]), int(r["date"][4:6]), 1)
        by_month.setdefault(d, []).append(int(r["price"]))
    months = sorted(by_month)
    for m in [add_months(months[0], -1)] + months[:-1]:
        if m == dt.date(2014, 9, 1):
            continue  # left out on purpose: quarterly report covers it
        prices = by_month.get(m) or by_month[months[0]]
        prev = by_month.get(add_months(m, -1))
        change = (statistics.median(prices) / statistics.median(prev) - 1) * 100 if prev else None
        text = (
            f"Demo City residential market, {m:%B %Y}.\n"
            f"Closed sales: {len(prices)}. Median sale price: {int(statistics.median(prices))} USD. "
            f"Middle half of sales between {int(statistics.quantiles(prices, n=4)[0])} and "
            f"{int(statistics.quantiles(prices, n=4)[2])} USD.\n"
        )
        if change is not None:
            text += f"The median moved {change:+.1f}% against the previous month.\n"
        text += "Homes close to the city center and on the water continue to command a premium.\n"
        (out / f"demo_monthly_{m:%Y-%m-%d}.txt").write_text(text)
    q = dt.date(2014, 7, 1)
    qp = [p for m, v in by_month.items() if q <= m < add_months(q, 3) for p in v]
    (out / f"demo_quarterly_{q:%Y-%m-%d}.txt").write_text(
        f"Demo City residential market, third quarter 2014.\n"
        f"Closed sales: {len(qp)}. Median sale price: {int(statistics.median(qp))} USD.\n"
        "Inventory stayed tight through the summer.\n"
    )


def write_geocode(rows, rng, path):
    lines = ["# key\taddress\tfetched_at (synthetic addresses for the demo dataset)"]
    for r in rows:
        if not valid(r) or rng.random() < 0.1:
            continue  # some coordinates stay unresolved
        num = rng.randint(100, 19999)
        street = f"{rng.choice(STREETS)} {rng.choice(KINDS)}"
        lines.append(f"{r['lat']},{r['long']}\t{num} {street}, Demo City, WA\t1420070400")
    path.write_text("\n".join(lines) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "demo"))
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    rows = make_rows(rng, args.rows)
    write_csv(rows, out / "homes.csv")
    write_reports(rows, out / "reports")
    write_geocode(rows, rng, out / "geocode.tsv")
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
